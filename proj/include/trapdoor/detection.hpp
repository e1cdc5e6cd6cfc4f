#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "trapdoor/config.hpp"
#include "trapdoor/dsa.hpp"
#include "trapdoor/labels.hpp"
#include "trapdoor/packet.hpp"
#include "trapdoor/pcap.hpp"
#include "trapdoor/randomness.hpp"

namespace trapdoor::detect {

// ---------------------------------------------------------------------------
// Rule catalog

enum class RuleKind { Signature, Protocol, Statistical, Subliminal };
enum class Severity { Low, Med, High };

std::string to_string(RuleKind k);
std::string to_string(Severity s);

struct DetectionRule {
  std::string_view id;
  RuleKind kind;
  Severity severity;
  std::string_view description;
};

namespace rule_id {
inline constexpr std::string_view kReservedNonzero = "RESERVED_NONZERO";
inline constexpr std::string_view kIllegalFlagCombo = "ILLEGAL_FLAG_COMBO";
inline constexpr std::string_view kUrgInconsistent = "URG_INCONSISTENT";
inline constexpr std::string_view kIsnLow24Zero = "ISN_LOW24_ZERO";
inline constexpr std::string_view kDataPastEol = "DATA_PAST_EOL";
inline constexpr std::string_view kBadTcpChecksum = "BAD_TCP_CHECKSUM";
inline constexpr std::string_view kFragmentedIp = "FRAGMENTED_IP";
inline constexpr std::string_view kPayloadSignature = "PAYLOAD_SIGNATURE";
inline constexpr std::string_view kIsnDistribution = "ISN_DISTRIBUTION";
inline constexpr std::string_view kFlagDist = "FLAG_DIST";
inline constexpr std::string_view kIpidConstant = "IPID_CONSTANT";
inline constexpr std::string_view kMalformedRecord = "MALFORMED_RECORD";
inline constexpr std::string_view kInvalidSignature = "INVALID_SIGNATURE";
inline constexpr std::string_view kSubliminalNonces = "SUBLIMINAL_NONCES";
inline constexpr std::string_view kNonrandomKey = "NONRANDOM_KEY";
}  // namespace rule_id

const std::vector<DetectionRule>& rule_catalog();
/// Throws InvariantViolation for an unknown id.
const DetectionRule& find_rule(std::string_view id);

using Evidence = std::map<std::string, std::string>;

struct Finding {
  std::string rule_id;
  RuleKind kind = RuleKind::Protocol;
  Severity severity = Severity::Low;
  std::optional<FlowKey> flow;              // absent for session-level findings
  std::optional<std::size_t> packet_index;  // absent for flow-level findings
  Evidence evidence;
  std::optional<double> p_value;  // present iff kind is Statistical or Subliminal
  Timestamp ts;
  /// Packet that anchors the finding in capture order (last packet of the
  /// window for flow-level findings).
  std::size_t anchor_index = 0;
};

/// Fills kind and severity from the catalog. Throws InvariantViolation when
/// evidence is empty or the p-value presence does not match the rule kind.
Finding make_finding(std::string_view rule, std::optional<FlowKey> flow, std::optional<std::size_t> packet_index,
                     Timestamp ts, Evidence evidence, std::optional<double> p_value = std::nullopt);

/// A parsed packet and its position in the capture.
struct IndexedSegment {
  std::size_t index = 0;
  Timestamp ts;
  const TcpSegment* segment = nullptr;
};

// ---------------------------------------------------------------------------
// Per-packet protocol rules

std::vector<Finding> analyze_header(const TcpSegment& seg, std::size_t index, Timestamp ts = {});

/// Pre-defined byte patterns searched in payloads (rule PAYLOAD_SIGNATURE).
std::vector<Finding> match_payload_signatures(const TcpSegment& seg, std::size_t index, Timestamp ts,
                                              const std::vector<std::string>& patterns);

// ---------------------------------------------------------------------------
// Learning period

struct LearningConfig {
  double t_prime_seconds = 3600.0;
  std::size_t d_prime_packets = 1000;
};

struct SessionBaseline {
  double t_prime_seconds = 0.0;
  std::size_t d_prime_packets = 0;
  std::array<std::uint64_t, 256> isn_high_byte_counts{};
  std::map<std::uint8_t, std::uint64_t> flag_combo_counts;
  double reserved_nonzero_rate = 0.0;
  std::size_t packets_consumed = 0;
  std::size_t syn_count = 0;
  double duration_seconds = 0.0;
  bool frozen = false;

  /// Frozen baseline with no learned traffic; FLAG_DIST is skipped against it.
  static SessionBaseline empty_frozen();

  friend bool operator==(const SessionBaseline&, const SessionBaseline&) = default;
};

/// Consumes the stream until t' seconds have elapsed since its first packet
/// or d' packets were seen, whichever comes first, then freezes. Throws
/// EmptyLearningStream.
SessionBaseline learn_baseline(std::span<const IndexedSegment> stream, const LearningConfig& cfg);

// ---------------------------------------------------------------------------
// Statistical scoring of one flow window

struct StatisticalConfig {
  double alpha = randomness::kDefaultAlpha;
  std::size_t min_syn = 64;
  double ipid_constancy = 0.9;
  std::size_t ipid_min_packets = 16;
  std::size_t flag_min_packets = 32;
};

struct StatisticalResult {
  std::vector<Finding> findings;
  std::size_t skipped_isn = 0;
  std::size_t skipped_flag = 0;
  std::size_t skipped_ipid = 0;
  /// Packets that contributed to a rejecting ISN test.
  std::vector<std::size_t> flagged_packets;
};

/// ISN high-byte uniformity (ISN_DISTRIBUTION), flag-combination divergence
/// from the baseline (FLAG_DIST) and IP-ID constancy (IPID_CONSTANT).
/// Throws InvariantViolation when the baseline is not frozen.
StatisticalResult score_statistical(const SessionBaseline& baseline, const FlowKey& flow,
                                    std::span<const IndexedSegment> window, const StatisticalConfig& cfg);

// ---------------------------------------------------------------------------
// Payload signature audit

struct AuditResult {
  std::vector<Finding> findings;
  randomness::SuiteReport nonce_suite;
  std::size_t records = 0;
  std::size_t verified = 0;
  std::vector<std::size_t> carrier_packets;  // packets whose nonces were recovered
};

/// Decodes signature records from the window's payloads and verifies them.
/// With a private key, recovers every nonce and runs the randomness battery
/// over them (SUBLIMINAL_NONCES on NON_RANDOM).
AuditResult audit_signatures(const FlowKey& flow, std::span<const IndexedSegment> window,
                             const dsa::WardenKey* key, double alpha);

struct KeyAudit {
  randomness::SuiteReport suite;
  std::optional<Finding> finding;
};

/// Runs the battery over the private key bytes (KEY_MATERIAL).
KeyAudit audit_key_material(const dsa::WardenKey& key, double alpha, Timestamp ts = {});

// ---------------------------------------------------------------------------
// Bayes scoring

struct Likelihood {
  double given_attack = 0.5;
  double given_benign = 0.5;
};

/// Naive Bayes over the rule ids seen in a window. Symptoms are assumed
/// conditionally independent given the hypothesis.
struct BayesModel {
  double prior_attack = 0.05;
  std::map<std::string, Likelihood> likelihoods;
  double alarm_threshold = 0.9;

  /// Operator-tunable defaults covering every catalog rule.
  static BayesModel defaults();
  /// Throws ConfigError.
  void validate() const;
};

/// prior * prod P(s|A) / (prior * prod P(s|A) + (1-prior) * prod P(s|B)),
/// over present symptoms only. Throws UnknownSymptom.
double bayes_posterior(const BayesModel& model, const std::set<std::string>& symptoms_present);

struct Alarm {
  FlowKey flow;
  std::size_t window = 0;
  std::size_t packet_index = 0;
  Timestamp ts;
  double posterior = 0.0;
  std::vector<std::string> symptoms;
};

/// Appends `candidate` (with its posterior) to sink when posterior exceeds
/// the threshold strictly.
std::optional<Alarm> evaluate_alarm(const BayesModel& model, double posterior, Alarm candidate,
                                    std::vector<Alarm>& sink);

// ---------------------------------------------------------------------------
// Session

struct EngineConfig {
  StatisticalConfig stats;
  LearningConfig learning;
  std::size_t window_size = 256;
  std::size_t baseline_prefix = 0;
  BayesModel bayes = BayesModel::defaults();
  std::vector<std::string> payload_patterns{"/bin/sh", "/bin/bash", "cmd.exe"};

  /// Reads documented keys; unknown keys are rejected. Throws ConfigError.
  static EngineConfig from_kv(const KeyValueFile& kv);
  void validate() const;
};

struct Totals {
  std::size_t packets_seen = 0;
  std::size_t packets_parsed = 0;
  std::size_t packets_skipped = 0;
  std::map<std::string, std::size_t> skipped_by_reason;
};

struct FlowSuite {
  FlowKey flow;
  std::size_t window = 0;
  std::size_t signatures = 0;
  randomness::SuiteReport suite;
};

struct PosteriorPoint {
  std::size_t packet_index = 0;  // last packet of the window
  FlowKey flow;
  std::size_t window = 0;
  double posterior = 0.0;
  std::vector<std::string> symptoms;
  std::size_t findings = 0;
  bool alarm = false;
};

struct Confusion {
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t tn = 0;
  std::size_t fn = 0;

  std::optional<double> detection_rate() const;
  std::optional<double> false_positive_rate() const;
};

struct Metrics {
  Confusion packets;
  Confusion flows;
  std::size_t covert_packets = 0;
  std::size_t covert_flows = 0;
  std::size_t unlabeled_flows = 0;
};

struct SessionReport {
  Totals totals;
  SessionBaseline baseline;
  bool baseline_learned = false;
  std::size_t windows = 0;
  std::size_t skipped_isn_windows = 0;
  std::size_t skipped_flag_windows = 0;
  std::size_t skipped_ipid_windows = 0;
  std::map<std::string, std::size_t> findings_per_rule;
  /// Ordered by (flow, anchor packet, rule); session-level findings first.
  std::vector<Finding> findings;
  std::vector<FlowSuite> suites;
  std::optional<randomness::SuiteReport> key_suite;
  /// Ordered by (packet_index, flow).
  std::vector<PosteriorPoint> trace;
  std::vector<Alarm> alarms;
  std::optional<Metrics> metrics;
};

/// One detection cycle over a capture: parse and store, header rules,
/// flow windows with statistical scoring and signature audit, Bayes alarms,
/// and metrics against labels when given. When no baseline is passed and
/// config.baseline_prefix > 0 the baseline is learned from that prefix.
/// Throws ConfigError.
SessionReport run_session(const CaptureSet& capture, const EngineConfig& config, const dsa::WardenKey* key = nullptr,
                          const GroundTruthLabels* labels = nullptr,
                          const std::optional<SessionBaseline>& baseline = std::nullopt);

}  // namespace trapdoor::detect
