#include <algorithm>
#include <cstdio>

#include "trapdoor/detection.hpp"
#include "trapdoor/error.hpp"

namespace trapdoor::detect {

namespace {

std::string hex(std::uint32_t v, int width) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "0x%0*X", width, v);
  return buf;
}

}  // namespace

std::string to_string(RuleKind k) {
  switch (k) {
    case RuleKind::Signature: return "SIGNATURE";
    case RuleKind::Protocol: return "PROTOCOL";
    case RuleKind::Statistical: return "STATISTICAL";
    case RuleKind::Subliminal: return "SUBLIMINAL";
  }
  return "PROTOCOL";
}

std::string to_string(Severity s) {
  switch (s) {
    case Severity::Low: return "LOW";
    case Severity::Med: return "MED";
    case Severity::High: return "HIGH";
  }
  return "LOW";
}

const std::vector<DetectionRule>& rule_catalog() {
  using namespace rule_id;
  static const std::vector<DetectionRule> catalog{
      {kReservedNonzero, RuleKind::Protocol, Severity::Med, "TCP reserved bits set"},
      {kIllegalFlagCombo, RuleKind::Protocol, Severity::Med, "SYN+FIN, no flags, or FIN without ACK outside RST"},
      {kUrgInconsistent, RuleKind::Protocol, Severity::Low, "URG flag and urgent pointer disagree"},
      {kIsnLow24Zero, RuleKind::Protocol, Severity::High, "SYN whose sequence number has zero low 24 bits"},
      {kDataPastEol, RuleKind::Protocol, Severity::High, "nonzero option bytes after End-of-Option-List"},
      {kBadTcpChecksum, RuleKind::Protocol, Severity::Low, "TCP checksum does not verify"},
      {kFragmentedIp, RuleKind::Protocol, Severity::Low, "IPv4 fragment carrying TCP"},
      {kPayloadSignature, RuleKind::Signature, Severity::Med, "payload contains a pre-defined pattern"},
      {kIsnDistribution, RuleKind::Statistical, Severity::High, "ISN high bytes deviate from uniform"},
      {kFlagDist, RuleKind::Statistical, Severity::Med, "flag combinations deviate from the learned baseline"},
      {kIpidConstant, RuleKind::Statistical, Severity::Med, "IP identification nearly constant across a flow"},
      {kMalformedRecord, RuleKind::Protocol, Severity::Low, "signature record cannot be decoded"},
      {kInvalidSignature, RuleKind::Protocol, Severity::Med, "signature record does not verify"},
      {kSubliminalNonces, RuleKind::Subliminal, Severity::High, "recovered signature nonces fail the randomness battery"},
      {kNonrandomKey, RuleKind::Subliminal, Severity::High, "signing key material fails the randomness battery"},
  };
  return catalog;
}

const DetectionRule& find_rule(std::string_view id) {
  for (const auto& r : rule_catalog())
    if (r.id == id) return r;
  throw Error(Errc::InvariantViolation, "unknown rule id " + std::string(id));
}

Finding make_finding(std::string_view rule, std::optional<FlowKey> flow, std::optional<std::size_t> packet_index,
                     Timestamp ts, Evidence evidence, std::optional<double> p_value) {
  const DetectionRule& r = find_rule(rule);
  if (evidence.empty()) throw Error(Errc::InvariantViolation, "finding evidence must be non-empty");
  const bool needs_p = r.kind == RuleKind::Statistical || r.kind == RuleKind::Subliminal;
  if (needs_p != p_value.has_value())
    throw Error(Errc::InvariantViolation, "p_value presence must match rule kind for " + std::string(rule));
  Finding f;
  f.rule_id = std::string(r.id);
  f.kind = r.kind;
  f.severity = r.severity;
  f.flow = flow;
  f.packet_index = packet_index;
  f.evidence = std::move(evidence);
  f.p_value = p_value;
  f.ts = ts;
  f.anchor_index = packet_index.value_or(0);
  return f;
}

std::vector<Finding> analyze_header(const TcpSegment& seg, std::size_t index, Timestamp ts) {
  using namespace rule_id;
  std::vector<Finding> out;
  const FlowKey flow = flow_key(seg);
  const auto& tcp = seg.tcp;
  const TcpFlags flags = tcp.flags;
  auto emit = [&](std::string_view rule, Evidence ev) { out.push_back(make_finding(rule, flow, index, ts, std::move(ev))); };

  if (tcp.reserved != 0) emit(kReservedNonzero, {{"reserved", std::to_string(tcp.reserved)}});

  const bool syn = flags.has(TcpFlags::SYN);
  const bool fin = flags.has(TcpFlags::FIN);
  if (syn && fin)
    emit(kIllegalFlagCombo, {{"flags", flags.to_string()}, {"reason", "SYN and FIN"}});
  else if (flags.empty())
    emit(kIllegalFlagCombo, {{"flags", flags.to_string()}, {"reason", "no flags"}});
  else if (fin && !flags.has(TcpFlags::ACK) && !flags.has(TcpFlags::RST))
    emit(kIllegalFlagCombo, {{"flags", flags.to_string()}, {"reason", "FIN without ACK"}});

  const bool urg = flags.has(TcpFlags::URG);
  if (urg != (tcp.urgent_pointer != 0))
    emit(kUrgInconsistent, {{"flags", flags.to_string()}, {"urgent_pointer", std::to_string(tcp.urgent_pointer)}});

  if (syn && (tcp.seq_number & 0x00FFFFFF) == 0)
    emit(kIsnLow24Zero, {{"seq_number", hex(tcp.seq_number, 8)}, {"high_byte", hex(tcp.seq_number >> 24, 2)}});

  const auto& opts = tcp.options;
  for (std::size_t i = 0; i < opts.size();) {
    const std::uint8_t kind = opts[i];
    if (kind == 0) {
      const auto nonzero = std::count_if(opts.begin() + static_cast<std::ptrdiff_t>(i) + 1, opts.end(),
                                         [](std::uint8_t b) { return b != 0; });
      if (nonzero > 0)
        emit(kDataPastEol, {{"eol_offset", std::to_string(i)},
                            {"trailing_bytes", std::to_string(opts.size() - i - 1)},
                            {"nonzero_bytes", std::to_string(nonzero)}});
      break;
    }
    if (kind == 1) {
      ++i;
      continue;
    }
    if (i + 1 >= opts.size() || opts[i + 1] < 2) break;
    i += opts[i + 1];
  }

  if (!seg.tcp_checksum_valid)
    emit(kBadTcpChecksum, {{"checksum", hex(tcp.checksum, 4)}, {"expected", hex(compute_tcp_checksum(seg), 4)}});

  if (seg.ip.is_fragment())
    emit(kFragmentedIp, {{"more_fragments", seg.ip.more_fragments() ? "1" : "0"},
                         {"fragment_offset", std::to_string(seg.ip.fragment_offset())}});
  return out;
}

std::vector<Finding> match_payload_signatures(const TcpSegment& seg, std::size_t index, Timestamp ts,
                                              const std::vector<std::string>& patterns) {
  std::vector<Finding> out;
  const auto& payload = seg.payload;
  for (const auto& pattern : patterns) {
    if (pattern.empty() || pattern.size() > payload.size()) continue;
    auto it = std::search(payload.begin(), payload.end(), pattern.begin(), pattern.end(),
                          [](std::uint8_t a, char b) { return a == static_cast<std::uint8_t>(b); });
    if (it == payload.end()) continue;
    out.push_back(make_finding(rule_id::kPayloadSignature, flow_key(seg), index, ts,
                               {{"pattern", pattern}, {"offset", std::to_string(it - payload.begin())}}));
  }
  return out;
}

}  // namespace trapdoor::detect
