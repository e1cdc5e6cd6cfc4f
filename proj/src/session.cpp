#include <algorithm>
#include <set>
#include <sstream>

#include "trapdoor/detection.hpp"
#include "trapdoor/error.hpp"

namespace trapdoor::detect {

namespace {

std::pair<double, double> parse_likelihood(const std::string& key, const std::string& value) {
  const auto comma = value.find(',');
  if (comma == std::string::npos) throw Error(Errc::ConfigError, key + " must be '<P(s|attack)>,<P(s|benign)>'");
  try {
    return {std::stod(value.substr(0, comma)), std::stod(value.substr(comma + 1))};
  } catch (const std::exception&) {
    throw Error(Errc::ConfigError, key + " must be '<P(s|attack)>,<P(s|benign)>'");
  }
}

struct FlowState {
  std::size_t windows_closed = 0;
  std::vector<IndexedSegment> entries;
  std::vector<Finding> packet_findings;
};

class SessionRunner {
 public:
  SessionRunner(const EngineConfig& config, const dsa::WardenKey* key, std::size_t n_packets)
      : config_(config), key_(key), flagged_(n_packets, false) {}

  SessionReport& report() { return report_; }
  std::vector<bool>& flagged() { return flagged_; }

  void add(const IndexedSegment& item) {
    const TcpSegment& seg = *item.segment;
    FlowState& state = flows_[flow_key(seg)];
    auto header = analyze_header(seg, item.index, item.ts);
    auto patterns = match_payload_signatures(seg, item.index, item.ts, config_.payload_patterns);
    for (auto* list : {&header, &patterns})
      for (auto& f : *list) {
        flagged_[item.index] = true;
        state.packet_findings.push_back(std::move(f));
      }
    state.entries.push_back(item);
    if (state.entries.size() >= config_.window_size) close(flow_key(seg), state);
  }

  void finish() {
    for (auto& [flow, state] : flows_)
      if (!state.entries.empty()) close(flow, state);
  }

  std::set<FlowKey> canonical_flows() const {
    std::set<FlowKey> out;
    for (const auto& [flow, state] : flows_) out.insert(flow.canonical());
    return out;
  }

 private:
  void close(const FlowKey& flow, FlowState& state) {
    const std::size_t window = state.windows_closed++;
    const auto& entries = state.entries;
    std::vector<Finding> findings = std::move(state.packet_findings);

    StatisticalResult stats = score_statistical(report_.baseline, flow, entries, config_.stats);
    report_.skipped_isn_windows += stats.skipped_isn;
    report_.skipped_flag_windows += stats.skipped_flag;
    report_.skipped_ipid_windows += stats.skipped_ipid;
    for (auto i : stats.flagged_packets) flagged_[i] = true;
    std::move(stats.findings.begin(), stats.findings.end(), std::back_inserter(findings));

    AuditResult audit = audit_signatures(flow, entries, key_, config_.stats.alpha);
    for (auto i : audit.carrier_packets) flagged_[i] = true;
    std::move(audit.findings.begin(), audit.findings.end(), std::back_inserter(findings));
    if (audit.records > 0) report_.suites.push_back({flow, window, audit.verified, audit.nonce_suite});

    std::set<std::string> symptoms;
    for (const auto& f : findings) symptoms.insert(f.rule_id);
    const double posterior = bayes_posterior(config_.bayes, symptoms);

    PosteriorPoint point;
    point.packet_index = entries.back().index;
    point.flow = flow;
    point.window = window;
    point.posterior = posterior;
    point.symptoms.assign(symptoms.begin(), symptoms.end());
    point.findings = findings.size();

    Alarm candidate;
    candidate.flow = flow;
    candidate.window = window;
    candidate.packet_index = point.packet_index;
    candidate.ts = entries.back().ts;
    candidate.symptoms = point.symptoms;
    point.alarm = evaluate_alarm(config_.bayes, posterior, candidate, report_.alarms).has_value();

    report_.trace.push_back(std::move(point));
    ++report_.windows;
    std::move(findings.begin(), findings.end(), std::back_inserter(report_.findings));
    state.entries.clear();
    state.packet_findings.clear();
  }

  const EngineConfig& config_;
  const dsa::WardenKey* key_;
  SessionReport report_;
  std::map<FlowKey, FlowState> flows_;
  std::vector<bool> flagged_;
};

Confusion tally(const std::vector<std::pair<bool, bool>>& truth_and_flag) {
  Confusion c;
  for (auto [truth, flag] : truth_and_flag) {
    if (truth)
      (flag ? c.tp : c.fn)++;
    else
      (flag ? c.fp : c.tn)++;
  }
  return c;
}

}  // namespace

std::optional<double> Confusion::detection_rate() const {
  if (tp + fn == 0) return std::nullopt;
  return static_cast<double>(tp) / static_cast<double>(tp + fn);
}

std::optional<double> Confusion::false_positive_rate() const {
  if (fp + tn == 0) return std::nullopt;
  return static_cast<double>(fp) / static_cast<double>(fp + tn);
}

EngineConfig EngineConfig::from_kv(const KeyValueFile& kv) {
  kv.reject_unknown({"alpha", "window_size", "min_syn", "ipid_constancy", "ipid_min_packets", "flag_min_packets",
                     "learning_t_prime", "learning_d_prime", "baseline_prefix", "prior_attack", "alarm_threshold",
                     "likelihood.", "signature_pattern"});
  EngineConfig c;
  c.stats.alpha = kv.get_double("alpha", c.stats.alpha);
  c.stats.min_syn = kv.get_u64("min_syn", c.stats.min_syn);
  c.stats.ipid_constancy = kv.get_double("ipid_constancy", c.stats.ipid_constancy);
  c.stats.ipid_min_packets = kv.get_u64("ipid_min_packets", c.stats.ipid_min_packets);
  c.stats.flag_min_packets = kv.get_u64("flag_min_packets", c.stats.flag_min_packets);
  c.window_size = kv.get_u64("window_size", c.window_size);
  c.learning.t_prime_seconds = kv.get_double("learning_t_prime", c.learning.t_prime_seconds);
  c.learning.d_prime_packets = kv.get_u64("learning_d_prime", c.learning.d_prime_packets);
  c.baseline_prefix = kv.get_u64("baseline_prefix", c.baseline_prefix);
  c.bayes.prior_attack = kv.get_double("prior_attack", c.bayes.prior_attack);
  c.bayes.alarm_threshold = kv.get_double("alarm_threshold", c.bayes.alarm_threshold);
  for (const auto& key : kv.keys()) {
    if (key.rfind("likelihood.", 0) != 0) continue;
    const std::string rule = key.substr(std::string("likelihood.").size());
    const bool known = std::any_of(rule_catalog().begin(), rule_catalog().end(),
                                   [&](const DetectionRule& r) { return r.id == rule; });
    if (!known) throw Error(Errc::ConfigError, kv.origin() + ": no rule named " + rule);
    auto [a, b] = parse_likelihood(key, *kv.get(key));
    c.bayes.likelihoods[rule] = {a, b};
  }
  if (kv.contains("signature_pattern")) c.payload_patterns = kv.get_all("signature_pattern");
  c.validate();
  return c;
}

void EngineConfig::validate() const {
  if (!(stats.alpha > 0.0 && stats.alpha < 1.0)) throw Error(Errc::ConfigError, "alpha must be in (0, 1)");
  if (window_size == 0) throw Error(Errc::ConfigError, "window_size must be positive");
  if (!(stats.ipid_constancy > 0.0 && stats.ipid_constancy <= 1.0))
    throw Error(Errc::ConfigError, "ipid_constancy must be in (0, 1]");
  if (learning.d_prime_packets == 0) throw Error(Errc::ConfigError, "learning_d_prime must be positive");
  if (!(learning.t_prime_seconds > 0.0)) throw Error(Errc::ConfigError, "learning_t_prime must be positive");
  bayes.validate();
  for (const auto& rule : rule_catalog())
    if (!bayes.likelihoods.count(std::string(rule.id)))
      throw Error(Errc::ConfigError, "no likelihood for rule " + std::string(rule.id));
}

SessionReport run_session(const CaptureSet& capture, const EngineConfig& config, const dsa::WardenKey* key,
                          const GroundTruthLabels* labels, const std::optional<SessionBaseline>& baseline) {
  try {
    config.validate();
  } catch (const Error& e) {
    throw Error(Errc::ConfigError, e.what());
  }
  const std::size_t n = capture.records.size();
  if (labels && labels->packet_count != n)
    throw Error(Errc::ConfigError, "labels describe " + std::to_string(labels->packet_count) + " packets, capture has " +
                                       std::to_string(n));

  // Store: every record is parsed from its raw bytes; failures are counted.
  std::vector<std::optional<TcpSegment>> parsed(n);
  Totals totals;
  totals.packets_seen = n;
  for (std::size_t i = 0; i < n; ++i) {
    try {
      parsed[i] = parse_packet(capture.records[i].raw, capture.link_type);
      ++totals.packets_parsed;
    } catch (const Error& e) {
      ++totals.packets_skipped;
      ++totals.skipped_by_reason[std::string(to_string(e.code()))];
    }
  }
  std::vector<IndexedSegment> stream;
  stream.reserve(totals.packets_parsed);
  for (std::size_t i = 0; i < n; ++i)
    if (parsed[i]) stream.push_back({i, capture.records[i].ts, &*parsed[i]});

  SessionRunner runner(config, key, n);
  SessionReport& report = runner.report();
  report.totals = totals;
  for (const auto& rule : rule_catalog()) report.findings_per_rule[std::string(rule.id)] = 0;

  if (baseline) {
    if (!baseline->frozen) throw Error(Errc::ConfigError, "supplied baseline is not frozen");
    report.baseline = *baseline;
    report.baseline_learned = baseline->packets_consumed > 0;
  } else if (config.baseline_prefix > 0) {
    auto prefix_end = std::find_if(stream.begin(), stream.end(),
                                   [&](const IndexedSegment& s) { return s.index >= config.baseline_prefix; });
    try {
      report.baseline = learn_baseline({stream.begin(), prefix_end}, config.learning);
      report.baseline_learned = true;
    } catch (const Error& e) {
      if (e.code() != Errc::EmptyLearningStream) throw;
      report.baseline = SessionBaseline::empty_frozen();
    }
  } else {
    report.baseline = SessionBaseline::empty_frozen();
  }

  for (const auto& item : stream) runner.add(item);
  runner.finish();

  if (key) {
    const Timestamp ts = n > 0 ? capture.records.front().ts : Timestamp{};
    KeyAudit ka = audit_key_material(*key, config.stats.alpha, ts);
    if (key->x) report.key_suite = ka.suite;
    if (ka.finding) report.findings.push_back(std::move(*ka.finding));
  }

  std::stable_sort(report.findings.begin(), report.findings.end(), [](const Finding& a, const Finding& b) {
    if (a.flow.has_value() != b.flow.has_value()) return !a.flow.has_value();
    if (a.flow && *a.flow != *b.flow) return *a.flow < *b.flow;
    if (a.anchor_index != b.anchor_index) return a.anchor_index < b.anchor_index;
    if (a.packet_index.has_value() != b.packet_index.has_value()) return a.packet_index.has_value();
    return a.rule_id < b.rule_id;
  });
  for (const auto& f : report.findings) ++report.findings_per_rule[f.rule_id];

  auto by_time = [](const auto& a, const auto& b) {
    return std::tie(a.packet_index, a.flow) < std::tie(b.packet_index, b.flow);
  };
  std::sort(report.trace.begin(), report.trace.end(), by_time);
  std::sort(report.alarms.begin(), report.alarms.end(), by_time);
  std::sort(report.suites.begin(), report.suites.end(),
            [](const FlowSuite& a, const FlowSuite& b) { return std::tie(a.flow, a.window) < std::tie(b.flow, b.window); });

  if (labels) {
    Metrics m;
    std::vector<std::pair<bool, bool>> packets(n);
    for (std::size_t i = 0; i < n; ++i) packets[i] = {labels->is_carrier(i), runner.flagged()[i]};
    m.packets = tally(packets);
    m.covert_packets = labels->carriers.size();

    std::set<FlowKey> alarmed;
    for (const auto& a : report.alarms) alarmed.insert(a.flow.canonical());
    std::vector<std::pair<bool, bool>> flows;
    std::set<FlowKey> labelled;
    for (const auto& f : labels->flows) {
      flows.push_back({f.covert.has_value(), alarmed.count(f.client.canonical()) != 0});
      labelled.insert(f.client.canonical());
    }
    m.flows = tally(flows);
    m.covert_flows = labels->covert_flow_count();
    for (const auto& flow : runner.canonical_flows()) m.unlabeled_flows += labelled.count(flow) == 0;
    report.metrics = m;
  }
  return report;
}

}  // namespace trapdoor::detect
