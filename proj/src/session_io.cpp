#include "trapdoor/session_io.hpp"

#include <json.hpp>

#include <algorithm>
#include <cstdio>
#include <tuple>
#include <sstream>

#include "trapdoor/error.hpp"

namespace trapdoor::detect {

namespace {

using Json = nlohmann::ordered_json;

Json optional_number(const std::optional<double>& v) { return v ? Json(*v) : Json(nullptr); }

Json suite_json(const randomness::SuiteReport& s) {
  Json j;
  j["source"] = to_string(s.source);
  j["alpha"] = s.alpha;
  j["overall"] = to_string(s.overall);
  auto& results = j["results"] = Json::array();
  for (const auto& r : s.results) {
    Json rj;
    rj["test"] = r.test_name;
    rj["statistic"] = r.statistic;
    rj["p_value"] = r.p_value;
    rj["verdict"] = to_string(r.verdict);
    rj["n_bits"] = r.n_bits_used;
    if (!r.reason.empty()) rj["reason"] = r.reason;
    results.push_back(std::move(rj));
  }
  return j;
}

Json confusion_json(const Confusion& c) {
  Json j;
  j["tp"] = c.tp;
  j["fp"] = c.fp;
  j["tn"] = c.tn;
  j["fn"] = c.fn;
  j["detection_rate"] = optional_number(c.detection_rate());
  j["false_positive_rate"] = optional_number(c.false_positive_rate());
  return j;
}

Json finding_json(const Finding& f) {
  Json j;
  j["ts"] = format_timestamp(f.ts);
  j["rule_id"] = f.rule_id;
  j["kind"] = to_string(f.kind);
  j["severity"] = to_string(f.severity);
  j["flow"] = f.flow ? Json(f.flow->to_string()) : Json(nullptr);
  j["packet_index"] = f.packet_index ? Json(*f.packet_index) : Json(nullptr);
  j["evidence"] = Json(f.evidence);
  j["p_value"] = optional_number(f.p_value);
  return j;
}

Json alarm_json(const Alarm& a) {
  Json j;
  j["ts"] = format_timestamp(a.ts);
  j["rule_id"] = "BAYES_ALARM";
  j["kind"] = "ALARM";
  j["severity"] = "HIGH";
  j["flow"] = a.flow.to_string();
  j["packet_index"] = a.packet_index;
  std::string symptoms;
  for (const auto& s : a.symptoms) symptoms += (symptoms.empty() ? "" : ",") + s;
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6f", a.posterior);
  Json ev;
  ev["posterior"] = buf;
  ev["symptoms"] = symptoms;
  ev["window"] = std::to_string(a.window);
  j["evidence"] = ev;
  j["p_value"] = nullptr;
  return j;
}

}  // namespace

std::string format_timestamp(Timestamp ts) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%u.%06u", ts.sec, ts.usec);
  return buf;
}

std::string render_report_json(const SessionReport& r) {
  Json j;
  auto& totals = j["totals"];
  totals["packets_seen"] = r.totals.packets_seen;
  totals["packets_parsed"] = r.totals.packets_parsed;
  totals["packets_skipped"] = r.totals.packets_skipped;
  totals["skipped_by_reason"] = Json(r.totals.skipped_by_reason);

  auto& b = j["baseline"];
  b["learned"] = r.baseline_learned;
  b["t_prime_seconds"] = r.baseline.t_prime_seconds;
  b["d_prime_packets"] = r.baseline.d_prime_packets;
  b["packets_consumed"] = r.baseline.packets_consumed;
  b["duration_seconds"] = r.baseline.duration_seconds;
  b["syn_count"] = r.baseline.syn_count;
  b["reserved_nonzero_rate"] = r.baseline.reserved_nonzero_rate;
  Json combos = Json::object();
  for (auto [combo, count] : r.baseline.flag_combo_counts) combos[TcpFlags(combo).to_string()] = count;
  b["flag_combo_counts"] = combos;
  b["frozen"] = r.baseline.frozen;

  auto& w = j["windows"];
  w["scored"] = r.windows;
  w["skipped_isn"] = r.skipped_isn_windows;
  w["skipped_flag"] = r.skipped_flag_windows;
  w["skipped_ipid"] = r.skipped_ipid_windows;

  Json per_rule = Json::object();
  for (const auto& rule : rule_catalog()) per_rule[std::string(rule.id)] = r.findings_per_rule.at(std::string(rule.id));
  j["findings_per_rule"] = per_rule;
  j["findings_total"] = r.findings.size();

  auto& suites = j["suites"] = Json::array();
  for (const auto& s : r.suites) {
    Json sj;
    sj["flow"] = s.flow.to_string();
    sj["window"] = s.window;
    sj["signatures"] = s.signatures;
    sj["suite"] = suite_json(s.suite);
    suites.push_back(std::move(sj));
  }
  j["key_suite"] = r.key_suite ? suite_json(*r.key_suite) : Json(nullptr);

  auto& trace = j["posterior_trace"] = Json::array();
  for (std::size_t i = 0; i < r.trace.size(); ++i) {
    const auto& p = r.trace[i];
    Json pj;
    pj["window_index"] = i;
    pj["packet_index"] = p.packet_index;
    pj["flow"] = p.flow.to_string();
    pj["flow_window"] = p.window;
    pj["posterior"] = p.posterior;
    pj["findings"] = p.findings;
    pj["symptoms"] = p.symptoms;
    pj["alarm"] = p.alarm;
    trace.push_back(std::move(pj));
  }

  auto& alarms = j["alarms"] = Json::array();
  for (const auto& a : r.alarms) {
    Json aj;
    aj["flow"] = a.flow.to_string();
    aj["window"] = a.window;
    aj["packet_index"] = a.packet_index;
    aj["ts"] = format_timestamp(a.ts);
    aj["posterior"] = a.posterior;
    aj["symptoms"] = a.symptoms;
    alarms.push_back(std::move(aj));
  }

  if (r.metrics) {
    auto& m = j["metrics"];
    m["covert_packets"] = r.metrics->covert_packets;
    m["covert_flows"] = r.metrics->covert_flows;
    m["unlabeled_flows"] = r.metrics->unlabeled_flows;
    m["packets"] = confusion_json(r.metrics->packets);
    m["flows"] = confusion_json(r.metrics->flows);
  } else {
    j["metrics"] = nullptr;
  }
  return j.dump(2) + "\n";
}

std::string render_log(const SessionReport& r) {
  // Alarms slot in after the last finding of their (flow, anchor) position.
  std::ostringstream out;
  std::vector<const Alarm*> pending;
  for (const auto& a : r.alarms) pending.push_back(&a);
  std::sort(pending.begin(), pending.end(), [](const Alarm* a, const Alarm* b) {
    return std::tie(a->flow, a->packet_index) < std::tie(b->flow, b->packet_index);
  });
  std::size_t next_alarm = 0;
  auto flush_until = [&](const std::optional<FlowKey>& flow, std::size_t anchor) {
    while (next_alarm < pending.size()) {
      const Alarm* a = pending[next_alarm];
      const bool before = flow && std::tie(a->flow, a->packet_index) < std::tie(*flow, anchor);
      if (!before) break;
      out << alarm_json(*a).dump() << '\n';
      ++next_alarm;
    }
  };
  for (const auto& f : r.findings) {
    flush_until(f.flow, f.anchor_index);
    out << finding_json(f).dump() << '\n';
  }
  while (next_alarm < pending.size()) out << alarm_json(*pending[next_alarm++]).dump() << '\n';
  return out.str();
}

std::string render_plot_csv(const SessionReport& r) {
  std::ostringstream out;
  out << "window_index,findings,posterior,alarms\n";
  char buf[64];
  for (std::size_t i = 0; i < r.trace.size(); ++i) {
    const auto& p = r.trace[i];
    std::snprintf(buf, sizeof buf, "%.9g", p.posterior);
    out << i << ',' << p.findings << ',' << buf << ',' << (p.alarm ? 1 : 0) << '\n';
  }
  return out.str();
}

std::string render_summary(const std::string& report_json) {
  Json j;
  try {
    j = Json::parse(report_json);
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::ConfigError, std::string("report is not valid JSON: ") + e.what());
  }
  std::ostringstream out;
  char line[160];
  try {
    const auto& t = j.at("totals");
    std::snprintf(line, sizeof line, "packets: %zu seen, %zu parsed, %zu skipped\n",
                  t.at("packets_seen").get<std::size_t>(), t.at("packets_parsed").get<std::size_t>(),
                  t.at("packets_skipped").get<std::size_t>());
    out << line;
    std::snprintf(line, sizeof line, "windows scored: %zu   alarms: %zu\n", j.at("windows").at("scored").get<std::size_t>(),
                  j.at("alarms").size());
    out << line << '\n';

    out << "rule                 count\n";
    out << "-------------------- --------\n";
    for (const auto& [rule, count] : j.at("findings_per_rule").items()) {
      std::snprintf(line, sizeof line, "%-20s %8zu\n", rule.c_str(), count.get<std::size_t>());
      out << line;
    }

    if (!j.at("alarms").empty()) {
      out << "\nalarms\n";
      for (const auto& a : j.at("alarms")) {
        std::string symptoms;
        for (const auto& s : a.at("symptoms")) symptoms += (symptoms.empty() ? "" : ",") + s.get<std::string>();
        std::snprintf(line, sizeof line, "  %-44s posterior %.4f  [%s]\n", a.at("flow").get<std::string>().c_str(),
                      a.at("posterior").get<double>(), symptoms.c_str());
        out << line;
      }
    }

    const auto& m = j.at("metrics");
    if (!m.is_null()) {
      out << "\nmetrics          TP     FP     TN     FN  detection  false-pos\n";
      for (const char* level : {"packets", "flows"}) {
        const auto& c = m.at(level);
        auto rate = [](const Json& v) {
          char b[16];
          if (v.is_null())
            std::snprintf(b, sizeof b, "%9s", "n/a");
          else
            std::snprintf(b, sizeof b, "%9.4f", v.get<double>());
          return std::string(b);
        };
        std::snprintf(line, sizeof line, "%-12s %6zu %6zu %6zu %6zu  %s  %s\n", level, c.at("tp").get<std::size_t>(),
                      c.at("fp").get<std::size_t>(), c.at("tn").get<std::size_t>(), c.at("fn").get<std::size_t>(),
                      rate(c.at("detection_rate")).c_str(), rate(c.at("false_positive_rate")).c_str());
        out << line;
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::ConfigError, std::string("report is missing fields: ") + e.what());
  }
  return out.str();
}

}  // namespace trapdoor::detect
