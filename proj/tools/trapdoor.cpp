// trapdoor: craft labelled covert-channel captures, run the detection engine
// over them, and summarise the resulting reports.
#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include "trapdoor/config.hpp"
#include "trapdoor/detection.hpp"
#include "trapdoor/error.hpp"
#include "trapdoor/labels.hpp"
#include "trapdoor/pcap.hpp"
#include "trapdoor/session_io.hpp"
#include "trapdoor/simulator.hpp"

namespace {

using namespace trapdoor;

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(Errc::IoError, "cannot open " + path + " for writing");
  out << text;
  if (!out.flush()) throw Error(Errc::IoError, "write failed: " + path);
}

std::string read_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::IoError, "cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

struct CraftArgs {
  std::string scenario, out, labels, key_out;
};

struct DetectArgs {
  std::string in, warden_key, labels, config, report, log, plot;
  std::optional<std::size_t> baseline_prefix;
};

int run_craft(const CraftArgs& a) {
  const auto cfg = sim::ScenarioConfig::from_kv(KeyValueFile::load(a.scenario));
  const auto result = sim::generate_traffic(cfg);
  write_capture(result.capture, a.out);
  result.labels.save(a.labels);
  if (!a.key_out.empty()) {
    if (!result.key) throw Error(Errc::ConfigError, "scenario has no signing flows, so there is no key to write");
    dsa::write_warden_key(*result.key, a.key_out);
  }
  std::cerr << "crafted " << result.capture.records.size() << " packets, " << result.labels.covert_flow_count()
            << " covert of " << result.labels.flows.size() << " flows\n";
  return 0;
}

int run_detect(const DetectArgs& a) {
  auto config = detect::EngineConfig::from_kv(KeyValueFile::load(a.config));
  if (a.baseline_prefix) config.baseline_prefix = *a.baseline_prefix;
  config.validate();
  const CaptureSet capture = read_capture(a.in);
  std::optional<dsa::WardenKey> key;
  if (!a.warden_key.empty()) key = dsa::read_warden_key(a.warden_key);
  std::optional<GroundTruthLabels> labels;
  if (!a.labels.empty()) labels = GroundTruthLabels::load(a.labels);

  const auto report = detect::run_session(capture, config, key ? &*key : nullptr, labels ? &*labels : nullptr);
  write_text(a.report, detect::render_report_json(report));
  write_text(a.log, detect::render_log(report));
  write_text(a.plot, detect::render_plot_csv(report));
  std::cerr << report.findings.size() << " findings, " << report.alarms.size() << " alarms\n";
  return report.alarms.empty() ? 0 : 2;
}

int summarize(const std::string& path) {
  std::cout << detect::render_summary(read_text(path));
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Hybrid covert channel toolkit: craft, detect, report"};
  app.require_subcommand(1);

  CraftArgs ca;
  auto* craft_cmd = app.add_subcommand("craft", "Generate a labelled capture from a scenario file");
  craft_cmd->add_option("--scenario", ca.scenario, "Scenario key-value file")->required();
  craft_cmd->add_option("--out", ca.out, "Output pcap")->required();
  craft_cmd->add_option("--labels", ca.labels, "Output ground-truth labels (JSON)")->required();
  craft_cmd->add_option("--key-out", ca.key_out, "Write the escrowed signing key for the warden");

  DetectArgs da;
  auto* detect_cmd = app.add_subcommand("detect", "Run the detection engine over a capture");
  detect_cmd->add_option("--in", da.in, "Input pcap")->required();
  detect_cmd->add_option("--warden-key", da.warden_key, "Escrowed DSA key file");
  detect_cmd->add_option("--labels", da.labels, "Ground-truth labels for metrics");
  detect_cmd->add_option("--baseline-prefix", da.baseline_prefix, "Learn the baseline from the first N packets");
  detect_cmd->add_option("--config", da.config, "Engine key-value file")->required();
  detect_cmd->add_option("--report", da.report, "Output report (JSON)")->required();
  detect_cmd->add_option("--log", da.log, "Output findings log (JSONL)")->required();
  detect_cmd->add_option("--plot", da.plot, "Output posterior trace (CSV)")->required();

  std::string report_path;
  auto* report_cmd = app.add_subcommand("report", "Print a summary table for a report");
  report_cmd->add_option("--report", report_path, "Report JSON from detect")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: usage: " << e.what() << '\n';
    return 1;
  }

  try {
    if (*craft_cmd) return run_craft(ca);
    if (*detect_cmd) return run_detect(da);
    return summarize(report_path);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
  }
  return 1;
}
