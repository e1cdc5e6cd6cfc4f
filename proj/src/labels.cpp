#include "trapdoor/labels.hpp"

#include <json.hpp>

#include <algorithm>
#include <fstream>
#include <sstream>

#include "trapdoor/error.hpp"

namespace trapdoor {

std::string to_string(CovertKind kind) {
  switch (kind) {
    case CovertKind::TcpSeq: return "TCP_SEQ";
    case CovertKind::TcpReserved: return "TCP_RESERVED";
    case CovertKind::TcpPadding: return "TCP_PADDING";
    case CovertKind::SubliminalDsa: return "SUBLIMINAL_DSA";
    case CovertKind::Hybrid: return "HYBRID";
  }
  return "HYBRID";
}

CovertKind parse_covert_kind(const std::string& text) {
  for (auto k : {CovertKind::TcpSeq, CovertKind::TcpReserved, CovertKind::TcpPadding, CovertKind::SubliminalDsa,
                 CovertKind::Hybrid})
    if (text == to_string(k)) return k;
  throw Error(Errc::ConfigError, "unknown covert kind '" + text + "'");
}

bool GroundTruthLabels::is_carrier(std::size_t packet_index) const {
  return std::binary_search(carriers.begin(), carriers.end(), packet_index);
}

const FlowLabel* GroundTruthLabels::find(const FlowKey& key) const {
  const FlowKey canon = key.canonical();
  for (const auto& f : flows)
    if (f.client.canonical() == canon) return &f;
  return nullptr;
}

std::size_t GroundTruthLabels::covert_flow_count() const {
  return static_cast<std::size_t>(std::count_if(flows.begin(), flows.end(), [](const auto& f) { return f.covert.has_value(); }));
}

std::string GroundTruthLabels::to_json() const {
  nlohmann::ordered_json j;
  j["seed"] = seed;
  j["packet_count"] = packet_count;
  j["learning_prefix"] = learning_prefix;
  auto& flows_j = j["flows"] = nlohmann::ordered_json::array();
  for (const auto& f : flows) {
    nlohmann::ordered_json fj;
    fj["index"] = f.index;
    fj["flow"] = f.client.to_string();
    fj["label"] = f.covert ? "COVERT" : "BENIGN";
    fj["kind"] = f.covert ? nlohmann::ordered_json(to_string(*f.covert)) : nlohmann::ordered_json(nullptr);
    flows_j.push_back(std::move(fj));
  }
  j["carriers"] = carriers;
  return j.dump(2) + "\n";
}

GroundTruthLabels GroundTruthLabels::from_json(const std::string& text) {
  GroundTruthLabels labels;
  try {
    const auto j = nlohmann::json::parse(text);
    labels.seed = j.at("seed").get<std::uint64_t>();
    labels.packet_count = j.at("packet_count").get<std::size_t>();
    labels.learning_prefix = j.value("learning_prefix", std::size_t{0});
    for (const auto& fj : j.at("flows")) {
      FlowLabel f;
      f.index = fj.at("index").get<std::size_t>();
      f.client = FlowKey::parse(fj.at("flow").get<std::string>());
      const auto label = fj.at("label").get<std::string>();
      if (label == "COVERT")
        f.covert = parse_covert_kind(fj.at("kind").get<std::string>());
      else if (label != "BENIGN")
        throw Error(Errc::ConfigError, "flow label must be BENIGN or COVERT");
      labels.flows.push_back(f);
    }
    labels.carriers = j.at("carriers").get<std::vector<std::size_t>>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::ConfigError, std::string("labels: ") + e.what());
  }
  std::sort(labels.carriers.begin(), labels.carriers.end());
  return labels;
}

GroundTruthLabels GroundTruthLabels::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::IoError, "cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return from_json(buf.str());
}

void GroundTruthLabels::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error(Errc::IoError, "cannot write " + path.string());
  out << to_json();
}

}  // namespace trapdoor
