#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "trapdoor/packet.hpp"

namespace trapdoor {

enum class CovertKind { TcpSeq, TcpReserved, TcpPadding, SubliminalDsa, Hybrid };

std::string to_string(CovertKind kind);
/// Accepts TCP_SEQ, TCP_RESERVED, TCP_PADDING, SUBLIMINAL_DSA, HYBRID.
CovertKind parse_covert_kind(const std::string& text);

struct FlowLabel {
  std::size_t index = 0;
  FlowKey client;                     // client -> server direction
  std::optional<CovertKind> covert;  // empty for BENIGN
};

/// Simulator ground truth: one label per generated flow plus the sorted
/// indices of packets that carry covert bits.
struct GroundTruthLabels {
  std::uint64_t seed = 0;
  std::size_t packet_count = 0;
  std::size_t learning_prefix = 0;  // leading packets drawn from benign flows only
  std::vector<FlowLabel> flows;
  std::vector<std::size_t> carriers;

  bool is_carrier(std::size_t packet_index) const;
  /// Label for either direction of a flow, or nullptr.
  const FlowLabel* find(const FlowKey& key) const;
  std::size_t covert_flow_count() const;

  std::string to_json() const;
  static GroundTruthLabels from_json(const std::string& text);
  static GroundTruthLabels load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;
};

}  // namespace trapdoor
