#pragma once

#include <optional>
#include <string>
#include <vector>

#include "trapdoor/config.hpp"
#include "trapdoor/covert_tcp.hpp"
#include "trapdoor/dsa.hpp"
#include "trapdoor/labels.hpp"
#include "trapdoor/pcap.hpp"

namespace trapdoor::sim {

/// Scenario file keys (all optional):
///   seed, n_flows, packets_per_flow, covert_flow_ratio,
///   covert_kinds            comma list cycled over the covert flows
///   message                 repeatable; UTF-8 text
///   message_hex             repeatable; hex bytes
///   hybrid_fields           TCP carrier fields of HYBRID flows (default SEQ)
///   pad_bytes               padding bytes per covert SYN
///   complete_handshake      covert SYNs answered with SYN-ACK and ACK
///   link_type               raw | ethernet
///   start_time, step_us     fixed inter-arrival clock
///   dsa_params              "toy" or "L,N"
///   key_mode                system | covert (key pair derived from the corpus)
///   records_per_packet      signature records per data packet
///   hybrid_data_packets     data packets per HYBRID connection
///   benign_signature_ratio  share of benign flows carrying honestly signed records
///   anomaly_ratio           share of benign data packets sent with SYN|FIN
///   learning_packets        leading packets drawn from benign flows only
struct ScenarioConfig {
  std::uint64_t seed = 1;
  std::size_t n_flows = 10;
  std::size_t packets_per_flow = 40;
  double covert_flow_ratio = 0.0;
  std::vector<CovertKind> covert_kinds{CovertKind::Hybrid};
  std::vector<Bytes> messages;
  covert::FieldSet hybrid_fields = covert::FieldSet::SEQ;
  std::size_t pad_bytes = 4;
  bool complete_handshake = false;
  std::uint32_t link_type = kLinkTypeRaw;
  std::uint32_t start_time = 1'700'000'000;
  std::uint32_t step_us = 1000;
  dsa::ParamSpec dsa_params = dsa::ParamSpec::standard(1024, 160);
  dsa::KeyProvenance key_mode = dsa::KeyProvenance::SystemGenerated;
  std::size_t records_per_packet = 4;
  std::size_t hybrid_data_packets = 2;
  double benign_signature_ratio = 0.0;
  double anomaly_ratio = 0.0;
  std::size_t learning_packets = 0;

  static ScenarioConfig from_kv(const KeyValueFile& kv);
  /// Throws ConfigError.
  void validate() const;
  /// Built-in ASCII corpus used when no message is configured.
  static std::vector<Bytes> default_corpus();
};

struct Simulation {
  CaptureSet capture;
  GroundTruthLabels labels;
  /// Signing key with x escrowed to the warden; present when any flow
  /// carries signature records.
  std::optional<dsa::WardenKey> key;
};

/// ⌊ratio·n⌋ covert flows, chosen by a seeded shuffle. Deterministic in cfg.
Simulation generate_traffic(const ScenarioConfig& cfg);

/// Indices of the covert flows for a scenario, ascending.
std::vector<std::size_t> select_covert_flows(std::uint64_t seed, std::size_t n_flows, double ratio);

}  // namespace trapdoor::sim
