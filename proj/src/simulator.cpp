#include "trapdoor/simulator.hpp"

#include <algorithm>
#include <cmath>

#include "trapdoor/error.hpp"
#include "trapdoor/rng.hpp"

namespace trapdoor::sim {

namespace {

constexpr std::uint16_t kWindow = 64240;
const Bytes kMssOption{0x02, 0x04, 0x05, 0xB4};
constexpr std::array<std::uint16_t, 4> kServicePorts{80, 443, 8080, 22};

Bytes parse_hex(const std::string& text) {
  Bytes out;
  int hi = -1;
  for (char c : text) {
    if (c == ' ' || c == ':') continue;
    int v;
    if (c >= '0' && c <= '9')
      v = c - '0';
    else if (c >= 'a' && c <= 'f')
      v = c - 'a' + 10;
    else if (c >= 'A' && c <= 'F')
      v = c - 'A' + 10;
    else
      throw Error(Errc::ConfigError, "bad hex digit in message_hex");
    if (hi < 0) {
      hi = v;
    } else {
      out.push_back(static_cast<std::uint8_t>(hi << 4 | v));
      hi = -1;
    }
  }
  if (hi >= 0) throw Error(Errc::ConfigError, "odd number of hex digits in message_hex");
  return out;
}

std::uint32_t benign_isn(Rng& rng) {
  std::uint32_t isn;
  do {
    isn = static_cast<std::uint32_t>(rng.next() >> 32);
  } while ((isn & 0x00FFFFFF) == 0);
  return isn;
}

TcpSegment segment(TcpFlags flags, std::uint32_t seq, std::uint32_t ack, Bytes payload = {}) {
  TcpSegment s;
  s.tcp.flags = flags;
  s.tcp.seq_number = seq;
  s.tcp.ack_number = ack;
  s.payload = std::move(payload);
  return s;
}

/// The corpus read as one endless byte stream.
class CorpusStream {
 public:
  explicit CorpusStream(const std::vector<Bytes>& messages) {
    for (const auto& m : messages) bytes_.insert(bytes_.end(), m.begin(), m.end());
  }
  Bytes take(std::size_t n) {
    Bytes out(n);
    for (auto& b : out) b = bytes_[pos_++ % bytes_.size()];
    return out;
  }
  void rewind(std::size_t n) { pos_ -= n; }

 private:
  Bytes bytes_;
  std::size_t pos_ = 0;
};

struct Signer {
  dsa::DomainParams params;
  dsa::KeyPair key;
};

Bytes covert_record(const Signer& signer, CorpusStream& corpus, Rng& rng) {
  const auto& params = signer.params;
  const dsa::BigInt h = dsa::hash_to_scalar(rng.bytes(32), params);
  const std::size_t cap = params.q_bytes() - 1;
  Bytes chunk = corpus.take(cap);
  for (bool reframed = false;; reframed = true) {
    try {
      const dsa::BigInt k = dsa::embed_subliminal(chunk, params);
      return dsa::encode_record(h, dsa::sign(params, signer.key, h, k), params);
    } catch (const Error& e) {
      const bool retry = e.code() == Errc::ChunkZero || e.code() == Errc::DegenerateK;
      if (!retry || reframed) throw;
      // Re-frame behind a 0x01 pad byte; the displaced byte goes to the next chunk.
      chunk.insert(chunk.begin(), 0x01);
      chunk.pop_back();
      corpus.rewind(1);
    }
  }
}

Bytes honest_record(const Signer& signer, Rng& rng) {
  const auto& params = signer.params;
  const dsa::BigInt h = dsa::hash_to_scalar(rng.bytes(32), params);
  for (;;) {
    const dsa::BigInt k = 1 + dsa::random_below(rng, params.q - 1);
    try {
      return dsa::encode_record(h, dsa::sign(params, signer.key, h, k), params);
    } catch (const Error& e) {
      if (e.code() != Errc::DegenerateK) throw;
    }
  }
}

/// Collects one flow's packets, both directions, up to a packet budget.
class FlowBuilder {
 public:
  FlowBuilder(FlowKey key, std::size_t limit, Rng& rng)
      : key_(key),
        limit_(limit),
        client_id_(static_cast<std::uint16_t>(rng.below(0x10000))),
        server_id_(static_cast<std::uint16_t>(rng.below(0x10000))) {}

  bool full() const { return packets.size() >= limit_; }
  const FlowKey& key() const { return key_; }

  void client(TcpSegment seg, bool carrier = false) { add(std::move(seg), key_, client_id_++, carrier); }
  void server(TcpSegment seg) { add(std::move(seg), key_.reversed(), server_id_++, false); }

  std::vector<TcpSegment> packets;
  std::vector<bool> carriers;

 private:
  void add(TcpSegment seg, const FlowKey& dir, std::uint16_t id, bool carrier) {
    if (full()) return;
    seg.ip.src_addr = dir.src_addr;
    seg.ip.dst_addr = dir.dst_addr;
    seg.ip.identification = id;
    seg.ip.flags_fragment = Ipv4Header::kDontFragment;
    seg.tcp.src_port = dir.src_port;
    seg.tcp.dst_port = dir.dst_port;
    if (seg.tcp.window == 0) seg.tcp.window = kWindow;
    packets.push_back(std::move(seg));
    carriers.push_back(carrier);
  }

  FlowKey key_;
  std::size_t limit_;
  std::uint16_t client_id_;
  std::uint16_t server_id_;
};

/// Covert SYNs drawn one at a time from successive corpus messages.
class SynSource {
 public:
  SynSource(covert::CovertTcpConfig cfg, const std::vector<Bytes>& messages, std::size_t first)
      : cfg_(std::move(cfg)), messages_(messages), next_message_(first) {}

  TcpSegment next() {
    while (pos_ >= pending_.size()) {
      const Bytes& msg = messages_[next_message_++ % messages_.size()];
      pending_ = covert::build_covert_stream(msg, cfg_);
      pos_ = 0;
      ++cfg_.isn_seed;
    }
    return pending_[pos_++].segment;
  }

 private:
  covert::CovertTcpConfig cfg_;
  const std::vector<Bytes>& messages_;
  std::size_t next_message_;
  std::vector<StampedSegment> pending_;
  std::size_t pos_ = 0;
};

covert::CovertTcpConfig tcp_config(covert::FieldSet fields, const ScenarioConfig& cfg, Rng& rng) {
  covert::CovertTcpConfig c;
  c.fields = fields;
  c.pad_bytes = cfg.pad_bytes;
  c.isn_seed = rng.next();
  c.templ.tcp.window = kWindow;
  if (!fields.has(covert::FieldSet::PADDING)) {
    c.templ.tcp.options = kMssOption;
    c.templ.tcp.data_offset = 6;
  }
  return c;
}

/// Covert SYN, optionally answered, then client ACK.
std::uint32_t open_connection(FlowBuilder& fb, TcpSegment syn, bool syn_carrier, bool answer, Rng& rng) {
  const std::uint32_t isn = syn.tcp.seq_number;
  const std::uint32_t server_isn = static_cast<std::uint32_t>(rng.next() >> 32);
  fb.client(std::move(syn), syn_carrier);
  if (answer) {
    TcpSegment synack = segment(TcpFlags::SYN | TcpFlags::ACK, server_isn, isn + 1);
    synack.tcp.options = kMssOption;
    synack.tcp.data_offset = 6;
    fb.server(std::move(synack));
  }
  fb.client(segment(TcpFlags(TcpFlags::ACK), isn + 1, server_isn + 1));
  return isn + 1;
}

TcpSegment benign_syn(Rng& rng) {
  TcpSegment syn = segment(TcpFlags(TcpFlags::SYN), benign_isn(rng), 0);
  syn.tcp.options = kMssOption;
  syn.tcp.data_offset = 6;
  return syn;
}

void build_benign(FlowBuilder& fb, const ScenarioConfig& cfg, const Signer* signer, Rng& rng) {
  while (!fb.full()) {
    std::uint32_t seq = open_connection(fb, benign_syn(rng), false, false, rng);
    const std::uint32_t ack = static_cast<std::uint32_t>(rng.next() >> 32);
    const std::size_t data_packets = 2 + rng.below(6);
    for (std::size_t j = 0; j < data_packets; ++j) {
      Bytes payload;
      if (signer) {
        for (std::size_t r = 0; r < cfg.records_per_packet; ++r) {
          Bytes rec = honest_record(*signer, rng);
          payload.insert(payload.end(), rec.begin(), rec.end());
        }
      } else {
        payload = rng.bytes(40 + rng.below(400));
      }
      TcpFlags flags = TcpFlags::PSH | TcpFlags::ACK;
      if (cfg.anomaly_ratio > 0 && rng.bernoulli(cfg.anomaly_ratio)) flags = TcpFlags::SYN | TcpFlags::FIN;
      const auto len = static_cast<std::uint32_t>(payload.size());
      fb.client(segment(flags, seq, ack, std::move(payload)));
      seq += len;
    }
    fb.client(segment(TcpFlags::FIN | TcpFlags::ACK, seq, ack));
  }
}

void build_tcp_covert(FlowBuilder& fb, covert::FieldSet fields, const ScenarioConfig& cfg,
                      const std::vector<Bytes>& corpus, std::size_t flow_index, Rng& rng) {
  SynSource syns(tcp_config(fields, cfg, rng), corpus, flow_index);
  while (!fb.full()) {
    TcpSegment syn = syns.next();
    if (!cfg.complete_handshake) {
      fb.client(std::move(syn), true);
      continue;
    }
    open_connection(fb, std::move(syn), true, true, rng);
  }
}

void build_subliminal(FlowBuilder& fb, const ScenarioConfig& cfg, const Signer& signer, CorpusStream& corpus,
                      Rng& rng) {
  while (!fb.full()) {
    std::uint32_t seq = open_connection(fb, benign_syn(rng), false, cfg.complete_handshake, rng);
    const std::uint32_t ack = static_cast<std::uint32_t>(rng.next() >> 32);
    // One long connection; the final budget slot closes it.
    while (fb.packets.size() + 1 < cfg.packets_per_flow) {
      Bytes payload;
      for (std::size_t r = 0; r < cfg.records_per_packet; ++r) {
        Bytes rec = covert_record(signer, corpus, rng);
        payload.insert(payload.end(), rec.begin(), rec.end());
      }
      const auto len = static_cast<std::uint32_t>(payload.size());
      fb.client(segment(TcpFlags::PSH | TcpFlags::ACK, seq, ack, std::move(payload)), true);
      seq += len;
    }
    fb.client(segment(TcpFlags::FIN | TcpFlags::ACK, seq, ack));
  }
}

void build_hybrid(FlowBuilder& fb, const ScenarioConfig& cfg, const Signer& signer, CorpusStream& corpus,
                  const std::vector<Bytes>& messages, std::size_t flow_index, Rng& rng) {
  SynSource syns(tcp_config(cfg.hybrid_fields, cfg, rng), messages, flow_index);
  while (!fb.full()) {
    std::uint32_t seq = open_connection(fb, syns.next(), true, cfg.complete_handshake, rng);
    const std::uint32_t ack = static_cast<std::uint32_t>(rng.next() >> 32);
    for (std::size_t j = 0; j < cfg.hybrid_data_packets; ++j) {
      Bytes payload;
      for (std::size_t r = 0; r < cfg.records_per_packet; ++r) {
        Bytes rec = covert_record(signer, corpus, rng);
        payload.insert(payload.end(), rec.begin(), rec.end());
      }
      const auto len = static_cast<std::uint32_t>(payload.size());
      fb.client(segment(TcpFlags::PSH | TcpFlags::ACK, seq, ack, std::move(payload)), true);
      seq += len;
    }
    fb.client(segment(TcpFlags::FIN | TcpFlags::ACK, seq, ack));
  }
}

FlowKey flow_endpoints(std::size_t i, Rng& rng, bool covert) {
  FlowKey k;
  k.src_addr = 0x0A000000u + static_cast<std::uint32_t>(i + 1);  // 10.0.0.0/8
  k.dst_addr = 0xAC100001u + static_cast<std::uint32_t>(i % 16);  // 172.16.0.1..16
  k.src_port = static_cast<std::uint16_t>(32768 + rng.below(28000));
  k.dst_port = covert ? 80 : kServicePorts[rng.below(kServicePorts.size())];
  return k;
}

}  // namespace

std::vector<Bytes> ScenarioConfig::default_corpus() {
  const char* lines[] = {
      "meet at the north gate after the shift change",
      "account list attached; rotate keys before friday",
      "the package is in locker 14, code 7731",
      "transfer approved, confirm with the usual phrase",
  };
  std::vector<Bytes> out;
  for (const char* l : lines) out.emplace_back(l, l + std::char_traits<char>::length(l));
  return out;
}

ScenarioConfig ScenarioConfig::from_kv(const KeyValueFile& kv) {
  kv.reject_unknown({"seed", "n_flows", "packets_per_flow", "covert_flow_ratio", "covert_kinds", "message",
                     "message_hex", "hybrid_fields", "pad_bytes", "complete_handshake", "link_type", "start_time",
                     "step_us", "dsa_params", "key_mode", "records_per_packet", "hybrid_data_packets",
                     "benign_signature_ratio", "anomaly_ratio", "learning_packets"});
  ScenarioConfig c;
  c.seed = kv.get_u64("seed", c.seed);
  c.n_flows = kv.get_u64("n_flows", c.n_flows);
  c.packets_per_flow = kv.get_u64("packets_per_flow", c.packets_per_flow);
  c.covert_flow_ratio = kv.get_double("covert_flow_ratio", c.covert_flow_ratio);
  if (auto kinds = kv.get("covert_kinds")) {
    c.covert_kinds.clear();
    std::size_t start = 0;
    while (start <= kinds->size()) {
      std::size_t end = kinds->find(',', start);
      if (end == std::string::npos) end = kinds->size();
      std::string token = kinds->substr(start, end - start);
      token.erase(0, token.find_first_not_of(" \t"));
      token.erase(token.find_last_not_of(" \t") + 1);
      if (!token.empty()) c.covert_kinds.push_back(parse_covert_kind(token));
      start = end + 1;
    }
  }
  for (const auto& m : kv.get_all("message")) c.messages.emplace_back(m.begin(), m.end());
  for (const auto& m : kv.get_all("message_hex")) c.messages.push_back(parse_hex(m));
  if (auto f = kv.get("hybrid_fields")) c.hybrid_fields = covert::FieldSet::parse(*f);
  c.pad_bytes = kv.get_u64("pad_bytes", c.pad_bytes);
  c.complete_handshake = kv.get_bool("complete_handshake", c.complete_handshake);
  if (auto lt = kv.get("link_type")) {
    if (*lt == "raw")
      c.link_type = kLinkTypeRaw;
    else if (*lt == "ethernet")
      c.link_type = kLinkTypeEthernet;
    else
      throw Error(Errc::ConfigError, kv.origin() + ": link_type must be raw or ethernet");
  }
  const std::uint64_t start = kv.get_u64("start_time", c.start_time);
  const std::uint64_t step = kv.get_u64("step_us", c.step_us);
  if (start > UINT32_MAX || step > UINT32_MAX) throw Error(Errc::ConfigError, kv.origin() + ": clock value too large");
  c.start_time = static_cast<std::uint32_t>(start);
  c.step_us = static_cast<std::uint32_t>(step);
  if (auto p = kv.get("dsa_params")) c.dsa_params = dsa::ParamSpec::parse(*p);
  if (auto m = kv.get("key_mode")) {
    if (*m == "system")
      c.key_mode = dsa::KeyProvenance::SystemGenerated;
    else if (*m == "covert")
      c.key_mode = dsa::KeyProvenance::CovertReplaced;
    else
      throw Error(Errc::ConfigError, kv.origin() + ": key_mode must be system or covert");
  }
  c.records_per_packet = kv.get_u64("records_per_packet", c.records_per_packet);
  c.hybrid_data_packets = kv.get_u64("hybrid_data_packets", c.hybrid_data_packets);
  c.benign_signature_ratio = kv.get_double("benign_signature_ratio", c.benign_signature_ratio);
  c.anomaly_ratio = kv.get_double("anomaly_ratio", c.anomaly_ratio);
  c.learning_packets = kv.get_u64("learning_packets", c.learning_packets);
  c.validate();
  return c;
}

void ScenarioConfig::validate() const {
  auto unit = [](double v) { return v >= 0.0 && v <= 1.0; };
  if (n_flows == 0) throw Error(Errc::ConfigError, "n_flows must be positive");
  if (packets_per_flow == 0) throw Error(Errc::ConfigError, "packets_per_flow must be positive");
  if (!unit(covert_flow_ratio)) throw Error(Errc::ConfigError, "covert_flow_ratio must be in [0, 1]");
  if (!unit(benign_signature_ratio)) throw Error(Errc::ConfigError, "benign_signature_ratio must be in [0, 1]");
  if (!unit(anomaly_ratio)) throw Error(Errc::ConfigError, "anomaly_ratio must be in [0, 1]");
  if (covert_kinds.empty()) throw Error(Errc::ConfigError, "covert_kinds must be non-empty");
  if (hybrid_fields.empty()) throw Error(Errc::ConfigError, "hybrid_fields must be non-empty");
  if (pad_bytes == 0 || pad_bytes > covert::kMaxPadBytes) throw Error(Errc::ConfigError, "pad_bytes must be in [1, 36]");
  if (step_us == 0) throw Error(Errc::ConfigError, "step_us must be positive");
  if (records_per_packet == 0) throw Error(Errc::ConfigError, "records_per_packet must be positive");
  if (hybrid_data_packets == 0) throw Error(Errc::ConfigError, "hybrid_data_packets must be positive");
  for (const auto& m : messages)
    if (m.size() > 0xFFFF) throw Error(Errc::ConfigError, "message longer than 65535 bytes");
}

std::vector<std::size_t> select_covert_flows(std::uint64_t seed, std::size_t n_flows, double ratio) {
  // The epsilon keeps products like 0.3*10 from flooring to 2.
  const auto count = static_cast<std::size_t>(std::floor(ratio * static_cast<double>(n_flows) + 1e-9));
  std::vector<std::size_t> order(n_flows);
  for (std::size_t i = 0; i < n_flows; ++i) order[i] = i;
  Rng rng(seed ^ 0xC0FFEE);
  for (std::size_t i = n_flows; i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
  order.resize(std::min(count, n_flows));
  std::sort(order.begin(), order.end());
  return order;
}

Simulation generate_traffic(const ScenarioConfig& cfg) {
  cfg.validate();
  std::vector<Bytes> corpus;
  for (const auto& m : cfg.messages)
    if (!m.empty()) corpus.push_back(m);
  if (corpus.empty()) corpus = ScenarioConfig::default_corpus();

  const auto covert_idx = select_covert_flows(cfg.seed, cfg.n_flows, cfg.covert_flow_ratio);
  std::vector<std::optional<CovertKind>> kinds(cfg.n_flows);
  for (std::size_t j = 0; j < covert_idx.size(); ++j) kinds[covert_idx[j]] = cfg.covert_kinds[j % cfg.covert_kinds.size()];

  Rng master(cfg.seed);
  std::vector<bool> honest_signer(cfg.n_flows, false);
  bool need_key = false;
  for (std::size_t i = 0; i < cfg.n_flows; ++i) {
    if (kinds[i]) {
      need_key |= *kinds[i] == CovertKind::SubliminalDsa || *kinds[i] == CovertKind::Hybrid;
    } else if (cfg.benign_signature_ratio > 0 && master.bernoulli(cfg.benign_signature_ratio)) {
      honest_signer[i] = true;
      need_key = true;
    }
  }

  CorpusStream stream(corpus);
  std::optional<Signer> signer;
  if (need_key) {
    Rng key_rng(cfg.seed ^ 0xD5A5EEDULL);
    Signer s;
    s.params = dsa::generate_params(cfg.dsa_params, key_rng);
    if (s.params.q_bytes() < 2) throw Error(Errc::ConfigError, "dsa_params too small to carry subliminal chunks");
    std::optional<dsa::BigInt> covert_x;
    if (cfg.key_mode == dsa::KeyProvenance::CovertReplaced)
      covert_x = dsa::covert_key_from_bytes(stream.take(s.params.q_bytes() - 1), s.params);
    s.key = dsa::keygen(s.params, key_rng, covert_x);
    signer = std::move(s);
  }

  std::vector<FlowBuilder> flows;
  flows.reserve(cfg.n_flows);
  for (std::size_t i = 0; i < cfg.n_flows; ++i) {
    Rng rng = master.fork();
    flows.emplace_back(flow_endpoints(i, rng, kinds[i].has_value()), cfg.packets_per_flow, rng);
    FlowBuilder& fb = flows.back();
    if (!kinds[i]) {
      build_benign(fb, cfg, honest_signer[i] ? &*signer : nullptr, rng);
      continue;
    }
    switch (*kinds[i]) {
      case CovertKind::TcpSeq:
        build_tcp_covert(fb, covert::FieldSet::SEQ, cfg, corpus, i, rng);
        break;
      case CovertKind::TcpReserved:
        build_tcp_covert(fb, covert::FieldSet::RESERVED, cfg, corpus, i, rng);
        break;
      case CovertKind::TcpPadding:
        build_tcp_covert(fb, covert::FieldSet::PADDING, cfg, corpus, i, rng);
        break;
      case CovertKind::SubliminalDsa:
        build_subliminal(fb, cfg, *signer, stream, rng);
        break;
      case CovertKind::Hybrid:
        build_hybrid(fb, cfg, *signer, stream, corpus, i, rng);
        break;
    }
  }

  // Round-robin interleave; the learning prefix only draws from benign flows.
  std::vector<std::pair<std::size_t, std::size_t>> order;
  std::vector<std::size_t> cursor(cfg.n_flows, 0);
  auto round = [&](bool benign_only, std::size_t budget) {
    bool progressed = true;
    while (progressed && order.size() < budget) {
      progressed = false;
      for (std::size_t i = 0; i < cfg.n_flows && order.size() < budget; ++i) {
        if (benign_only && kinds[i]) continue;
        if (cursor[i] >= flows[i].packets.size()) continue;
        order.emplace_back(i, cursor[i]++);
        progressed = true;
      }
    }
  };
  round(true, cfg.learning_packets);
  const std::size_t learning_prefix = order.size();
  round(false, SIZE_MAX);

  Simulation sim;
  sim.capture.link_type = cfg.link_type;
  sim.labels.seed = cfg.seed;
  sim.labels.learning_prefix = learning_prefix;
  sim.labels.packet_count = order.size();
  const std::uint64_t t0 = std::uint64_t{cfg.start_time} * 1'000'000;
  for (std::size_t n = 0; n < order.size(); ++n) {
    const auto [f, p] = order[n];
    Bytes raw = serialize_packet(flows[f].packets[p], true);
    if (cfg.link_type == kLinkTypeEthernet) raw = wrap_ethernet(raw);
    sim.capture.records.push_back(
        make_record(Timestamp::from_micros(t0 + std::uint64_t{cfg.step_us} * n), std::move(raw), cfg.link_type));
    if (flows[f].carriers[p]) sim.labels.carriers.push_back(n);
  }
  for (std::size_t i = 0; i < cfg.n_flows; ++i) sim.labels.flows.push_back({i, flows[i].key(), kinds[i]});

  if (signer) {
    dsa::WardenKey key;
    key.params = signer->params;
    key.y = signer->key.y;
    key.x = signer->key.x;
    key.provenance = signer->key.provenance;
    sim.key = std::move(key);
  }
  return sim;
}

}  // namespace trapdoor::sim
