#include "trapdoor/covert_tcp.hpp"

#include <sstream>

#include "trapdoor/error.hpp"
#include "trapdoor/rng.hpp"

namespace trapdoor::covert {

namespace {

constexpr std::uint8_t kOptEol = 0x00;
constexpr std::uint8_t kOptNop = 0x01;

class BitWriter {
 public:
  void put(std::uint32_t value, unsigned width) {
    for (unsigned i = width; i-- > 0;) push((value >> i) & 1u);
  }
  void push(unsigned bit) {
    if (used_ % 8 == 0) bytes_.push_back(0);
    if (bit) bytes_.back() |= static_cast<std::uint8_t>(0x80u >> (used_ % 8));
    ++used_;
  }
  std::size_t size() const { return used_; }
  const Bytes& bytes() const { return bytes_; }

 private:
  Bytes bytes_;
  std::size_t used_ = 0;
};

class BitReader {
 public:
  explicit BitReader(ByteView data) : data_(data) {}
  /// Reads width bits MSB first; positions past the end read as zero.
  std::uint32_t take(unsigned width) {
    std::uint32_t v = 0;
    for (unsigned i = 0; i < width; ++i) {
      unsigned bit = 0;
      if (pos_ / 8 < data_.size()) bit = (data_[pos_ / 8] >> (7 - pos_ % 8)) & 1u;
      v = (v << 1) | bit;
      ++pos_;
    }
    return v;
  }

 private:
  ByteView data_;
  std::size_t pos_ = 0;
};

std::uint32_t benign_isn(Rng& rng) {
  std::uint32_t isn;
  do {
    isn = static_cast<std::uint32_t>(rng.next() >> 32);
  } while ((isn & 0x00FFFFFF) == 0);
  return isn;
}

}  // namespace

std::string FieldSet::to_string() const {
  std::string out;
  auto add = [&](Field f, const char* name) {
    if (!has(f)) return;
    if (!out.empty()) out += ',';
    out += name;
  };
  add(SEQ, "SEQ");
  add(RESERVED, "RESERVED");
  add(PADDING, "PADDING");
  return out;
}

FieldSet FieldSet::parse(const std::string& text) {
  FieldSet set;
  std::string token;
  std::string normalized = text;
  for (char& c : normalized)
    if (c == '+' || c == '|') c = ',';
  std::istringstream in(normalized);
  while (std::getline(in, token, ',')) {
    auto b = token.find_first_not_of(" \t");
    auto e = token.find_last_not_of(" \t");
    if (b == std::string::npos) continue;
    token = token.substr(b, e - b + 1);
    if (token == "SEQ")
      set = set | SEQ;
    else if (token == "RESERVED")
      set = set | RESERVED;
    else if (token == "PADDING")
      set = set | PADDING;
    else
      throw Error(Errc::ConfigError, "unknown covert field '" + token + "'");
  }
  return set;
}

std::vector<FieldSet> FieldSet::all_nonempty() {
  std::vector<FieldSet> out;
  for (std::uint8_t b = 1; b < 8; ++b) out.push_back(from_bits(b));
  return out;
}

std::size_t CovertTcpConfig::capacity_bits() const {
  return (fields.has(FieldSet::SEQ) ? 8 : 0) + (fields.has(FieldSet::RESERVED) ? 3 : 0) +
         (fields.has(FieldSet::PADDING) ? 8 * pad_bytes : 0);
}

void CovertTcpConfig::validate() const {
  if (fields.empty()) throw Error(Errc::ConfigError, "fields_enabled must be non-empty");
  if (fields.has(FieldSet::PADDING) && (pad_bytes == 0 || pad_bytes > kMaxPadBytes))
    throw Error(Errc::ConfigError, "pad_bytes must be in [1, 36]");
  if (!fields.has(FieldSet::PADDING) && templ.tcp.options.size() % 4 != 0)
    throw Error(Errc::ConfigError, "template options must be a multiple of 4 bytes");
}

std::uint32_t encode_seq_byte(std::uint8_t b) { return std::uint32_t{b} << 24; }

SeqByte decode_seq_byte(std::uint32_t isn) {
  return {static_cast<std::uint8_t>(isn >> 24), (isn & 0x00FFFFFF) == 0};
}

TcpHeader encode_reserved_bits(std::uint8_t chunk, TcpHeader hdr) {
  if (chunk > 7) throw Error(Errc::ChunkOutOfRange, "reserved chunk " + std::to_string(chunk));
  hdr.reserved = chunk;
  return hdr;
}

std::uint8_t decode_reserved_bits(const TcpHeader& hdr) { return hdr.reserved & 0x07; }

TcpHeader encode_padding(ByteView bytes, TcpHeader hdr) {
  if (bytes.empty()) return hdr;
  if (bytes.size() > kMaxPadBytes)
    throw Error(Errc::CapacityExceeded, std::to_string(bytes.size()) + " bytes exceed the 36-byte padding budget");
  Bytes opts{kOptNop, kOptNop, kOptEol, static_cast<std::uint8_t>(bytes.size())};
  opts.insert(opts.end(), bytes.begin(), bytes.end());
  while (opts.size() % 4 != 0) opts.push_back(0);
  hdr.options = std::move(opts);
  hdr.data_offset = static_cast<std::uint8_t>(5 + hdr.options.size() / 4);
  return hdr;
}

Bytes decode_padding(const TcpHeader& hdr) {
  const auto& o = hdr.options;
  if (o.size() < 4 || o[0] != kOptNop || o[1] != kOptNop || o[2] != kOptEol) return {};
  const std::size_t len = o[3];
  if (4 + len > o.size()) throw Error(Errc::LengthMismatch, "padding length byte overruns options");
  return Bytes(o.begin() + 4, o.begin() + 4 + static_cast<std::ptrdiff_t>(len));
}

std::size_t packets_for(std::size_t msg_len, const CovertTcpConfig& cfg) {
  const std::size_t bits = 8 * (msg_len + 2);
  const std::size_t cap = cfg.capacity_bits();
  return (bits + cap - 1) / cap;
}

std::vector<StampedSegment> build_covert_stream(ByteView msg, const CovertTcpConfig& cfg, Clock clock) {
  cfg.validate();
  if (msg.size() > 0xFFFF) throw Error(Errc::CapacityExceeded, "message longer than 65535 bytes");

  Bytes framed{static_cast<std::uint8_t>(msg.size() >> 8), static_cast<std::uint8_t>(msg.size())};
  framed.insert(framed.end(), msg.begin(), msg.end());
  BitReader bits(framed);
  Rng isn_rng(cfg.isn_seed);

  const std::size_t n = packets_for(msg.size(), cfg);
  std::vector<StampedSegment> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    TcpSegment seg = cfg.templ;
    seg.ip.identification = static_cast<std::uint16_t>(cfg.templ.ip.identification + i);
    seg.tcp.flags = TcpFlags(TcpFlags::SYN);
    seg.tcp.ack_number = 0;
    seg.tcp.urgent_pointer = 0;
    seg.tcp.reserved = 0;
    seg.payload.clear();

    if (cfg.fields.has(FieldSet::SEQ))
      seg.tcp.seq_number = encode_seq_byte(static_cast<std::uint8_t>(bits.take(8)));
    else
      seg.tcp.seq_number = benign_isn(isn_rng);
    if (cfg.fields.has(FieldSet::RESERVED))
      seg.tcp = encode_reserved_bits(static_cast<std::uint8_t>(bits.take(3)), seg.tcp);
    if (cfg.fields.has(FieldSet::PADDING)) {
      Bytes chunk(cfg.pad_bytes);
      for (auto& b : chunk) b = static_cast<std::uint8_t>(bits.take(8));
      seg.tcp = encode_padding(chunk, seg.tcp);
    }
    out.push_back({clock.at(i), finalize(std::move(seg))});
  }
  return out;
}

Bytes extract_covert_stream(std::span<const TcpSegment> segs, const CovertTcpConfig& cfg, bool strict) {
  BitWriter bits;
  for (const auto& seg : segs) {
    const auto& tcp = seg.tcp;
    if (!tcp.flags.has(TcpFlags::SYN) || tcp.flags.has(TcpFlags::ACK)) continue;
    if (cfg.fields.has(FieldSet::SEQ)) {
      const SeqByte sb = decode_seq_byte(tcp.seq_number);
      if (strict && !sb.canonical) throw Error(Errc::NonCanonical, "ISN low 24 bits nonzero");
      bits.put(sb.value, 8);
    }
    if (cfg.fields.has(FieldSet::RESERVED)) bits.put(decode_reserved_bits(tcp), 3);
    if (cfg.fields.has(FieldSet::PADDING))
      for (std::uint8_t b : decode_padding(tcp)) bits.put(b, 8);
  }

  if (bits.size() < 16) throw Error(Errc::LengthMismatch, "stream shorter than its length prefix");
  const Bytes& raw = bits.bytes();
  const std::size_t len = (std::size_t{raw[0]} << 8) | raw[1];
  if (bits.size() < 8 * (len + 2))
    throw Error(Errc::LengthMismatch, "declared length " + std::to_string(len) + " exceeds carried bytes");
  return Bytes(raw.begin() + 2, raw.begin() + 2 + static_cast<std::ptrdiff_t>(len));
}

}  // namespace trapdoor::covert
