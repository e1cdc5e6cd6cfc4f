#pragma once

#include <algorithm>
#include <compare>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace trapdoor {

using Bytes = std::vector<std::uint8_t>;
using ByteView = std::span<const std::uint8_t>;

inline constexpr std::uint32_t kLinkTypeEthernet = 1;
inline constexpr std::uint32_t kLinkTypeRaw = 101;
inline constexpr std::uint8_t kProtoTcp = 6;

struct Timestamp {
  std::uint32_t sec = 0;
  std::uint32_t usec = 0;

  std::uint64_t micros() const { return std::uint64_t{sec} * 1'000'000 + usec; }
  static Timestamp from_micros(std::uint64_t us) {
    return {static_cast<std::uint32_t>(us / 1'000'000), static_cast<std::uint32_t>(us % 1'000'000)};
  }
  friend auto operator<=>(const Timestamp&, const Timestamp&) = default;
};

struct Ipv4Header {
  std::uint8_t version = 4;
  std::uint8_t ihl = 5;  // 32-bit words
  std::uint8_t tos = 0;
  std::uint16_t total_length = 0;
  std::uint16_t identification = 0;
  std::uint16_t flags_fragment = 0;  // 3 flag bits + 13-bit fragment offset
  std::uint8_t ttl = 64;
  std::uint8_t protocol = kProtoTcp;
  std::uint16_t header_checksum = 0;
  std::uint32_t src_addr = 0;
  std::uint32_t dst_addr = 0;
  Bytes options;

  static constexpr std::uint16_t kDontFragment = 0x4000;
  static constexpr std::uint16_t kMoreFragments = 0x2000;

  bool more_fragments() const { return (flags_fragment & kMoreFragments) != 0; }
  std::uint16_t fragment_offset() const { return flags_fragment & 0x1FFF; }
  bool is_fragment() const { return more_fragments() || fragment_offset() != 0; }

  friend bool operator==(const Ipv4Header&, const Ipv4Header&) = default;
};

/// TCP control bits, in wire order of header byte 13.
class TcpFlags {
 public:
  enum Bit : std::uint8_t {
    FIN = 0x01,
    SYN = 0x02,
    RST = 0x04,
    PSH = 0x08,
    ACK = 0x10,
    URG = 0x20,
    ECE = 0x40,
    CWR = 0x80,
  };

  constexpr TcpFlags() = default;
  constexpr explicit TcpFlags(std::uint8_t bits) : bits_(bits) {}

  constexpr std::uint8_t bits() const { return bits_; }
  constexpr bool has(Bit b) const { return (bits_ & b) != 0; }
  constexpr bool empty() const { return bits_ == 0; }
  constexpr TcpFlags with(Bit b) const { return TcpFlags(bits_ | b); }
  constexpr TcpFlags without(Bit b) const { return TcpFlags(bits_ & ~b); }

  /// "SYN|ACK" style rendering, "NONE" for no bits.
  std::string to_string() const;

  friend constexpr bool operator==(TcpFlags, TcpFlags) = default;
  friend constexpr TcpFlags operator|(TcpFlags a, Bit b) { return a.with(b); }

 private:
  std::uint8_t bits_ = 0;
};

constexpr TcpFlags operator|(TcpFlags::Bit a, TcpFlags::Bit b) {
  return TcpFlags(static_cast<std::uint8_t>(a | static_cast<std::uint8_t>(b)));
}

struct TcpHeader {
  std::uint16_t src_port = 0;
  std::uint16_t dst_port = 0;
  std::uint32_t seq_number = 0;
  std::uint32_t ack_number = 0;
  std::uint8_t data_offset = 5;  // 32-bit words
  std::uint8_t reserved = 0;     // 3 bits
  bool ns = false;               // low bit of byte 12 (former ECN nonce)
  TcpFlags flags;
  std::uint16_t window = 0;
  std::uint16_t checksum = 0;
  std::uint16_t urgent_pointer = 0;
  Bytes options;

  friend bool operator==(const TcpHeader&, const TcpHeader&) = default;
};

struct TcpSegment {
  Ipv4Header ip;
  TcpHeader tcp;
  Bytes payload;
  // Computed by parse_packet / finalize, never assumed.
  bool ip_checksum_valid = false;
  bool tcp_checksum_valid = false;

  friend bool operator==(const TcpSegment&, const TcpSegment&) = default;
};

struct FlowKey {
  std::uint32_t src_addr = 0;
  std::uint16_t src_port = 0;
  std::uint32_t dst_addr = 0;
  std::uint16_t dst_port = 0;

  FlowKey reversed() const { return {dst_addr, dst_port, src_addr, src_port}; }
  /// Direction-independent key: the smaller of the two directions.
  FlowKey canonical() const { return std::min(*this, reversed()); }
  /// "10.0.0.1:1234>10.0.1.1:80"
  std::string to_string() const;
  static FlowKey parse(const std::string& text);

  friend auto operator<=>(const FlowKey&, const FlowKey&) = default;
};

std::string format_ipv4(std::uint32_t addr);
std::uint32_t parse_ipv4(const std::string& text);

/// Parses one link-layer frame. Throws Error with Truncated, NotTcp,
/// BadOffset, Fragment or UnsupportedLinkType.
TcpSegment parse_packet(ByteView raw, std::uint32_t link_type = kLinkTypeRaw);

/// Serializes to raw IPv4 bytes. With recompute set, ihl, data_offset,
/// total_length and both checksums are derived from the content; otherwise
/// the stored values must already satisfy the segment invariants.
Bytes serialize_packet(const TcpSegment& seg, bool recompute);

/// Copy of seg with derived lengths and checksums filled in and both
/// validity marks set; equals parse_packet(serialize_packet(seg, true)).
TcpSegment finalize(TcpSegment seg);

/// Throws InvariantViolation naming the first violated invariant.
void check_invariants(const TcpSegment& seg);

std::uint16_t compute_tcp_checksum(const TcpSegment& seg);
std::uint16_t compute_ipv4_checksum(const Ipv4Header& ip);

/// Internet checksum (RFC 1071) over a byte range, returned uncomplemented.
std::uint32_t ones_complement_sum(ByteView data, std::uint32_t initial = 0);

/// Prepends a fixed Ethernet II header (IPv4 ethertype).
Bytes wrap_ethernet(ByteView ip_packet);

FlowKey flow_key(const TcpSegment& seg);

}  // namespace trapdoor

namespace trapdoor {

struct StampedSegment {
  Timestamp ts;
  TcpSegment segment;
};

}  // namespace trapdoor
