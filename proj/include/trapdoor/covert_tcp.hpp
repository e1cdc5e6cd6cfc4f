#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "trapdoor/packet.hpp"

namespace trapdoor::covert {

/// Header fields that carry covert bits. Per packet they are filled in the
/// fixed order SEQ, RESERVED, PADDING.
class FieldSet {
 public:
  enum Field : std::uint8_t { SEQ = 1, RESERVED = 2, PADDING = 4 };

  constexpr FieldSet() = default;
  constexpr FieldSet(Field f) : bits_(f) {}  // NOLINT(google-explicit-constructor)
  constexpr static FieldSet from_bits(std::uint8_t bits) {
    FieldSet s;
    s.bits_ = bits & 0x07;
    return s;
  }

  constexpr bool has(Field f) const { return (bits_ & f) != 0; }
  constexpr bool empty() const { return bits_ == 0; }
  constexpr std::uint8_t bits() const { return bits_; }
  constexpr FieldSet operator|(FieldSet other) const { return from_bits(bits_ | other.bits_); }

  /// "SEQ,PADDING"
  std::string to_string() const;
  /// Inverse of to_string; also accepts '+' or '|' separators.
  static FieldSet parse(const std::string& text);
  /// The seven non-empty subsets.
  static std::vector<FieldSet> all_nonempty();

  friend constexpr bool operator==(FieldSet, FieldSet) = default;

 private:
  std::uint8_t bits_ = 0;
};

inline constexpr std::size_t kMaxPadBytes = 36;

struct CovertTcpConfig {
  FieldSet fields = FieldSet::SEQ;
  /// Addresses, ports, window, IP ID start and non-covert options.
  TcpSegment templ;
  /// Covert bytes per packet in the padding channel.
  std::size_t pad_bytes = 4;
  /// Seeds the benign-looking ISNs used when SEQ is not a carrier.
  std::uint64_t isn_seed = 1;

  std::size_t capacity_bits() const;
  /// Throws ConfigError.
  void validate() const;
};

struct Clock {
  Timestamp start;
  std::uint32_t step_us = 1000;

  Timestamp at(std::size_t i) const { return Timestamp::from_micros(start.micros() + std::uint64_t{step_us} * i); }
};

std::uint32_t encode_seq_byte(std::uint8_t b);

struct SeqByte {
  std::uint8_t value;
  bool canonical;  // low 24 bits were zero
};
SeqByte decode_seq_byte(std::uint32_t isn);

/// Throws ChunkOutOfRange for chunk > 7.
TcpHeader encode_reserved_bits(std::uint8_t chunk, TcpHeader hdr);
std::uint8_t decode_reserved_bits(const TcpHeader& hdr);

/// Options become NOP NOP EOL <len> <bytes> zero-padded to 4 bytes.
/// Empty input returns hdr unchanged. Throws CapacityExceeded above 36 bytes.
TcpHeader encode_padding(ByteView bytes, TcpHeader hdr);
/// Bytes hidden after EOL, or empty when the options do not carry the layout.
/// Throws LengthMismatch when the embedded length overruns the options.
Bytes decode_padding(const TcpHeader& hdr);

/// Frames msg with a 16-bit big-endian length and spreads it over SYN
/// packets built from cfg.templ. Checksums are valid and timestamps strictly
/// increasing. Throws CapacityExceeded for messages over 65535 bytes.
std::vector<StampedSegment> build_covert_stream(ByteView msg, const CovertTcpConfig& cfg, Clock clock = {});

/// Inverse of build_covert_stream. Only pure SYNs (no ACK) are read. Throws
/// LengthMismatch, and NonCanonical under strict when a SEQ carrier has
/// nonzero low bits.
Bytes extract_covert_stream(std::span<const TcpSegment> segs, const CovertTcpConfig& cfg, bool strict = false);

/// Number of SYNs build_covert_stream emits for a message of msg_len bytes.
std::size_t packets_for(std::size_t msg_len, const CovertTcpConfig& cfg);

}  // namespace trapdoor::covert
