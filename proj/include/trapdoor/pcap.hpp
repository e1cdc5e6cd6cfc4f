#pragma once

#include <filesystem>
#include <optional>
#include <vector>

#include "trapdoor/error.hpp"
#include "trapdoor/packet.hpp"

namespace trapdoor {

/// One captured frame. `parse` is absent for non-IPv4/TCP or malformed
/// frames, in which case `parse_error` says why.
struct PacketRecord {
  Timestamp ts;
  Bytes raw;
  std::uint32_t orig_len = 0;
  std::optional<TcpSegment> parse;
  std::optional<Errc> parse_error;
};

struct CaptureSet {
  std::uint32_t link_type = kLinkTypeRaw;
  std::uint32_t snaplen = 65535;
  std::vector<PacketRecord> records;
};

/// Builds a record for `raw` and parses it under `link_type`.
PacketRecord make_record(Timestamp ts, Bytes raw, std::uint32_t link_type);

/// Classic microsecond pcap (either byte order). Throws BadMagic or
/// TruncatedRecord.
CaptureSet decode_capture(ByteView file);
/// Always little-endian, version 2.4.
Bytes encode_capture(const CaptureSet& set);

CaptureSet read_capture(const std::filesystem::path& path);
void write_capture(const CaptureSet& set, const std::filesystem::path& path);

}  // namespace trapdoor
