#include "trapdoor/pcap.hpp"

#include <fstream>
#include <iterator>

namespace trapdoor {

namespace {

constexpr std::uint32_t kMagic = 0xA1B2C3D4;
constexpr std::uint32_t kMagicSwapped = 0xD4C3B2A1;
constexpr std::size_t kFileHeader = 24;
constexpr std::size_t kRecordHeader = 16;

class Reader {
 public:
  Reader(ByteView data, bool swapped) : data_(data), swapped_(swapped) {}

  std::uint32_t u32(std::size_t at) const {
    // Native file order is little-endian; swapped files are big-endian.
    if (swapped_)
      return (std::uint32_t{data_[at]} << 24) | (std::uint32_t{data_[at + 1]} << 16) |
             (std::uint32_t{data_[at + 2]} << 8) | data_[at + 3];
    return (std::uint32_t{data_[at + 3]} << 24) | (std::uint32_t{data_[at + 2]} << 16) |
           (std::uint32_t{data_[at + 1]} << 8) | data_[at];
  }

 private:
  ByteView data_;
  bool swapped_;
};

void put_le32(Bytes& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void put_le16(Bytes& out, std::uint16_t v) {
  out.push_back(static_cast<std::uint8_t>(v));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
}

}  // namespace

PacketRecord make_record(Timestamp ts, Bytes raw, std::uint32_t link_type) {
  PacketRecord rec;
  rec.ts = ts;
  rec.orig_len = static_cast<std::uint32_t>(raw.size());
  rec.raw = std::move(raw);
  try {
    rec.parse = parse_packet(rec.raw, link_type);
  } catch (const Error& e) {
    rec.parse_error = e.code();
  }
  return rec;
}

CaptureSet decode_capture(ByteView file) {
  if (file.size() < kFileHeader) throw Error(Errc::BadMagic, "file shorter than pcap header");
  const std::uint32_t magic_le = Reader(file, false).u32(0);
  bool swapped;
  if (magic_le == kMagic)
    swapped = false;
  else if (magic_le == kMagicSwapped)
    swapped = true;
  else
    throw Error(Errc::BadMagic, "unrecognized pcap magic");
  const Reader hdr(file, swapped);

  CaptureSet set;
  set.snaplen = hdr.u32(16);
  set.link_type = hdr.u32(20);

  std::size_t at = kFileHeader;
  while (at < file.size()) {
    if (file.size() - at < kRecordHeader) throw Error(Errc::TruncatedRecord, "partial record header");
    Timestamp ts{hdr.u32(at), hdr.u32(at + 4)};
    const std::uint32_t incl = hdr.u32(at + 8);
    const std::uint32_t orig = hdr.u32(at + 12);
    at += kRecordHeader;
    if (incl > file.size() - at)
      throw Error(Errc::TruncatedRecord, "caplen " + std::to_string(incl) + " exceeds remaining bytes");
    PacketRecord rec = make_record(ts, Bytes(file.begin() + static_cast<std::ptrdiff_t>(at),
                                             file.begin() + static_cast<std::ptrdiff_t>(at + incl)),
                                   set.link_type);
    rec.orig_len = orig;
    set.records.push_back(std::move(rec));
    at += incl;
  }
  return set;
}

Bytes encode_capture(const CaptureSet& set) {
  Bytes out;
  put_le32(out, kMagic);
  put_le16(out, 2);
  put_le16(out, 4);
  put_le32(out, 0);  // thiszone
  put_le32(out, 0);  // sigfigs
  put_le32(out, set.snaplen);
  put_le32(out, set.link_type);
  for (const auto& rec : set.records) {
    put_le32(out, rec.ts.sec);
    put_le32(out, rec.ts.usec);
    put_le32(out, static_cast<std::uint32_t>(rec.raw.size()));
    put_le32(out, rec.orig_len);
    out.insert(out.end(), rec.raw.begin(), rec.raw.end());
  }
  return out;
}

CaptureSet read_capture(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::IoError, "cannot open " + path.string());
  Bytes data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_capture(data);
}

void write_capture(const CaptureSet& set, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(Errc::IoError, "cannot write " + path.string());
  const Bytes data = encode_capture(set);
  out.write(reinterpret_cast<const char*>(data.data()), static_cast<std::streamsize>(data.size()));
  if (!out) throw Error(Errc::IoError, "short write to " + path.string());
}

}  // namespace trapdoor
