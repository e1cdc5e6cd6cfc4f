#include "trapdoor/packet.hpp"

#include <array>
#include <charconv>

#include "trapdoor/error.hpp"

namespace trapdoor {

namespace {

constexpr std::size_t kIpMinHeader = 20;
constexpr std::size_t kTcpMinHeader = 20;
constexpr std::size_t kEthernetHeader = 14;

std::uint16_t load16(ByteView b, std::size_t at) {
  return static_cast<std::uint16_t>((b[at] << 8) | b[at + 1]);
}

std::uint32_t load32(ByteView b, std::size_t at) {
  return (std::uint32_t{b[at]} << 24) | (std::uint32_t{b[at + 1]} << 16) |
         (std::uint32_t{b[at + 2]} << 8) | b[at + 3];
}

void store16(Bytes& out, std::uint16_t v) {
  out.push_back(static_cast<std::uint8_t>(v >> 8));
  out.push_back(static_cast<std::uint8_t>(v));
}

void store32(Bytes& out, std::uint32_t v) {
  for (int shift = 24; shift >= 0; shift -= 8) out.push_back(static_cast<std::uint8_t>(v >> shift));
}

std::uint16_t fold(std::uint32_t sum) {
  while (sum >> 16) sum = (sum & 0xFFFF) + (sum >> 16);
  return static_cast<std::uint16_t>(sum);
}

Bytes ip_header_bytes(const Ipv4Header& ip, std::uint16_t checksum) {
  Bytes out;
  out.reserve(kIpMinHeader + ip.options.size());
  out.push_back(static_cast<std::uint8_t>((ip.version << 4) | (ip.ihl & 0x0F)));
  out.push_back(ip.tos);
  store16(out, ip.total_length);
  store16(out, ip.identification);
  store16(out, ip.flags_fragment);
  out.push_back(ip.ttl);
  out.push_back(ip.protocol);
  store16(out, checksum);
  store32(out, ip.src_addr);
  store32(out, ip.dst_addr);
  out.insert(out.end(), ip.options.begin(), ip.options.end());
  return out;
}

void append_tcp_header(Bytes& out, const TcpHeader& tcp, std::uint16_t checksum) {
  store16(out, tcp.src_port);
  store16(out, tcp.dst_port);
  store32(out, tcp.seq_number);
  store32(out, tcp.ack_number);
  out.push_back(static_cast<std::uint8_t>((tcp.data_offset << 4) | ((tcp.reserved & 0x07) << 1) |
                                          (tcp.ns ? 1 : 0)));
  out.push_back(tcp.flags.bits());
  store16(out, tcp.window);
  store16(out, checksum);
  store16(out, tcp.urgent_pointer);
  out.insert(out.end(), tcp.options.begin(), tcp.options.end());
}

[[noreturn]] void violation(const std::string& what) { throw Error(Errc::InvariantViolation, what); }

}  // namespace

std::string TcpFlags::to_string() const {
  static constexpr std::array<std::pair<Bit, const char*>, 8> kNames{{
      {CWR, "CWR"}, {ECE, "ECE"}, {URG, "URG"}, {ACK, "ACK"},
      {PSH, "PSH"}, {RST, "RST"}, {SYN, "SYN"}, {FIN, "FIN"},
  }};
  std::string out;
  for (const auto& [bit, name] : kNames) {
    if (!has(bit)) continue;
    if (!out.empty()) out += '|';
    out += name;
  }
  return out.empty() ? "NONE" : out;
}

std::string format_ipv4(std::uint32_t addr) {
  return std::to_string(addr >> 24) + '.' + std::to_string((addr >> 16) & 0xFF) + '.' +
         std::to_string((addr >> 8) & 0xFF) + '.' + std::to_string(addr & 0xFF);
}

std::uint32_t parse_ipv4(const std::string& text) {
  std::uint32_t addr = 0;
  const char* p = text.data();
  const char* end = text.data() + text.size();
  for (int i = 0; i < 4; ++i) {
    unsigned octet = 0;
    auto [next, ec] = std::from_chars(p, end, octet);
    if (ec != std::errc() || octet > 255) throw Error(Errc::ConfigError, "bad IPv4 address '" + text + "'");
    addr = (addr << 8) | octet;
    p = next;
    if (i < 3) {
      if (p == end || *p != '.') throw Error(Errc::ConfigError, "bad IPv4 address '" + text + "'");
      ++p;
    }
  }
  if (p != end) throw Error(Errc::ConfigError, "bad IPv4 address '" + text + "'");
  return addr;
}

std::string FlowKey::to_string() const {
  return format_ipv4(src_addr) + ':' + std::to_string(src_port) + '>' + format_ipv4(dst_addr) + ':' +
         std::to_string(dst_port);
}

FlowKey FlowKey::parse(const std::string& text) {
  auto endpoint = [&](const std::string& part, std::uint32_t& addr, std::uint16_t& port) {
    auto colon = part.rfind(':');
    if (colon == std::string::npos) throw Error(Errc::ConfigError, "bad flow key '" + text + "'");
    addr = parse_ipv4(part.substr(0, colon));
    unsigned value = 0;
    auto digits = part.substr(colon + 1);
    auto [ptr, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), value);
    if (ec != std::errc() || ptr != digits.data() + digits.size() || value > 0xFFFF)
      throw Error(Errc::ConfigError, "bad port in flow key '" + text + "'");
    port = static_cast<std::uint16_t>(value);
  };
  auto arrow = text.find('>');
  if (arrow == std::string::npos) throw Error(Errc::ConfigError, "bad flow key '" + text + "'");
  FlowKey key;
  endpoint(text.substr(0, arrow), key.src_addr, key.src_port);
  endpoint(text.substr(arrow + 1), key.dst_addr, key.dst_port);
  return key;
}

std::uint32_t ones_complement_sum(ByteView data, std::uint32_t initial) {
  std::uint64_t sum = initial;
  std::size_t i = 0;
  for (; i + 1 < data.size(); i += 2) sum += (std::uint32_t{data[i]} << 8) | data[i + 1];
  if (i < data.size()) sum += std::uint32_t{data[i]} << 8;
  while (sum >> 16) sum = (sum & 0xFFFF) + (sum >> 16);
  return static_cast<std::uint32_t>(sum);
}

std::uint16_t compute_ipv4_checksum(const Ipv4Header& ip) {
  const Bytes hdr = ip_header_bytes(ip, 0);
  return static_cast<std::uint16_t>(~fold(ones_complement_sum(hdr)));
}

std::uint16_t compute_tcp_checksum(const TcpSegment& seg) {
  const std::uint32_t tcp_length = seg.tcp.data_offset * 4u + static_cast<std::uint32_t>(seg.payload.size());
  Bytes pseudo;
  pseudo.reserve(12);
  store32(pseudo, seg.ip.src_addr);
  store32(pseudo, seg.ip.dst_addr);
  pseudo.push_back(0);
  pseudo.push_back(seg.ip.protocol);
  store16(pseudo, static_cast<std::uint16_t>(tcp_length));

  Bytes body;
  body.reserve(kTcpMinHeader + seg.tcp.options.size() + seg.payload.size());
  append_tcp_header(body, seg.tcp, 0);
  body.insert(body.end(), seg.payload.begin(), seg.payload.end());

  std::uint32_t sum = ones_complement_sum(pseudo);
  sum = ones_complement_sum(body, sum);
  return static_cast<std::uint16_t>(~fold(sum));
}

void check_invariants(const TcpSegment& seg) {
  const auto& ip = seg.ip;
  const auto& tcp = seg.tcp;
  if (ip.version != 4) violation("ip.version == 4");
  if (ip.ihl < 5 || ip.ihl > 15) violation("ip.ihl in [5, 15]");
  if (ip.options.size() != (ip.ihl - 5u) * 4u) violation("ip options length == ihl*4 - 20");
  if (tcp.data_offset < 5 || tcp.data_offset > 15) violation("tcp.data_offset in [5, 15]");
  if (tcp.reserved > 7) violation("tcp.reserved in [0, 7]");
  if (tcp.options.size() % 4 != 0) violation("tcp options length is a multiple of 4");
  if (tcp.options.size() != (tcp.data_offset - 5u) * 4u) violation("tcp options length == data_offset*4 - 20");
  const std::size_t expected = ip.ihl * 4u + tcp.data_offset * 4u + seg.payload.size();
  if (ip.total_length != expected) violation("ip.total_length == ihl*4 + data_offset*4 + len(payload)");
}

TcpSegment finalize(TcpSegment seg) {
  if (seg.ip.options.size() % 4 != 0 || seg.ip.options.size() > 40)
    violation("ip options length is a multiple of 4 and at most 40");
  if (seg.tcp.options.size() % 4 != 0) violation("tcp options length is a multiple of 4");
  if (seg.tcp.options.size() > 40) violation("tcp options length at most 40");
  if (seg.tcp.reserved > 7) violation("tcp.reserved in [0, 7]");
  seg.ip.version = 4;
  seg.ip.ihl = static_cast<std::uint8_t>(5 + seg.ip.options.size() / 4);
  seg.tcp.data_offset = static_cast<std::uint8_t>(5 + seg.tcp.options.size() / 4);
  const std::size_t total = seg.ip.ihl * 4u + seg.tcp.data_offset * 4u + seg.payload.size();
  if (total > 0xFFFF) violation("ip.total_length fits in 16 bits");
  seg.ip.total_length = static_cast<std::uint16_t>(total);
  seg.ip.header_checksum = compute_ipv4_checksum(seg.ip);
  seg.tcp.checksum = compute_tcp_checksum(seg);
  seg.ip_checksum_valid = true;
  seg.tcp_checksum_valid = true;
  return seg;
}

Bytes serialize_packet(const TcpSegment& seg, bool recompute) {
  TcpSegment derived;
  const TcpSegment* src = &seg;
  if (recompute) {
    derived = finalize(seg);
    src = &derived;
  } else {
    check_invariants(seg);
  }
  Bytes out = ip_header_bytes(src->ip, src->ip.header_checksum);
  append_tcp_header(out, src->tcp, src->tcp.checksum);
  out.insert(out.end(), src->payload.begin(), src->payload.end());
  return out;
}

TcpSegment parse_packet(ByteView raw, std::uint32_t link_type) {
  if (link_type == kLinkTypeEthernet) {
    if (raw.size() < kEthernetHeader) throw Error(Errc::Truncated, "ethernet header");
    std::size_t offset = 12;
    std::uint16_t ethertype = load16(raw, offset);
    offset += 2;
    if (ethertype == 0x8100) {
      if (raw.size() < offset + 4) throw Error(Errc::Truncated, "802.1Q tag");
      ethertype = load16(raw, offset + 2);
      offset += 4;
    }
    if (ethertype != 0x0800) throw Error(Errc::NotTcp, "ethertype is not IPv4");
    raw = raw.subspan(offset);
  } else if (link_type != kLinkTypeRaw) {
    throw Error(Errc::UnsupportedLinkType, "link type " + std::to_string(link_type));
  }

  if (raw.size() < kIpMinHeader) throw Error(Errc::Truncated, "shorter than minimum IPv4 header");
  TcpSegment seg;
  auto& ip = seg.ip;
  ip.version = raw[0] >> 4;
  ip.ihl = raw[0] & 0x0F;
  if (ip.version != 4) throw Error(Errc::NotTcp, "not IPv4");
  if (ip.ihl < 5) throw Error(Errc::BadOffset, "ihl < 5");
  const std::size_t ip_len = ip.ihl * 4u;
  if (raw.size() < ip_len) throw Error(Errc::Truncated, "IPv4 options");
  ip.tos = raw[1];
  ip.total_length = load16(raw, 2);
  ip.identification = load16(raw, 4);
  ip.flags_fragment = load16(raw, 6);
  ip.ttl = raw[8];
  ip.protocol = raw[9];
  ip.header_checksum = load16(raw, 10);
  ip.src_addr = load32(raw, 12);
  ip.dst_addr = load32(raw, 16);
  ip.options.assign(raw.begin() + kIpMinHeader, raw.begin() + static_cast<std::ptrdiff_t>(ip_len));
  if (ip.protocol != kProtoTcp) throw Error(Errc::NotTcp, "protocol " + std::to_string(ip.protocol));
  if (ip.fragment_offset() != 0) throw Error(Errc::Fragment, "non-initial IPv4 fragment");
  if (ip.total_length < ip_len) throw Error(Errc::Truncated, "total_length below header length");
  if (raw.size() < ip.total_length) throw Error(Errc::Truncated, "capture shorter than total_length");

  // Anything past total_length (e.g. Ethernet padding) is ignored.
  ByteView tcp_bytes = raw.subspan(ip_len, ip.total_length - ip_len);
  if (tcp_bytes.size() < kTcpMinHeader) throw Error(Errc::Truncated, "TCP header");
  auto& tcp = seg.tcp;
  tcp.src_port = load16(tcp_bytes, 0);
  tcp.dst_port = load16(tcp_bytes, 2);
  tcp.seq_number = load32(tcp_bytes, 4);
  tcp.ack_number = load32(tcp_bytes, 8);
  tcp.data_offset = tcp_bytes[12] >> 4;
  tcp.reserved = (tcp_bytes[12] >> 1) & 0x07;
  tcp.ns = (tcp_bytes[12] & 0x01) != 0;
  tcp.flags = TcpFlags(tcp_bytes[13]);
  tcp.window = load16(tcp_bytes, 14);
  tcp.checksum = load16(tcp_bytes, 16);
  tcp.urgent_pointer = load16(tcp_bytes, 18);
  if (tcp.data_offset < 5) throw Error(Errc::BadOffset, "data_offset < 5");
  const std::size_t tcp_len = tcp.data_offset * 4u;
  if (tcp_bytes.size() < tcp_len) throw Error(Errc::Truncated, "TCP options");
  tcp.options.assign(tcp_bytes.begin() + kTcpMinHeader, tcp_bytes.begin() + static_cast<std::ptrdiff_t>(tcp_len));
  seg.payload.assign(tcp_bytes.begin() + static_cast<std::ptrdiff_t>(tcp_len), tcp_bytes.end());

  seg.ip_checksum_valid = compute_ipv4_checksum(ip) == ip.header_checksum;
  seg.tcp_checksum_valid = compute_tcp_checksum(seg) == tcp.checksum;
  return seg;
}

Bytes wrap_ethernet(ByteView ip_packet) {
  static constexpr std::array<std::uint8_t, kEthernetHeader> kHeader{
      0x02, 0x00, 0x00, 0x00, 0x00, 0x02,  // dst
      0x02, 0x00, 0x00, 0x00, 0x00, 0x01,  // src
      0x08, 0x00};
  Bytes out(kHeader.begin(), kHeader.end());
  out.insert(out.end(), ip_packet.begin(), ip_packet.end());
  return out;
}

FlowKey flow_key(const TcpSegment& seg) {
  return {seg.ip.src_addr, seg.tcp.src_port, seg.ip.dst_addr, seg.tcp.dst_port};
}

}  // namespace trapdoor
