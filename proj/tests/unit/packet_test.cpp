#include <doctest.h>

#include "support.hpp"
#include "trapdoor/packet.hpp"
#include "trapdoor/rng.hpp"

using namespace trapdoor;
using testing::require_errc;

TEST_SUITE("packet_model") {
  TEST_CASE("reference SYN parses field by field") {
    const auto raw = testing::reference_syn();
    const TcpSegment s = parse_packet(raw);
    CHECK(s.ip.version == 4);
    CHECK(s.ip.ihl == 5);
    CHECK(s.ip.total_length == 40);
    CHECK(s.ip.identification == 1);
    CHECK(s.ip.ttl == 64);
    CHECK(s.ip.src_addr == 0x0A000001);
    CHECK(s.ip.dst_addr == 0x0A000002);
    CHECK(s.tcp.src_port == 1234);
    CHECK(s.tcp.dst_port == 80);
    CHECK(s.tcp.seq_number == 0x41000000);
    CHECK(s.tcp.data_offset == 5);
    CHECK(s.tcp.flags == TcpFlags(TcpFlags::SYN));
    CHECK(s.tcp.flags.to_string() == "SYN");
    CHECK(s.payload.empty());
    CHECK(s.ip_checksum_valid);
    CHECK(s.tcp_checksum_valid);
  }

  TEST_CASE("checksums agree with the independent summation") {
    const auto raw = testing::reference_syn();
    const TcpSegment s = parse_packet(raw);
    CHECK(compute_tcp_checksum(s) == 0xE3AD);
    CHECK(compute_tcp_checksum(s) == testing::oracle_checksum(testing::tcp_checksum_input(raw)));
    auto ip_hdr = std::vector<std::uint8_t>(raw.begin(), raw.begin() + 20);
    ip_hdr[10] = ip_hdr[11] = 0;
    CHECK(compute_ipv4_checksum(s.ip) == testing::oracle_checksum(ip_hdr));
    CHECK(compute_ipv4_checksum(s.ip) == 0x26CD);
  }

  TEST_CASE("all-zero segment checksums to 0xFFFF") {
    TcpSegment s;
    s.ip.protocol = 0;
    s.tcp.data_offset = 0;
    CHECK(compute_tcp_checksum(s) == 0xFFFF);
  }

  TEST_CASE("truncated and malformed input") {
    require_errc([] { parse_packet(Bytes(10, 0x45)); }, Errc::Truncated);
    auto raw = testing::reference_syn();
    raw[0] = 0x65;
    require_errc([&] { parse_packet(raw); }, Errc::NotTcp);
    raw = testing::reference_syn();
    raw[9] = 17;
    require_errc([&] { parse_packet(raw); }, Errc::NotTcp);
    raw = testing::reference_syn();
    raw[32] = 0x40;  // data offset 4
    require_errc([&] { parse_packet(raw); }, Errc::BadOffset);
    raw = testing::reference_syn();
    raw[6] = 0x00;
    raw[7] = 0x10;  // fragment offset 16
    require_errc([&] { parse_packet(raw); }, Errc::Fragment);
    raw = testing::reference_syn();
    raw.resize(30);
    require_errc([&] { parse_packet(raw); }, Errc::Truncated);
    require_errc([&] { parse_packet(testing::reference_syn(), 113); }, Errc::UnsupportedLinkType);
  }

  TEST_CASE("serialize with recompute reproduces the reference bytes") {
    const auto raw = testing::reference_syn();
    const TcpSegment s = parse_packet(raw);
    CHECK(serialize_packet(s, true) == raw);
    CHECK(serialize_packet(s, false) == raw);
  }

  TEST_CASE("options must be whole words") {
    TcpSegment s = parse_packet(testing::reference_syn());
    s.tcp.options = {0x01, 0x01, 0x01};
    require_errc([&] { serialize_packet(s, true); }, Errc::InvariantViolation);
  }

  TEST_CASE("payload grows total length and changes the checksum") {
    TcpSegment s = parse_packet(testing::reference_syn());
    s.payload = testing::text_bytes("AB");
    const Bytes out = serialize_packet(s, true);
    const TcpSegment back = parse_packet(out);
    CHECK(back.ip.total_length == 42);
    CHECK(back.tcp.checksum != 0xE3AD);
    CHECK(back.tcp.checksum == testing::oracle_checksum(testing::tcp_checksum_input(out)));
    CHECK(back.tcp.checksum == 0xA269);
    CHECK(back.tcp_checksum_valid);
  }

  TEST_CASE("single-bit corruption is caught by the checksum") {
    const auto raw = testing::reference_syn();
    for (std::size_t byte = 20; byte < raw.size(); ++byte) {
      if (byte == 36 || byte == 37) continue;  // the checksum field itself
      for (int bit = 0; bit < 8; ++bit) {
        auto bad = raw;
        bad[byte] ^= static_cast<std::uint8_t>(1u << bit);
        if (byte == 32 && bit >= 4) continue;  // changes the data offset
        const TcpSegment s = parse_packet(bad);
        CHECK_FALSE(s.tcp_checksum_valid);
      }
    }
  }

  TEST_CASE("roundtrip over random well-formed segments") {
    Rng rng(11);
    for (int i = 0; i < 300; ++i) {
      TcpSegment s;
      s.ip.tos = rng.byte();
      s.ip.identification = static_cast<std::uint16_t>(rng.below(0x10000));
      s.ip.ttl = rng.byte();
      s.ip.flags_fragment = rng.bernoulli(0.5) ? Ipv4Header::kDontFragment : 0;
      s.ip.src_addr = static_cast<std::uint32_t>(rng.next());
      s.ip.dst_addr = static_cast<std::uint32_t>(rng.next());
      s.ip.options = rng.bytes(4 * rng.below(3));
      s.tcp.src_port = static_cast<std::uint16_t>(rng.below(0x10000));
      s.tcp.dst_port = static_cast<std::uint16_t>(rng.below(0x10000));
      s.tcp.seq_number = static_cast<std::uint32_t>(rng.next());
      s.tcp.ack_number = static_cast<std::uint32_t>(rng.next());
      s.tcp.reserved = static_cast<std::uint8_t>(rng.below(8));
      s.tcp.ns = rng.bernoulli(0.5);
      s.tcp.flags = TcpFlags(rng.byte());
      s.tcp.window = static_cast<std::uint16_t>(rng.below(0x10000));
      s.tcp.urgent_pointer = static_cast<std::uint16_t>(rng.below(0x10000));
      s.tcp.options = rng.bytes(4 * rng.below(11));
      s.payload = rng.bytes(rng.below(200));
      const Bytes wire = serialize_packet(s, true);
      const TcpSegment back = parse_packet(wire);
      CHECK(back == finalize(s));
      CHECK(back.ip_checksum_valid);
      CHECK(back.tcp_checksum_valid);
      CHECK(compute_tcp_checksum(back) == back.tcp.checksum);
      CHECK(parse_packet(wrap_ethernet(wire), kLinkTypeEthernet) == back);
    }
  }

  TEST_CASE("flow keys") {
    const TcpSegment a = parse_packet(testing::reference_syn());
    TcpSegment b = a;
    b.tcp.seq_number = 99;
    CHECK(flow_key(a) == flow_key(b));
    TcpSegment r = a;
    std::swap(r.ip.src_addr, r.ip.dst_addr);
    std::swap(r.tcp.src_port, r.tcp.dst_port);
    CHECK(flow_key(r) != flow_key(a));
    CHECK(flow_key(r) == flow_key(a).reversed());
    CHECK(flow_key(r).canonical() == flow_key(a).canonical());
    const FlowKey k = flow_key(a);
    CHECK(k.to_string() == "10.0.0.1:1234>10.0.0.2:80");
    CHECK(FlowKey::parse(k.to_string()) == k);
  }

  TEST_CASE("ipv4 text form") {
    CHECK(format_ipv4(0xC0A80001) == "192.168.0.1");
    CHECK(parse_ipv4("192.168.0.1") == 0xC0A80001);
  }
}
