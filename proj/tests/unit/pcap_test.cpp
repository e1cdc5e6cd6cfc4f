#include <doctest.h>

#include <filesystem>

#include "support.hpp"
#include "trapdoor/pcap.hpp"

using namespace trapdoor;
using testing::require_errc;

namespace {

void put32(Bytes& out, std::uint32_t v, bool big) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (big ? 24 - 8 * i : 8 * i)));
}
void put16(Bytes& out, std::uint16_t v, bool big) {
  for (int i = 0; i < 2; ++i) out.push_back(static_cast<std::uint8_t>(v >> (big ? 8 - 8 * i : 8 * i)));
}

// A classic pcap file assembled field by field in the chosen byte order.
Bytes hand_file(bool big, const std::vector<Bytes>& packets) {
  Bytes f;
  put32(f, 0xA1B2C3D4, big);
  put16(f, 2, big);
  put16(f, 4, big);
  put32(f, 0, big);
  put32(f, 0, big);
  put32(f, 65535, big);
  put32(f, 101, big);
  std::uint32_t sec = 1000;
  for (const auto& p : packets) {
    put32(f, sec++, big);
    put32(f, 250, big);
    put32(f, static_cast<std::uint32_t>(p.size()), big);
    put32(f, static_cast<std::uint32_t>(p.size()), big);
    f.insert(f.end(), p.begin(), p.end());
  }
  return f;
}

}  // namespace

TEST_SUITE("packet_model") {
  TEST_CASE("header-only capture") {
    const CaptureSet c = decode_capture(hand_file(false, {}));
    CHECK(c.records.empty());
    CHECK(c.link_type == kLinkTypeRaw);
  }

  TEST_CASE("one record") {
    const CaptureSet c = decode_capture(hand_file(false, {testing::reference_syn()}));
    REQUIRE(c.records.size() == 1);
    CHECK(c.records[0].raw.size() == 40);
    CHECK(c.records[0].ts.sec == 1000);
    CHECK(c.records[0].ts.usec == 250);
    REQUIRE(c.records[0].parse.has_value());
    CHECK(c.records[0].parse->tcp.seq_number == 0x41000000);
  }

  TEST_CASE("byte-swapped file equals its native twin") {
    const std::vector<Bytes> pkts{testing::reference_syn(), Bytes(10, 0x45)};
    const CaptureSet le = decode_capture(hand_file(false, pkts));
    const CaptureSet be = decode_capture(hand_file(true, pkts));
    REQUIRE(le.records.size() == 2);
    REQUIRE(be.records.size() == 2);
    CHECK(le.link_type == be.link_type);
    for (std::size_t i = 0; i < 2; ++i) {
      CHECK(le.records[i].ts == be.records[i].ts);
      CHECK(le.records[i].raw == be.records[i].raw);
      CHECK(le.records[i].parse == be.records[i].parse);
      CHECK(le.records[i].parse_error == be.records[i].parse_error);
    }
    CHECK(le.records[1].parse_error == Errc::Truncated);
  }

  TEST_CASE("bad magic and truncated records") {
    Bytes f = hand_file(false, {testing::reference_syn()});
    Bytes bad = f;
    bad[0] = 0;
    require_errc([&] { decode_capture(bad); }, Errc::BadMagic);
    f.pop_back();
    require_errc([&] { decode_capture(f); }, Errc::TruncatedRecord);
  }

  TEST_CASE("write then read is bit-identical") {
    const Bytes original = hand_file(false, {testing::reference_syn(), testing::reference_syn()});
    const CaptureSet c = decode_capture(original);
    CHECK(encode_capture(c) == original);
    const auto path = std::filesystem::temp_directory_path() / "trapdoor_pcap_test.pcap";
    write_capture(c, path);
    const CaptureSet back = read_capture(path);
    CHECK(encode_capture(back) == original);
    std::filesystem::remove(path);
    require_errc([&] { read_capture(path); }, Errc::IoError);
  }
}
