#pragma once

#include <doctest.h>

#include <cstdint>
#include <string>
#include <vector>

#include "trapdoor/error.hpp"
#include "trapdoor/packet.hpp"

namespace testing {

// Fails the current test unless fn throws trapdoor::Error with the given code.
template <typename Fn>
void require_errc(Fn&& fn, trapdoor::Errc expected) {
  try {
    fn();
  } catch (const trapdoor::Error& e) {
    CHECK_MESSAGE(e.code() == expected, "got ", e.what());
    return;
  }
  FAIL("expected error ", trapdoor::to_string(expected));
}

inline std::vector<std::uint8_t> hex(const std::string& text) {
  std::vector<std::uint8_t> out;
  std::string digits;
  for (char c : text)
    if (std::isxdigit(static_cast<unsigned char>(c))) digits += c;
  for (std::size_t i = 0; i + 1 < digits.size(); i += 2)
    out.push_back(static_cast<std::uint8_t>(std::stoi(digits.substr(i, 2), nullptr, 16)));
  return out;
}

inline trapdoor::Bytes text_bytes(const std::string& s) { return {s.begin(), s.end()}; }

// Independent RFC 1071 summation: big-endian 16-bit words, odd byte padded,
// end-around carry, complement.
inline std::uint16_t oracle_checksum(const std::vector<std::uint8_t>& data) {
  std::uint64_t sum = 0;
  for (std::size_t i = 0; i < data.size(); i += 2) {
    std::uint32_t word = std::uint32_t{data[i]} << 8;
    if (i + 1 < data.size()) word |= data[i + 1];
    sum += word;
  }
  while (sum >> 16) sum = (sum & 0xFFFF) + (sum >> 16);
  return static_cast<std::uint16_t>(~sum & 0xFFFF);
}

// 40-byte IPv4+TCP SYN 10.0.0.1:1234 -> 10.0.0.2:80, seq 0x41000000,
// window 0x7210, IP ID 1, DF, TTL 64. Checksums filled in by hand.
inline std::vector<std::uint8_t> reference_syn() {
  return hex(
      "45 00 00 28 00 01 40 00 40 06 26 cd 0a 00 00 01 0a 00 00 02"
      "04 d2 00 50 41 00 00 00 00 00 00 00 50 02 72 10 e3 ad 00 00");
}

// Pseudo-header + TCP bytes for oracle_checksum.
inline std::vector<std::uint8_t> tcp_checksum_input(const std::vector<std::uint8_t>& ip_packet) {
  const std::size_t ihl = (ip_packet[0] & 0x0F) * 4;
  const std::size_t total = (std::size_t{ip_packet[2]} << 8) | ip_packet[3];
  std::vector<std::uint8_t> out(ip_packet.begin() + 12, ip_packet.begin() + 20);
  const std::size_t tcp_len = total - ihl;
  out.push_back(0);
  out.push_back(ip_packet[9]);
  out.push_back(static_cast<std::uint8_t>(tcp_len >> 8));
  out.push_back(static_cast<std::uint8_t>(tcp_len));
  std::vector<std::uint8_t> tcp(ip_packet.begin() + static_cast<std::ptrdiff_t>(ihl),
                                ip_packet.begin() + static_cast<std::ptrdiff_t>(total));
  tcp[16] = tcp[17] = 0;
  out.insert(out.end(), tcp.begin(), tcp.end());
  return out;
}

}  // namespace testing
