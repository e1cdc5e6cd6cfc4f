#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "trapdoor/packet.hpp"

// Randomness battery applied to recovered nonces and key material:
// frequency (monobit), runs, byte chi-square and the two-bit serial test.
namespace trapdoor::randomness {

inline constexpr double kDefaultAlpha = 0.01;

enum class SourceTag { RecoveredNonces, KeyMaterial, Other };
enum class Verdict { Pass, Fail, InsufficientData };
enum class Overall { Random, NonRandom, InsufficientData };

std::string to_string(SourceTag t);
std::string to_string(Verdict v);
std::string to_string(Overall o);

struct BitStream {
  std::vector<std::uint8_t> bits;  // one 0/1 per element
  SourceTag source = SourceTag::Other;

  static BitStream from_bytes(ByteView bytes, SourceTag source = SourceTag::Other);
  /// "1011" style literal; other characters are ignored.
  static BitStream from_string(const std::string& text, SourceTag source = SourceTag::Other);
  void append_bytes(ByteView bytes);
  std::size_t size() const { return bits.size(); }
  /// Whole bytes, MSB first; a trailing partial byte is dropped.
  Bytes to_bytes() const;
};

struct TestResult {
  std::string test_name;
  double statistic = 0.0;
  double p_value = 1.0;
  Verdict verdict = Verdict::InsufficientData;
  std::size_t n_bits_used = 0;
  std::string reason;  // set for INSUFFICIENT_DATA
};

struct SuiteReport {
  std::vector<TestResult> results;
  double alpha = kDefaultAlpha;
  Overall overall = Overall::InsufficientData;
  SourceTag source = SourceTag::Other;

  /// Smallest p-value among tests that had enough data; 1 when none did.
  double min_p_value() const;
};

inline constexpr std::size_t kMonobitMinBits = 100;
inline constexpr std::size_t kRunsMinBits = 100;
inline constexpr std::size_t kChiSquareMinBytes = 256 * 5;
inline constexpr std::size_t kSerialMinBits = 100;

/// s_obs = |#1 - #0| / sqrt(n), p = erfc(s_obs / sqrt 2).
TestResult monobit_test(const BitStream& bs, double alpha = kDefaultAlpha, std::size_t min_bits = kMonobitMinBits);

/// Number of runs V against its expectation given the ones ratio pi.
/// Requires |pi - 1/2| < 2/sqrt(n).
TestResult runs_test(const BitStream& bs, double alpha = kDefaultAlpha, std::size_t min_bits = kRunsMinBits);

/// Byte-frequency uniformity, 255 degrees of freedom.
TestResult chi_square_bytes(const BitStream& bs, double alpha = kDefaultAlpha,
                            std::size_t min_bytes = kChiSquareMinBytes);

/// Overlapping two-bit test:
/// X = 4/(n-1) sum n_ij^2 - 2/n sum n_i^2 + 1, 2 degrees of freedom.
TestResult serial_two_bit_test(const BitStream& bs, double alpha = kDefaultAlpha,
                               std::size_t min_bits = kSerialMinBits);

SuiteReport run_suite(const BitStream& bs, double alpha = kDefaultAlpha);

/// Upper regularized incomplete gamma Q(a, x), series below x < a+1 and a
/// Lentz continued fraction above.
double regularized_gamma_q(double a, double x);

/// P(X >= x) for X ~ chi-square(df).
double chi_square_survival(double x, double df);

}  // namespace trapdoor::randomness
