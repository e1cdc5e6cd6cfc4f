#include <doctest.h>

#include <boost/math/special_functions/gamma.hpp>

#include <cmath>
#include <map>

#include "support.hpp"
#include "trapdoor/randomness.hpp"
#include "trapdoor/rng.hpp"

using namespace trapdoor;
using namespace trapdoor::randomness;

namespace {

BitStream seeded_bits(std::uint64_t seed, std::size_t n) {
  Rng rng(seed);
  BitStream bs;
  for (std::size_t i = 0; i < n; ++i) bs.bits.push_back(static_cast<std::uint8_t>(rng.next() >> 63));
  return bs;
}

// Straight transcriptions of the textbook formulas.
double runs_oracle(const BitStream& bs) {
  const double n = static_cast<double>(bs.size());
  double ones = 0;
  for (auto b : bs.bits) ones += b;
  const double pi = ones / n;
  double v = 1;
  for (std::size_t i = 1; i < bs.size(); ++i) v += bs.bits[i] != bs.bits[i - 1];
  return std::erfc(std::fabs(v - 2 * n * pi * (1 - pi)) / (2 * std::sqrt(2 * n) * pi * (1 - pi)));
}

double serial_oracle(const BitStream& bs) {
  const std::size_t n = bs.size();
  double n1[2] = {0, 0};
  double n2[4] = {0, 0, 0, 0};
  for (std::size_t i = 0; i < n; ++i) n1[bs.bits[i]] += 1;
  for (std::size_t i = 0; i + 1 < n; ++i) n2[2 * bs.bits[i] + bs.bits[i + 1]] += 1;
  double s2 = 0, s1 = 0;
  for (double c : n2) s2 += c * c;
  for (double c : n1) s1 += c * c;
  const double x = 4.0 / static_cast<double>(n - 1) * s2 - 2.0 / static_cast<double>(n) * s1 + 1;
  return boost::math::gamma_q(1.0, x / 2);
}

const std::string kText =
    "It was the best of times, it was the worst of times, it was the age of wisdom, it was the age of "
    "foolishness, it was the epoch of belief, it was the epoch of incredulity, it was the season of Light, "
    "it was the season of Darkness, it was the spring of hope, it was the winter of despair. ";

}  // namespace

TEST_SUITE("rng_tests") {
  TEST_CASE("monobit") {
    const TestResult zeros = monobit_test(BitStream::from_string(std::string(100, '0')));
    CHECK(zeros.statistic == doctest::Approx(10.0));
    CHECK(zeros.p_value < 1e-20);
    CHECK(zeros.verdict == Verdict::Fail);

    const BitStream ten = BitStream::from_string("1011010101");
    const TestResult short_run = monobit_test(ten);
    CHECK(short_run.verdict == Verdict::InsufficientData);
    CHECK(short_run.p_value == 1.0);
    CHECK_FALSE(short_run.reason.empty());
    const TestResult lowered = monobit_test(ten, 0.01, 10);
    const double oracle = std::erfc((2.0 / std::sqrt(10.0)) / std::sqrt(2.0));
    CHECK(std::fabs(lowered.p_value - oracle) < 1e-12);
    CHECK(std::fabs(lowered.p_value - 0.5271) <= 1e-3);
    CHECK(lowered.verdict == Verdict::Pass);

    std::string balanced;
    for (int i = 0; i < 50; ++i) balanced += "10";
    const TestResult even = monobit_test(BitStream::from_string(balanced));
    CHECK(even.p_value == 1.0);
    CHECK(even.verdict == Verdict::Pass);
  }

  TEST_CASE("runs") {
    std::string alt;
    for (int i = 0; i < 50; ++i) alt += "01";
    const TestResult r = runs_test(BitStream::from_string(alt));
    CHECK(r.statistic == 100.0);
    CHECK(r.p_value < 1e-10);
    CHECK(r.verdict == Verdict::Fail);

    const BitStream bs = seeded_bits(31, 1000);
    const TestResult ok = runs_test(bs);
    CHECK(ok.p_value == doctest::Approx(runs_oracle(bs)).epsilon(1e-12));
    CHECK(ok.verdict == Verdict::Pass);

    const TestResult ones = runs_test(BitStream::from_string(std::string(200, '1')));
    CHECK(ones.verdict == Verdict::InsufficientData);
    CHECK(ones.p_value == 1.0);
  }

  TEST_CASE("byte chi-square") {
    Bytes uniform;
    for (int rep = 0; rep < 5; ++rep)
      for (int b = 0; b < 256; ++b) uniform.push_back(static_cast<std::uint8_t>(b));
    const TestResult u = chi_square_bytes(BitStream::from_bytes(uniform));
    CHECK(u.statistic == 0.0);
    CHECK(u.p_value == 1.0);
    CHECK(u.verdict == Verdict::Pass);

    const TestResult a = chi_square_bytes(BitStream::from_bytes(Bytes(1280, 0x41)));
    const double oracle = (1280.0 - 5) * (1280.0 - 5) / 5 + 255 * 25.0 / 5;
    CHECK(oracle == 326400.0);
    CHECK(a.statistic == 326400.0);
    CHECK(a.p_value < 1e-100);
    CHECK(a.verdict == Verdict::Fail);

    CHECK(chi_square_bytes(BitStream::from_bytes(Bytes(1000, 0x41))).verdict == Verdict::InsufficientData);
  }

  TEST_CASE("two-bit serial") {
    for (std::uint64_t seed : {1u, 2u, 3u}) {
      const BitStream bs = seeded_bits(seed, 2000);
      CHECK(serial_two_bit_test(bs).p_value == doctest::Approx(serial_oracle(bs)).epsilon(1e-10));
    }
    std::string pattern;
    for (int i = 0; i < 100; ++i) pattern += "0011";
    CHECK(serial_two_bit_test(BitStream::from_string(pattern)).verdict == Verdict::Pass);
    std::string blocks;
    for (int i = 0; i < 50; ++i) blocks += "00000000111111110000";
    CHECK(serial_two_bit_test(BitStream::from_string(blocks)).verdict == Verdict::Fail);
  }

  TEST_CASE("incomplete gamma matches boost") {
    for (double a : {0.5, 1.0, 2.5, 10.0, 127.5, 500.0})
      for (double x : {0.01, 0.5, 1.0, 3.0, 10.0, 100.0, 130.0, 600.0}) {
        const double ours = regularized_gamma_q(a, x);
        const double ref = boost::math::gamma_q(a, x);
        CHECK_MESSAGE(std::fabs(ours - ref) <= 1e-12 + 1e-9 * ref, "a=", a, " x=", x);
      }
    CHECK(chi_square_survival(0.0, 255) == 1.0);
    CHECK(chi_square_survival(255.0, 255) == doctest::Approx(boost::math::gamma_q(127.5, 127.5)).epsilon(1e-10));
  }

  TEST_CASE("suite verdicts") {
    const SuiteReport empty = run_suite(BitStream{});
    CHECK(empty.overall == Overall::InsufficientData);
    CHECK(empty.min_p_value() == 1.0);

    std::string text;
    while (text.size() < 1400) text += kText;
    const SuiteReport ascii = run_suite(BitStream::from_bytes(testing::text_bytes(text)));
    CHECK(ascii.overall == Overall::NonRandom);

    const SuiteReport uniform = run_suite(seeded_bits(99, 10000));
    CHECK(uniform.overall == Overall::Random);
    for (const auto& r : uniform.results) {
      CHECK(r.p_value >= 0.0);
      CHECK(r.p_value <= 1.0);
    }

    const SuiteReport again = run_suite(seeded_bits(99, 10000));
    REQUIRE(again.results.size() == uniform.results.size());
    for (std::size_t i = 0; i < again.results.size(); ++i) {
      CHECK(again.results[i].p_value == uniform.results[i].p_value);
      CHECK(again.results[i].verdict == uniform.results[i].verdict);
    }
  }

  TEST_CASE("false alarm rate under uniform input") {
    std::map<std::string, int> fails;
    for (std::uint64_t seed = 1000; seed < 1200; ++seed) {
      const SuiteReport r = run_suite(seeded_bits(seed, 12000));
      for (const auto& t : r.results) {
        CHECK(t.p_value >= 0.0);
        CHECK(t.p_value <= 1.0);
        if (t.verdict == Verdict::Fail) ++fails[t.test_name];
      }
    }
    for (const auto& [name, count] : fails) CHECK_MESSAGE(count <= 10, name, " failed ", count, "/200");
  }

  TEST_CASE("bit packing") {
    const BitStream bs = BitStream::from_bytes(testing::hex("a5 0f"));
    CHECK(bs.size() == 16);
    CHECK(bs.bits[0] == 1);
    CHECK(bs.bits[1] == 0);
    CHECK(bs.to_bytes() == testing::hex("a5 0f"));
  }
}
