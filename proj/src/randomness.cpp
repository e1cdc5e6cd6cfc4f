#include "trapdoor/randomness.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>

#include "trapdoor/error.hpp"

namespace trapdoor::randomness {

namespace {

constexpr double kEps = 1e-16;
constexpr int kMaxIter = 100000;

TestResult insufficient(std::string name, std::size_t n, std::string reason) {
  TestResult r;
  r.test_name = std::move(name);
  r.n_bits_used = n;
  r.verdict = Verdict::InsufficientData;
  r.reason = std::move(reason);
  return r;
}

TestResult decided(std::string name, std::size_t n, double statistic, double p, double alpha) {
  TestResult r;
  r.test_name = std::move(name);
  r.n_bits_used = n;
  r.statistic = statistic;
  r.p_value = std::clamp(p, 0.0, 1.0);
  r.verdict = r.p_value < alpha ? Verdict::Fail : Verdict::Pass;
  return r;
}

double gamma_p_series(double a, double x) {
  double term = 1.0 / a;
  double sum = term;
  for (int n = 1; n < kMaxIter; ++n) {
    term *= x / (a + n);
    sum += term;
    if (std::fabs(term) < std::fabs(sum) * kEps) break;
  }
  return sum * std::exp(-x + a * std::log(x) - std::lgamma(a));
}

double gamma_q_continued_fraction(double a, double x) {
  constexpr double tiny = std::numeric_limits<double>::min() / kEps;
  double b = x + 1.0 - a;
  double c = 1.0 / tiny;
  double d = 1.0 / b;
  double h = d;
  for (int i = 1; i < kMaxIter; ++i) {
    const double an = -i * (i - a);
    b += 2.0;
    d = an * d + b;
    if (std::fabs(d) < tiny) d = tiny;
    c = b + an / c;
    if (std::fabs(c) < tiny) c = tiny;
    d = 1.0 / d;
    const double delta = d * c;
    h *= delta;
    if (std::fabs(delta - 1.0) < kEps) break;
  }
  return std::exp(-x + a * std::log(x) - std::lgamma(a)) * h;
}

}  // namespace

std::string to_string(SourceTag t) {
  switch (t) {
    case SourceTag::RecoveredNonces: return "RECOVERED_NONCES";
    case SourceTag::KeyMaterial: return "KEY_MATERIAL";
    case SourceTag::Other: return "OTHER";
  }
  return "OTHER";
}

std::string to_string(Verdict v) {
  switch (v) {
    case Verdict::Pass: return "PASS";
    case Verdict::Fail: return "FAIL";
    case Verdict::InsufficientData: return "INSUFFICIENT_DATA";
  }
  return "INSUFFICIENT_DATA";
}

std::string to_string(Overall o) {
  switch (o) {
    case Overall::Random: return "RANDOM";
    case Overall::NonRandom: return "NON_RANDOM";
    case Overall::InsufficientData: return "INSUFFICIENT_DATA";
  }
  return "INSUFFICIENT_DATA";
}

BitStream BitStream::from_bytes(ByteView bytes, SourceTag source) {
  BitStream bs;
  bs.source = source;
  bs.append_bytes(bytes);
  return bs;
}

BitStream BitStream::from_string(const std::string& text, SourceTag source) {
  BitStream bs;
  bs.source = source;
  for (char c : text)
    if (c == '0' || c == '1') bs.bits.push_back(static_cast<std::uint8_t>(c - '0'));
  return bs;
}

void BitStream::append_bytes(ByteView bytes) {
  bits.reserve(bits.size() + 8 * bytes.size());
  for (std::uint8_t b : bytes)
    for (int i = 7; i >= 0; --i) bits.push_back((b >> i) & 1);
}

Bytes BitStream::to_bytes() const {
  Bytes out(bits.size() / 8, 0);
  for (std::size_t i = 0; i < out.size() * 8; ++i)
    if (bits[i]) out[i / 8] |= static_cast<std::uint8_t>(0x80u >> (i % 8));
  return out;
}

double SuiteReport::min_p_value() const {
  double p = 1.0;
  for (const auto& r : results)
    if (r.verdict != Verdict::InsufficientData) p = std::min(p, r.p_value);
  return p;
}

double regularized_gamma_q(double a, double x) {
  if (!(a > 0.0) || x < 0.0 || std::isnan(x)) throw Error(Errc::InvariantViolation, "regularized_gamma_q domain");
  if (x == 0.0) return 1.0;
  if (std::isinf(x)) return 0.0;
  if (x < a + 1.0) return std::clamp(1.0 - gamma_p_series(a, x), 0.0, 1.0);
  return std::clamp(gamma_q_continued_fraction(a, x), 0.0, 1.0);
}

double chi_square_survival(double x, double df) { return regularized_gamma_q(df / 2.0, x / 2.0); }

TestResult monobit_test(const BitStream& bs, double alpha, std::size_t min_bits) {
  const std::size_t n = bs.size();
  if (n < min_bits || n == 0)
    return insufficient("monobit", n, "needs at least " + std::to_string(min_bits) + " bits");
  const auto ones = static_cast<double>(std::count(bs.bits.begin(), bs.bits.end(), 1));
  const double sum = 2.0 * ones - static_cast<double>(n);
  const double s_obs = std::fabs(sum) / std::sqrt(static_cast<double>(n));
  return decided("monobit", n, s_obs, std::erfc(s_obs / std::sqrt(2.0)), alpha);
}

TestResult runs_test(const BitStream& bs, double alpha, std::size_t min_bits) {
  const std::size_t n = bs.size();
  if (n < min_bits || n == 0) return insufficient("runs", n, "needs at least " + std::to_string(min_bits) + " bits");
  const double nd = static_cast<double>(n);
  const double pi = static_cast<double>(std::count(bs.bits.begin(), bs.bits.end(), 1)) / nd;
  if (std::fabs(pi - 0.5) >= 2.0 / std::sqrt(nd)) return insufficient("runs", n, "frequency prerequisite failed");
  std::size_t runs = 1;
  for (std::size_t i = 0; i + 1 < n; ++i) runs += bs.bits[i] != bs.bits[i + 1];
  const double v = static_cast<double>(runs);
  const double spread = pi * (1.0 - pi);
  const double p = std::erfc(std::fabs(v - 2.0 * nd * spread) / (2.0 * std::sqrt(2.0 * nd) * spread));
  return decided("runs", n, v, p, alpha);
}

TestResult chi_square_bytes(const BitStream& bs, double alpha, std::size_t min_bytes) {
  const std::size_t n_bytes = bs.size() / 8;
  if (n_bytes < min_bytes || n_bytes == 0)
    return insufficient("chi_square_bytes", bs.size(), "needs at least " + std::to_string(min_bytes) + " bytes");
  std::array<std::size_t, 256> counts{};
  for (std::uint8_t b : bs.to_bytes()) ++counts[b];
  const double expected = static_cast<double>(n_bytes) / 256.0;
  double chi2 = 0.0;
  for (std::size_t c : counts) {
    const double d = static_cast<double>(c) - expected;
    chi2 += d * d / expected;
  }
  return decided("chi_square_bytes", n_bytes * 8, chi2, chi_square_survival(chi2, 255.0), alpha);
}

TestResult serial_two_bit_test(const BitStream& bs, double alpha, std::size_t min_bits) {
  const std::size_t n = bs.size();
  if (n < min_bits || n < 2)
    return insufficient("serial_two_bit", n, "needs at least " + std::to_string(min_bits) + " bits");
  std::array<double, 2> single{};
  std::array<double, 4> pairs{};
  for (std::size_t i = 0; i < n; ++i) {
    single[bs.bits[i]] += 1.0;
    if (i + 1 < n) pairs[2u * bs.bits[i] + bs.bits[i + 1]] += 1.0;
  }
  const double nd = static_cast<double>(n);
  double sum_pairs = 0.0;
  for (double c : pairs) sum_pairs += c * c;
  const double sum_single = single[0] * single[0] + single[1] * single[1];
  const double x = 4.0 / (nd - 1.0) * sum_pairs - 2.0 / nd * sum_single + 1.0;
  return decided("serial_two_bit", n, x, chi_square_survival(std::max(x, 0.0), 2.0), alpha);
}

SuiteReport run_suite(const BitStream& bs, double alpha) {
  SuiteReport report;
  report.alpha = alpha;
  report.source = bs.source;
  report.results = {monobit_test(bs, alpha), runs_test(bs, alpha), chi_square_bytes(bs, alpha),
                    serial_two_bit_test(bs, alpha)};
  bool any_sufficient = false;
  bool any_fail = false;
  for (const auto& r : report.results) {
    any_sufficient |= r.verdict != Verdict::InsufficientData;
    any_fail |= r.verdict == Verdict::Fail;
  }
  report.overall = any_fail ? Overall::NonRandom : any_sufficient ? Overall::Random : Overall::InsufficientData;
  return report;
}

}  // namespace trapdoor::randomness
