#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>

#include "trapdoor/detection.hpp"
#include "trapdoor/error.hpp"

namespace trapdoor::detect {

namespace {

bool pure_syn(const TcpSegment& seg) {
  return seg.tcp.flags.has(TcpFlags::SYN) && !seg.tcp.flags.has(TcpFlags::ACK);
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

// P(X >= m) for X ~ Binomial(n, p).
double binomial_upper_tail(std::size_t n, std::size_t m, double p) {
  double tail = 0.0;
  const double lp = std::log(p);
  const double lq = std::log1p(-p);
  for (std::size_t j = m; j <= n; ++j) {
    const double lchoose = std::lgamma(n + 1.0) - std::lgamma(j + 1.0) - std::lgamma(n - j + 1.0);
    tail += std::exp(lchoose + static_cast<double>(j) * lp + static_cast<double>(n - j) * lq);
  }
  return std::min(tail, 1.0);
}

}  // namespace

SessionBaseline SessionBaseline::empty_frozen() {
  SessionBaseline b;
  b.frozen = true;
  return b;
}

SessionBaseline learn_baseline(std::span<const IndexedSegment> stream, const LearningConfig& cfg) {
  if (stream.empty()) throw Error(Errc::EmptyLearningStream, "no packets in the learning stream");
  SessionBaseline b;
  b.t_prime_seconds = cfg.t_prime_seconds;
  b.d_prime_packets = cfg.d_prime_packets;
  const std::uint64_t start = stream.front().ts.micros();
  const double limit_us = cfg.t_prime_seconds * 1e6;
  std::size_t reserved_nonzero = 0;
  std::uint64_t last = start;
  for (const auto& item : stream) {
    if (b.packets_consumed >= cfg.d_prime_packets) break;
    const std::uint64_t now = item.ts.micros();
    if (now > start && static_cast<double>(now - start) >= limit_us) break;
    const TcpSegment& seg = *item.segment;
    ++b.flag_combo_counts[seg.tcp.flags.bits()];
    if (pure_syn(seg)) {
      ++b.syn_count;
      ++b.isn_high_byte_counts[seg.tcp.seq_number >> 24];
    }
    reserved_nonzero += seg.tcp.reserved != 0;
    ++b.packets_consumed;
    last = std::max(last, now);
  }
  if (b.packets_consumed > 0)
    b.reserved_nonzero_rate = static_cast<double>(reserved_nonzero) / static_cast<double>(b.packets_consumed);
  b.duration_seconds = static_cast<double>(last - start) / 1e6;
  b.frozen = true;
  return b;
}

StatisticalResult score_statistical(const SessionBaseline& baseline, const FlowKey& flow,
                                    std::span<const IndexedSegment> window, const StatisticalConfig& cfg) {
  using namespace rule_id;
  if (!baseline.frozen) throw Error(Errc::InvariantViolation, "statistical scoring needs a frozen baseline");
  StatisticalResult result;
  if (window.empty()) {
    ++result.skipped_isn;
    ++result.skipped_flag;
    ++result.skipped_ipid;
    return result;
  }
  const std::size_t anchor = window.back().index;
  const Timestamp ts = window.back().ts;
  auto emit = [&](std::string_view rule, Evidence ev, double p) {
    Finding f = make_finding(rule, flow, std::nullopt, ts, std::move(ev), p);
    f.anchor_index = anchor;
    result.findings.push_back(std::move(f));
  };

  // ISN high-byte uniformity over pure SYNs.
  std::array<std::uint64_t, 256> hist{};
  std::vector<std::size_t> syn_indices;
  for (const auto& item : window) {
    if (!pure_syn(*item.segment)) continue;
    ++hist[item.segment->tcp.seq_number >> 24];
    syn_indices.push_back(item.index);
  }
  if (syn_indices.size() < cfg.min_syn) {
    ++result.skipped_isn;
  } else {
    const double expected = static_cast<double>(syn_indices.size()) / 256.0;
    double chi2 = 0.0;
    std::size_t distinct = 0;
    for (auto c : hist) {
      const double d = static_cast<double>(c) - expected;
      chi2 += d * d / expected;
      distinct += c != 0;
    }
    const double p = randomness::chi_square_survival(chi2, 255.0);
    if (p < cfg.alpha) {
      emit(kIsnDistribution,
           {{"syn_count", std::to_string(syn_indices.size())},
            {"chi_square", fmt(chi2)},
            {"distinct_high_bytes", std::to_string(distinct)}},
           p);
      result.flagged_packets = syn_indices;
    }
  }

  // Flag-combination frequencies against the baseline.
  if (baseline.packets_consumed == 0 || window.size() < cfg.flag_min_packets) {
    ++result.skipped_flag;
  } else {
    std::map<std::uint8_t, std::uint64_t> observed;
    for (const auto& item : window) ++observed[item.segment->tcp.flags.bits()];
    std::map<std::uint8_t, std::pair<double, double>> cells;  // combo -> (observed, baseline)
    for (auto [combo, n] : baseline.flag_combo_counts) cells[combo].second = static_cast<double>(n);
    for (auto [combo, n] : observed) cells[combo].first = static_cast<double>(n);
    if (cells.size() >= 2) {
      const double k = static_cast<double>(cells.size());
      const double total_base = static_cast<double>(baseline.packets_consumed);
      const double n = static_cast<double>(window.size());
      double chi2 = 0.0;
      double worst = -1.0;
      std::uint8_t worst_combo = 0;
      for (const auto& [combo, cell] : cells) {
        const double expected = n * (cell.second + 0.5) / (total_base + 0.5 * k);
        const double term = (cell.first - expected) * (cell.first - expected) / expected;
        chi2 += term;
        if (term > worst) {
          worst = term;
          worst_combo = combo;
        }
      }
      const double p = randomness::chi_square_survival(chi2, k - 1.0);
      if (p < cfg.alpha)
        emit(kFlagDist,
             {{"chi_square", fmt(chi2)},
              {"categories", std::to_string(cells.size())},
              {"window_packets", std::to_string(window.size())},
              {"most_divergent", TcpFlags(worst_combo).to_string()}},
             p);
    }
  }

  // IP identification constancy.
  if (window.size() < cfg.ipid_min_packets) {
    ++result.skipped_ipid;
  } else {
    std::map<std::uint16_t, std::size_t> ids;
    for (const auto& item : window) ++ids[item.segment->ip.identification];
    const auto mode = std::max_element(ids.begin(), ids.end(),
                                       [](const auto& a, const auto& b) { return a.second < b.second; });
    const double fraction = static_cast<double>(mode->second) / static_cast<double>(window.size());
    if (fraction > cfg.ipid_constancy) {
      // Union bound over the 2^16 possible IDs for uniformly drawn IDs.
      const double p = std::min(1.0, 65536.0 * binomial_upper_tail(window.size(), mode->second, 1.0 / 65536.0));
      emit(kIpidConstant,
           {{"ip_id", std::to_string(mode->first)},
            {"fraction", fmt(fraction)},
            {"window_packets", std::to_string(window.size())}},
           p);
    }
  }
  return result;
}

}  // namespace trapdoor::detect
