#include <doctest.h>

#include <cmath>

#include "support.hpp"
#include "trapdoor/covert_tcp.hpp"
#include "trapdoor/detection.hpp"
#include "trapdoor/rng.hpp"

using namespace trapdoor;
using namespace trapdoor::detect;
using testing::require_errc;

namespace {

TcpSegment syn_with_seq(std::uint32_t seq) {
  TcpSegment s = parse_packet(testing::reference_syn());
  s.tcp.seq_number = seq;
  return finalize(s);
}

// Distinct IP IDs so IP-ID constancy stays quiet.
std::vector<TcpSegment> with_ids(std::vector<TcpSegment> segs) {
  for (std::size_t i = 0; i < segs.size(); ++i) {
    segs[i].ip.identification = static_cast<std::uint16_t>(i * 7 + 1);
    segs[i] = finalize(segs[i]);
  }
  return segs;
}

std::vector<IndexedSegment> index_all(const std::vector<TcpSegment>& segs, std::uint64_t step_us = 1000) {
  std::vector<IndexedSegment> out;
  for (std::size_t i = 0; i < segs.size(); ++i) out.push_back({i, Timestamp::from_micros(i * step_us), &segs[i]});
  return out;
}

std::vector<std::string> rule_ids(const std::vector<Finding>& fs) {
  std::vector<std::string> out;
  for (const auto& f : fs) out.push_back(f.rule_id);
  return out;
}

std::vector<TcpSegment> uniform_syns(std::uint64_t seed, std::size_t n) {
  Rng rng(seed);
  std::vector<TcpSegment> out;
  for (std::size_t i = 0; i < n; ++i) {
    std::uint32_t isn;
    do isn = static_cast<std::uint32_t>(rng.next() >> 32);
    while ((isn & 0xFFFFFF) == 0);
    out.push_back(syn_with_seq(isn));
  }
  return out;
}

std::vector<TcpSegment> ascii_syns(std::size_t n) {
  const std::string text = "the quick brown fox jumps over the lazy dog while the warden sleeps ";
  std::vector<TcpSegment> out;
  for (std::size_t i = 0; i < n; ++i)
    out.push_back(syn_with_seq(covert::encode_seq_byte(static_cast<std::uint8_t>(text[i % text.size()]))));
  return out;
}

}  // namespace

TEST_SUITE("detection_engine") {
  TEST_CASE("catalog") {
    CHECK(rule_catalog().size() == 15);
    CHECK(find_rule(rule_id::kIsnDistribution).kind == RuleKind::Statistical);
    CHECK(find_rule(rule_id::kSubliminalNonces).kind == RuleKind::Subliminal);
    CHECK(find_rule(rule_id::kPayloadSignature).kind == RuleKind::Signature);
    require_errc([] { find_rule("NOPE"); }, Errc::InvariantViolation);
    require_errc([] { make_finding(rule_id::kReservedNonzero, std::nullopt, 0, {}, {}); }, Errc::InvariantViolation);
    require_errc([] { make_finding(rule_id::kReservedNonzero, std::nullopt, 0, {}, {{"a", "b"}}, 0.5); },
                 Errc::InvariantViolation);
    require_errc([] { make_finding(rule_id::kIsnDistribution, std::nullopt, 0, {}, {{"a", "b"}}); },
                 Errc::InvariantViolation);
  }

  TEST_CASE("header rules on single packets") {
    TcpSegment r = syn_with_seq(0x3A7F19C2);
    r.tcp.reserved = 0b101;
    r = finalize(r);
    const auto fr = analyze_header(r, 0);
    REQUIRE(fr.size() == 1);
    CHECK(fr[0].rule_id == "RESERVED_NONZERO");
    CHECK(fr[0].evidence.at("reserved") == "5");
    CHECK(fr[0].packet_index == std::size_t{0});
    CHECK_FALSE(fr[0].p_value.has_value());

    CHECK(rule_ids(analyze_header(syn_with_seq(0x41000000), 0)) == std::vector<std::string>{"ISN_LOW24_ZERO"});
    CHECK(analyze_header(syn_with_seq(0x3A7F19C2), 0).empty());

    TcpSegment synfin = syn_with_seq(0x3A7F19C2);
    synfin.tcp.flags = TcpFlags::SYN | TcpFlags::FIN;
    CHECK(rule_ids(analyze_header(finalize(synfin), 0)) == std::vector<std::string>{"ILLEGAL_FLAG_COMBO"});
    TcpSegment null_scan = syn_with_seq(0x3A7F19C2);
    null_scan.tcp.flags = TcpFlags();
    CHECK(rule_ids(analyze_header(finalize(null_scan), 0)) == std::vector<std::string>{"ILLEGAL_FLAG_COMBO"});

    TcpSegment urg = syn_with_seq(0x3A7F19C2);
    urg.tcp.urgent_pointer = 5;
    CHECK(rule_ids(analyze_header(finalize(urg), 0)) == std::vector<std::string>{"URG_INCONSISTENT"});

    TcpSegment pad = syn_with_seq(0x3A7F19C2);
    pad.tcp = covert::encode_padding(testing::text_bytes("Hi"), pad.tcp);
    CHECK(rule_ids(analyze_header(finalize(pad), 0)) == std::vector<std::string>{"DATA_PAST_EOL"});
    TcpSegment eol = syn_with_seq(0x3A7F19C2);
    eol.tcp.options = testing::hex("02 04 05 b4 01 01 00 00");
    eol.tcp.data_offset = 7;
    CHECK(analyze_header(finalize(eol), 0).empty());

    TcpSegment bad = syn_with_seq(0x3A7F19C2);
    bad.tcp_checksum_valid = false;
    CHECK(rule_ids(analyze_header(bad, 0)) == std::vector<std::string>{"BAD_TCP_CHECKSUM"});

    TcpSegment frag = syn_with_seq(0x3A7F19C2);
    frag.ip.flags_fragment = Ipv4Header::kMoreFragments;
    CHECK(rule_ids(analyze_header(finalize(frag), 0)) == std::vector<std::string>{"FRAGMENTED_IP"});
  }

  TEST_CASE("payload signatures") {
    TcpSegment s = syn_with_seq(0x3A7F19C2);
    s.payload = testing::text_bytes("xx /bin/sh -c id");
    const auto f = match_payload_signatures(s, 3, {}, {"/bin/sh", "cmd.exe"});
    REQUIRE(f.size() == 1);
    CHECK(f[0].evidence.at("offset") == "3");
    CHECK(f[0].kind == RuleKind::Signature);
  }

  TEST_CASE("per-packet soundness on crafted covert streams") {
    Rng rng(17);
    covert::CovertTcpConfig cfg;
    cfg.templ = parse_packet(testing::reference_syn());
    const std::pair<covert::FieldSet::Field, const char*> modes[] = {
        {covert::FieldSet::SEQ, "ISN_LOW24_ZERO"}, {covert::FieldSet::PADDING, "DATA_PAST_EOL"}};
    for (const auto& [field, rule] : modes) {
      cfg.fields = field;
      const auto stream = covert::build_covert_stream(rng.bytes(200), cfg);
      for (std::size_t i = 0; i < stream.size(); ++i) CHECK(rule_ids(analyze_header(stream[i].segment, i)) == std::vector<std::string>{rule});
    }
    // A reserved carrier is flagged exactly when its 3-bit chunk is nonzero;
    // a zero chunk leaves the header byte-identical to benign traffic.
    cfg.fields = covert::FieldSet::RESERVED;
    const auto stream = covert::build_covert_stream(rng.bytes(200), cfg);
    for (std::size_t i = 0; i < stream.size(); ++i) {
      const bool fired = !analyze_header(stream[i].segment, i).empty();
      CHECK(fired == (stream[i].segment.tcp.reserved != 0));
    }
  }

  TEST_CASE("learning period") {
    require_errc([] { learn_baseline({}, {}); }, Errc::EmptyLearningStream);

    const auto syns = uniform_syns(5, 500);
    const auto items = index_all(syns);
    const SessionBaseline b = learn_baseline(items, {3600.0, 1000});
    CHECK(b.frozen);
    CHECK(b.packets_consumed == 500);
    CHECK(b.syn_count == 500);
    // Histogram oracle: chi-square of the learned counts against uniform.
    double chi2 = 0;
    std::uint64_t total = 0;
    for (auto c : b.isn_high_byte_counts) {
      chi2 += (static_cast<double>(c) - 500.0 / 256) * (static_cast<double>(c) - 500.0 / 256) / (500.0 / 256);
      total += c;
    }
    CHECK(total == 500);
    CHECK(randomness::chi_square_survival(chi2, 255) > 0.001);

    CHECK(learn_baseline(items, {3600.0, 100}).packets_consumed == 100);
    // 1 ms apart: a 0.25 s learning period admits the first 250 packets.
    CHECK(learn_baseline(items, {0.25, 1000}).packets_consumed == 250);
  }

  TEST_CASE("ISN distribution") {
    const SessionBaseline base = SessionBaseline::empty_frozen();
    const FlowKey flow{};
    const auto ascii = with_ids(ascii_syns(300));
    const auto r = score_statistical(base, flow, index_all(ascii), {});
    REQUIRE(rule_ids(r.findings) == std::vector<std::string>{"ISN_DISTRIBUTION"});
    CHECK(*r.findings[0].p_value < 0.01);
    CHECK(r.flagged_packets.size() == 300);

    int violations = 0;
    for (std::uint64_t seed = 100; seed < 150; ++seed) {
      const auto u = with_ids(uniform_syns(seed, 300));
      for (const auto& f : score_statistical(base, flow, index_all(u), {}).findings)
        violations += f.rule_id == "ISN_DISTRIBUTION";
    }
    CHECK(violations <= 5);

    const auto few = with_ids(ascii_syns(30));
    const auto skipped = score_statistical(base, flow, index_all(few), {});
    CHECK(skipped.findings.empty());
    CHECK(skipped.skipped_isn == 1);

    SessionBaseline open;
    require_errc([&] { score_statistical(open, flow, index_all(few), {}); }, Errc::InvariantViolation);
  }

  TEST_CASE("flag distribution and IP ID constancy") {
    const auto syns = uniform_syns(8, 200);
    const SessionBaseline base = learn_baseline(index_all(syns), {});
    const SessionBaseline before = base;

    std::vector<TcpSegment> odd = uniform_syns(9, 100);
    for (std::size_t i = 0; i < odd.size(); i += 2) {
      odd[i].tcp.flags = TcpFlags::FIN | TcpFlags::PSH | TcpFlags::URG;
      odd[i].ip.identification = static_cast<std::uint16_t>(i);
    }
    const auto r = score_statistical(base, {}, index_all(odd), {});
    CHECK(rule_ids(r.findings) == std::vector<std::string>{"FLAG_DIST"});
    CHECK(base == before);

    const auto same = uniform_syns(10, 100);  // every copy keeps IP ID 1
    const auto ipid = score_statistical(base, {}, index_all(same), {});
    CHECK(rule_ids(ipid.findings) == std::vector<std::string>{"IPID_CONSTANT"});
    CHECK(*ipid.findings[0].p_value < 1e-100);

    const auto no_base = score_statistical(SessionBaseline::empty_frozen(), {}, index_all(odd), {});
    CHECK(no_base.skipped_flag == 1);
  }

  TEST_CASE("Bayes posterior") {
    BayesModel m;
    m.prior_attack = 0.1;
    m.likelihoods["S"] = {0.9, 0.1};
    m.likelihoods["U"] = {0.3, 0.3};
    CHECK(std::fabs(bayes_posterior(m, {"S"}) - 0.5) <= 1e-12);
    CHECK(bayes_posterior(m, {"U"}) == doctest::Approx(0.1).epsilon(1e-15));
    CHECK(bayes_posterior(m, {}) == doctest::Approx(0.1).epsilon(1e-15));
    require_errc([&] { bayes_posterior(m, {"X"}); }, Errc::UnknownSymptom);
    m.prior_attack = 0.0;
    CHECK(bayes_posterior(m, {"S"}) == 0.0);

    const BayesModel d = BayesModel::defaults();
    for (const auto& r : rule_catalog()) CHECK(d.likelihoods.count(std::string(r.id)) == 1);
    CHECK_NOTHROW(d.validate());
  }

  TEST_CASE("Bayes monotonicity grid") {
    const double grid[] = {0.0, 0.01, 0.1, 0.3, 0.5, 0.7, 0.9, 0.99, 1.0};
    for (double lb : {0.01, 0.2, 0.6}) {
      for (double other : {0.05, 0.5}) {
        double last_prior = -1;
        for (double prior : grid) {
          BayesModel m;
          m.prior_attack = prior;
          m.likelihoods["A"] = {0.7, lb};
          m.likelihoods["B"] = {other, 0.3};
          const double p = bayes_posterior(m, {"A", "B"});
          CHECK(p >= last_prior - 1e-15);
          CHECK(p >= 0.0);
          CHECK(p <= 1.0);
          last_prior = p;
        }
        for (double prior : {0.05, 0.5}) {
          double last = -1;
          for (double la : grid) {
            BayesModel m;
            m.prior_attack = prior;
            m.likelihoods["A"] = {la, lb};
            m.likelihoods["B"] = {other, 0.3};
            const double p = bayes_posterior(m, {"A", "B"});
            CHECK(p >= last - 1e-15);
            last = p;
          }
        }
      }
    }
  }

  TEST_CASE("alarm threshold is strict") {
    BayesModel m = BayesModel::defaults();
    std::vector<Alarm> sink;
    CHECK_FALSE(evaluate_alarm(m, 0.9, {}, sink).has_value());
    CHECK(sink.empty());
    CHECK(evaluate_alarm(m, 0.9000001, {}, sink).has_value());
    REQUIRE(sink.size() == 1);
    CHECK(sink[0].posterior == 0.9000001);
  }

  TEST_CASE("engine configuration") {
    const auto kv = KeyValueFile::parse(
        "alpha = 0.05\nwindow_size = 128\nprior_attack = 0.2\nlikelihood.FLAG_DIST = 0.4, 0.02\n"
        "signature_pattern = evil\n");
    const EngineConfig c = EngineConfig::from_kv(kv);
    CHECK(c.stats.alpha == 0.05);
    CHECK(c.window_size == 128);
    CHECK(c.bayes.prior_attack == 0.2);
    CHECK(c.bayes.likelihoods.at("FLAG_DIST").given_attack == 0.4);
    CHECK(c.payload_patterns == std::vector<std::string>{"evil"});
    require_errc([] { EngineConfig::from_kv(KeyValueFile::parse("bogus = 1\n")); }, Errc::ConfigError);
    require_errc([] { EngineConfig::from_kv(KeyValueFile::parse("likelihood.NOPE = 0.1,0.1\n")); }, Errc::ConfigError);
    require_errc([] { EngineConfig::from_kv(KeyValueFile::parse("prior_attack = 2\n")); }, Errc::ConfigError);
  }
}
