#include <doctest.h>

#include "support.hpp"
#include "trapdoor/config.hpp"
#include "trapdoor/labels.hpp"

using namespace trapdoor;
using testing::require_errc;

TEST_SUITE("harness_cli") {
  TEST_CASE("key-value files") {
    const auto kv = KeyValueFile::parse("# comment\na = 1\nb=two\nb = three\n\nflag = yes\nx = 0.25\n");
    CHECK(kv.get_u64("a", 0) == 1);
    CHECK(kv.get_all("b") == std::vector<std::string>{"two", "three"});
    CHECK(kv.get_bool("flag", false));
    CHECK(kv.get_double("x", 0) == 0.25);
    CHECK(kv.get_u64("missing", 7) == 7);
    CHECK(kv.keys() == std::vector<std::string>{"a", "b", "flag", "x"});
    require_errc([&] { kv.get_u64("b", 0); }, Errc::ConfigError);
    require_errc([&] { kv.require("missing"); }, Errc::ConfigError);
    require_errc([&] { kv.reject_unknown({"a", "b"}); }, Errc::ConfigError);
    CHECK_NOTHROW(kv.reject_unknown({"a", "b", "flag", "x"}));
    require_errc([] { KeyValueFile::parse("no equals sign\n"); }, Errc::ConfigError);
    require_errc([] { KeyValueFile::load("/nonexistent/file.kv"); }, Errc::IoError);
  }

  TEST_CASE("labels json") {
    GroundTruthLabels l;
    l.seed = 4;
    l.packet_count = 3;
    l.flows.push_back({0, FlowKey::parse("10.0.0.1:1>10.0.0.2:2"), std::nullopt});
    l.flows.push_back({1, FlowKey::parse("10.0.0.3:1>10.0.0.2:2"), CovertKind::TcpPadding});
    l.carriers = {2};
    const auto back = GroundTruthLabels::from_json(l.to_json());
    CHECK(back.to_json() == l.to_json());
    CHECK(back.is_carrier(2));
    CHECK_FALSE(back.is_carrier(1));
    CHECK(back.find(FlowKey::parse("10.0.0.2:2>10.0.0.3:1"))->covert == CovertKind::TcpPadding);
    CHECK(back.covert_flow_count() == 1);
    require_errc([] { GroundTruthLabels::from_json("[1,2]"); }, Errc::ConfigError);
    CHECK(parse_covert_kind("SUBLIMINAL_DSA") == CovertKind::SubliminalDsa);
    CHECK(to_string(CovertKind::Hybrid) == "HYBRID");
  }
}
