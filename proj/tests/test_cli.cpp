#include <sstream>
#include <string>

#include "doctest.h"

#include "attrition/cli.hpp"
#include "attrition/errors.hpp"

using namespace attrition;
using namespace attrition::cli;

TEST_SUITE("cli") {

TEST_CASE("settings file syntax") {
  std::istringstream in("# comment\n seed = 12 \n\nformat=json # trailing\n");
  const auto s = parse_settings(in);
  REQUIRE(s.size() == 2);
  CHECK(s[0] == Settings::value_type{"seed", "12"});
  CHECK(s[1] == Settings::value_type{"format", "json"});
  std::istringstream bad("seed 12\n");
  CHECK_THROWS_AS(parse_settings(bad), ConfigError);
}

TEST_CASE("flags override the file, which overrides defaults") {
  const Settings file{{"seed", "3"}, {"reps", "50"}, {"design", "II"}};
  const Settings flags{{"seed", "4"}};
  const auto c = resolve_config(Mode::kSimulate, file, flags);
  CHECK(c.seed == 4);
  CHECK(c.reps == 50);
  CHECK(c.design == "II");
  CHECK(c.sigma == 2.0);
}

TEST_CASE("bad values are configuration errors") {
  JobConfig c;
  CHECK_THROWS_AS(c.set("design", "IV"), ConfigError);
  CHECK_THROWS_AS(c.set("format", "xml"), ConfigError);
  CHECK_THROWS_AS(c.set("reps", "-3"), ConfigError);
  CHECK_THROWS_AS(c.set("unknown-key", "1"), ConfigError);
  c.mode = Mode::kEstimate;
  CHECK_THROWS_AS(c.validate(), ConfigError);  // no input
  c.input = "data.csv";
  CHECK_NOTHROW(c.validate());
  c.set("ci-level", "1.5");
  CHECK_THROWS_AS(c.validate(), ConfigError);
}

TEST_CASE("the config hash tracks result-changing settings only") {
  JobConfig a;
  a.mode = Mode::kSimulate;
  JobConfig b = a;
  b.format = Format::kJson;
  b.threads = 7;
  b.out = "x.json";
  CHECK(a.hash() == b.hash());
  b.seed = a.seed + 1;
  CHECK(a.hash() != b.hash());
  CHECK(a.hash().size() == 16);
  CHECK(fnv1a("") == 0xcbf29ce484222325ULL);
  CHECK(fnv1a("a") == 0xaf63dc4c8601ec8cULL);
}

TEST_CASE("provenance replays into the same configuration") {
  JobConfig c = resolve_config(Mode::kSimulate, {}, {{"design", "III"}, {"beta2", "1"}});
  const auto p = make_provenance(c);
  Settings replay;
  for (const auto& kv : p.config) {
    if (kv.first != "mode") replay.push_back(kv);
  }
  const auto again = resolve_config(Mode::kSimulate, {}, replay);
  CHECK(again.hash() == c.hash());
  CHECK(p.version == kVersion);
}

TEST_CASE("zero-attrition data: corrections agree with the naive contrast") {
  std::ostringstream csv;
  csv << "id,g,r,y0,y1\n";
  for (int i = 0; i < 40; ++i) {
    const double y0 = (i * 37 % 23) / 7.0;
    csv << i << ',' << i % 2 << ",1," << y0 << ',' << y0 + 0.5 * (i % 2) + 0.01 * i << '\n';
  }
  std::istringstream in(csv.str());
  JobConfig c;
  c.bootstrap_draws = 0;
  const auto report = estimate_sample(read_csv(in), c);
  const double naive = *report.find("naive")->point;
  CHECK(*report.find("ate_ra")->point == doctest::Approx(naive));
  CHECK(*report.find("ipw1_ate_r")->point == doctest::Approx(naive));
  CHECK(*report.find("ate_ra")->point - naive == doctest::Approx(0.0));
  bool noted = false;
  for (const auto& note : report.find("ate_ra")->notes) noted = noted || note.find("weight 0") != std::string::npos;
  CHECK(noted);
}

TEST_CASE("a Design I sample: the RA correction moves away from the naive contrast") {
  JobConfig c = resolve_config(Mode::kSimulate, {}, {{"design", "I"}, {"n", "20000"}});
  const auto sample = draw_sample(design_from_config(c), 0).sample;
  JobConfig e;
  e.bootstrap_draws = 0;
  const auto report = estimate_sample(sample, e);
  const double naive = *report.find("naive")->point;
  const double ra = *report.find("ate_ra")->point;
  const double ipw = *report.find("ipw1_ate_r")->point;
  CHECK(ra - naive > 0.15);
  CHECK(std::abs(ipw - naive) < std::abs(ra - naive));
}

}  // TEST_SUITE
