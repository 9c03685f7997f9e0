#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "doctest.h"

#include "attrition/errors.hpp"
#include "attrition/inference.hpp"
#include "attrition/rng.hpp"
#include "attrition/simulation.hpp"

using namespace attrition;

namespace {

PanelSample normal_sample(std::size_t n, std::uint64_t seed, bool clusters = false) {
  Rng rng(seed);
  std::vector<UnitRecord> records;
  for (std::size_t i = 0; i < n; ++i) {
    UnitRecord rec;
    rec.id = std::to_string(i);
    rec.g = static_cast<int>(i % 2);
    rec.r = 1;
    rec.y0 = rng.normal();
    rec.y1 = rec.y0 + rng.normal();
    if (clusters) rec.cluster = "c" + std::to_string(i / 10);
    records.push_back(rec);
  }
  return PanelSample::from_records(records);
}

BootstrapSpec spec_with(std::size_t draws, std::uint64_t seed, unsigned threads = 1) {
  BootstrapSpec spec;
  spec.draws = draws;
  spec.seed = seed;
  spec.threads = threads;
  return spec;
}

}  // namespace

TEST_SUITE("inference") {

TEST_CASE("constant column: zero standard error and a degenerate interval") {
  std::vector<UnitRecord> records;
  for (int i = 0; i < 30; ++i) {
    UnitRecord rec;
    rec.id = std::to_string(i);
    rec.g = i % 2;
    rec.r = 0;
    rec.y0 = 4.25;
    records.push_back(rec);
  }
  const auto r = bootstrap(PanelSample::from_records(records), named_statistic("mean_y0"),
                           spec_with(99, 1));
  CHECK(r.se == 0.0);
  CHECK(r.ci_lo == 4.25);
  CHECK(r.ci_hi == 4.25);
  CHECK(r.draws_used == 99);
}

TEST_CASE("bootstrap standard error of a mean matches s / sqrt(n)") {
  const auto s = normal_sample(500, 2);
  double mean = 0.0;
  for (const auto& rec : s.records()) mean += rec.y0;
  mean /= 500.0;
  double ss = 0.0;
  for (const auto& rec : s.records()) ss += (rec.y0 - mean) * (rec.y0 - mean);
  const double analytic = std::sqrt(ss / 499.0) / std::sqrt(500.0);
  const auto r = bootstrap(s, named_statistic("mean_y0"), spec_with(999, 3));
  CHECK(r.point == doctest::Approx(mean));
  CHECK(std::abs(r.se - analytic) <= 0.15 * analytic);
}

TEST_CASE("difference of the RA effect and the naive contrast on a Design I sample") {
  const auto s = draw_sample(design_preset("I", 2000, 2.0, 0.0, 21), 0).sample;
  const auto stat = difference(named_statistic("ate_ra"), named_statistic("naive"));
  CHECK(stat.name == "ate_ra - naive");
  const auto a = bootstrap(s, stat, spec_with(199, 1, 0));
  const auto b = bootstrap(s, stat, spec_with(199, 2, 0));
  CHECK(a.se > 0.0);
  CHECK(a.point == b.point);
  CHECK(a.point > 0.0);
  // Replicate medians fall on the same side as the point for both seeds.
  for (auto reps : {a.replicates, b.replicates}) {
    std::nth_element(reps.begin(), reps.begin() + reps.size() / 2, reps.end());
    CHECK(reps[reps.size() / 2] > 0.0);
  }
  for (std::uint64_t seed : {22u, 23u, 24u}) {
    const auto other = draw_sample(design_preset("I", 2000, 2.0, 0.0, seed), 0).sample;
    CHECK(stat.evaluate(other) > 0.0);
  }
}

TEST_CASE("results do not depend on the number of workers") {
  const auto s = draw_sample(design_preset("II", 800, 2.0, 1.0, 4), 0).sample;
  const auto one = bootstrap(s, named_statistic("ate_r"), spec_with(101, 9, 1));
  const auto four = bootstrap(s, named_statistic("ate_r"), spec_with(101, 9, 4));
  CHECK(one.replicates == four.replicates);
  CHECK(one.se == four.se);
  CHECK(one.ci_lo == four.ci_lo);
  CHECK(one.ci_hi == four.ci_hi);

  const auto p1 = diagnostic_pvalue(s, spec_with(49, 9, 1));
  const auto p3 = diagnostic_pvalue(s, spec_with(49, 9, 3));
  CHECK(p1.pvalue == p3.pvalue);
  CHECK(p1.joint_pvalue == p3.joint_pvalue);
}

TEST_CASE("point estimate is computed on the original sample") {
  const auto s = normal_sample(200, 5);
  const auto stat = named_statistic("ate_r");
  const double direct = stat.evaluate(s);
  CHECK(bootstrap(s, stat, spec_with(20, 1)).point == direct);
  CHECK(bootstrap(s, stat, spec_with(20, 777)).point == direct);
}

TEST_CASE("narrower level gives a nested interval") {
  const auto s = normal_sample(300, 6);
  auto spec = spec_with(499, 7);
  const auto wide = bootstrap(s, named_statistic("att_r"), spec);
  spec.ci_level = 0.90;
  const auto narrow = bootstrap(s, named_statistic("att_r"), spec);
  CHECK(narrow.replicates == wide.replicates);
  CHECK(wide.ci_lo <= narrow.ci_lo);
  CHECK(narrow.ci_hi <= wide.ci_hi);
  CHECK(narrow.ci_lo <= narrow.ci_hi);
}

TEST_CASE("cluster resampling draws whole clusters") {
  const auto s = normal_sample(200, 8, true);
  BootstrapSpec spec = spec_with(20, 3);
  spec.resample_unit = ResampleUnit::kCluster;
  for (std::uint64_t k = 0; k < 20; ++k) {
    const auto rows = resample_rows(s, spec, k);
    std::map<std::string, std::size_t> per_cluster;
    for (auto row : rows) ++per_cluster[*s.records()[row].cluster];
    for (const auto& [name, count] : per_cluster) CHECK(count % 10 == 0);
  }
  CHECK_THROWS_AS(spec.validate(normal_sample(20, 1)), ConfigError);
}

TEST_CASE("stratified resampling keeps arm sizes") {
  const auto s = draw_sample(design_preset("I", 301, 2.0, 0.0, 1), 0).sample;
  BootstrapSpec spec = spec_with(10, 4);
  spec.stratify_by_arm = true;
  for (std::uint64_t k = 0; k < 10; ++k) {
    const auto rows = resample_rows(s, spec, k);
    std::size_t treated = 0;
    for (auto row : rows) treated += static_cast<std::size_t>(s.records()[row].g);
    CHECK(treated == s.arm_size(1));
  }
}

TEST_CASE("invalid specifications and unreliable runs") {
  const auto s = normal_sample(40, 1);
  CHECK_THROWS_AS(bootstrap(s, named_statistic("att_r"), spec_with(1, 1)), ConfigError);
  auto bad_level = spec_with(10, 1);
  bad_level.ci_level = 1.0;
  CHECK_THROWS_AS(bootstrap(s, named_statistic("att_r"), bad_level), ConfigError);
  CHECK_THROWS_AS(named_statistic("nope"), ConfigError);

  // Every replicate fails half the time.
  Statistic flaky{"flaky", [](const PanelSample& p) -> double {
                    if (p.records()[0].y0 > 0.0) throw EstimationError("fails");
                    return 0.0;
                  }};
  const auto probe = normal_sample(40, 123);
  CHECK_THROWS_AS(bootstrap(probe, flaky, spec_with(200, 1)), EstimationError);
}

TEST_CASE("summaries of replicate values") {
  const auto r = summarize_replicates("x", 0.0, {3.0, 1.0, 2.0, 4.0}, 1, 0.5);
  CHECK(r.draws_used == 4);
  CHECK(r.failures == 1);
  CHECK(r.se == doctest::Approx(std::sqrt(5.0 / 3.0)));
  CHECK(r.ci_lo <= r.ci_hi);
}

TEST_CASE("diagnostic on a tiny sample gives a usable p-value") {
  std::vector<UnitRecord> records;
  const double values[8] = {0.3, 1.1, -0.4, 2.0, 0.9, -1.2, 1.7, 0.1};
  for (int i = 0; i < 8; ++i) {
    UnitRecord rec;
    rec.id = std::to_string(i);
    rec.g = i / 4;
    rec.r = (i % 4) < 2 ? 1 : 0;
    rec.y0 = values[i];
    if (rec.r) rec.y1 = values[i] + 0.5;
    records.push_back(rec);
  }
  auto spec = spec_with(199, 3);
  spec.max_failure_share = 1.0;
  const auto p = diagnostic_pvalue(PanelSample::from_records(records), spec);
  for (double v : p.pvalue) {
    CHECK(v >= 0.0);
    CHECK(v <= 1.0);
  }
  CHECK(p.draws_used + p.failures == 199);
}

TEST_CASE("named statistics cover every reported estimator") {
  const auto listed = statistic_names();
  const std::set<std::string> names(listed.begin(), listed.end());
  for (const char* n : {"naive", "att_r", "atu_r", "ate_r", "ate_ra", "ate_nora", "att_a",
                        "atu_a", "ipw1_ate_r", "ipw2_ate_r", "ipw1_ate", "ipw2_ate"}) {
    CHECK(names.count(n) == 1);
  }
}

}  // TEST_SUITE
