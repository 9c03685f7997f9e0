#include <cmath>
#include <optional>
#include <vector>

#include "doctest.h"

#include "attrition/errors.hpp"
#include "attrition/ipw.hpp"
#include "attrition/rng.hpp"
#include "attrition/simulation.hpp"

using namespace attrition;

namespace {

// Central differences of the log-likelihood in (intercept, slope).
std::array<double, 2> numeric_gradient(const std::vector<int>& y, const std::vector<double>& x,
                                       double a, double b) {
  const double h = 1e-5;
  return {(logistic_log_likelihood(y, x, a + h, b) - logistic_log_likelihood(y, x, a - h, b)) /
              (2 * h),
          (logistic_log_likelihood(y, x, a, b + h) - logistic_log_likelihood(y, x, a, b - h)) /
              (2 * h)};
}

PanelSample mar_sample(std::size_t n, std::uint64_t seed, double response) {
  Rng rng(seed);
  std::vector<UnitRecord> records;
  for (std::size_t i = 0; i < n; ++i) {
    UnitRecord rec;
    rec.id = std::to_string(i);
    rec.g = rng.bernoulli(0.5);
    rec.r = rng.bernoulli(response);
    rec.y0 = rng.normal();
    if (rec.r) rec.y1 = rec.y0 + rec.g + rng.normal();
    records.push_back(rec);
  }
  return PanelSample::from_records(records);
}

}  // namespace

TEST_SUITE("ipw_estimators") {

TEST_CASE("unrelated outcome: slope near zero, intercept at the log-odds") {
  Rng rng(1);
  std::vector<int> y;
  std::vector<double> x;
  for (int i = 0; i < 4000; ++i) {
    y.push_back(i % 4 == 0 ? 1 : 0);
    x.push_back(rng.normal());
  }
  const auto fit = fit_logistic(y, x);
  CHECK(fit.converged);
  CHECK(std::abs(fit.slope) < 0.1);
  CHECK(fit.intercept == doctest::Approx(std::log(0.25 / 0.75)).epsilon(0.05));
}

TEST_CASE("threshold outcome with noise: positive slope and a vanishing score") {
  Rng rng(2);
  std::vector<int> y;
  std::vector<double> x;
  for (int i = 0; i < 1000; ++i) {
    const double v = rng.normal();
    x.push_back(v);
    y.push_back((v > 0.0) != rng.bernoulli(0.15) ? 1 : 0);
  }
  const auto fit = fit_logistic(y, x);
  CHECK(fit.converged);
  CHECK(fit.slope > 0.5);
  const auto score = logistic_score(y, x, fit.intercept, fit.slope);
  CHECK(std::abs(score[0]) <= 1e-8);
  CHECK(std::abs(score[1]) <= 1e-8);
  for (double p : fit.fitted) {
    CHECK(p > 0.0);
    CHECK(p < 1.0);
  }
}

TEST_CASE("analytic score matches finite differences") {
  Rng rng(3);
  std::vector<int> y;
  std::vector<double> x;
  for (int i = 0; i < 300; ++i) {
    x.push_back(rng.normal() * 2);
    y.push_back(rng.bernoulli(0.3 + 0.1 * (x.back() > 0)) ? 1 : 0);
  }
  for (const auto& [a, b] : std::vector<std::pair<double, double>>{
           {0.0, 0.0}, {-0.7, 0.4}, {1.3, -2.0}, {0.2, 0.05}}) {
    const auto analytic = logistic_score(y, x, a, b);
    const auto numeric = numeric_gradient(y, x, a, b);
    for (int k = 0; k < 2; ++k) {
      CHECK(std::abs(analytic[k] - numeric[k]) <= 1e-6 * std::max(1.0, std::abs(analytic[k])));
    }
  }
}

TEST_CASE("degenerate outcomes") {
  const std::vector<double> x{0.0, 1.0, 2.0, 3.0};
  CHECK_THROWS_AS(fit_logistic(std::vector<int>{1, 1, 1, 1}, x), EstimationError);
  CHECK_THROWS_AS(fit_logistic(std::vector<int>{1, 0}, x), EstimationError);
  const auto separated = fit_logistic(std::vector<int>{0, 0, 1, 1}, x);
  CHECK(separated.separated);
  CHECK_FALSE(separated.converged);
}

TEST_CASE("trim rule validation") {
  CHECK_NOTHROW(TrimRule{}.validate());
  CHECK_THROWS_AS((TrimRule{0.05, 0.6, 0.4}.validate()), ConfigError);
  CHECK_THROWS_AS((TrimRule{-0.1, 0.05, 0.95}.validate()), ConfigError);
}

TEST_CASE("response unrelated to the baseline: IPW tracks the naive contrast") {
  const auto s = mar_sample(20000, 4, 0.75);
  const double naive = naive_delta_r(s).point;
  CHECK(ipw_ate_r(s, std::nullopt).point == doctest::Approx(naive).epsilon(0.02));
  CHECK(ipw_ate(s, std::nullopt).point == doctest::Approx(naive).epsilon(0.02));
}

TEST_CASE("everyone responds under balanced assignment") {
  const auto s = mar_sample(20000, 5, 1.0);
  const double naive = naive_delta_r(s).point;
  const auto v = ipw_ate(s, std::nullopt);
  CHECK(v.point == doctest::Approx(naive).epsilon(0.01));
  CHECK(ipw_ate_r(s, std::nullopt).point == doctest::Approx(naive).epsilon(1e-12));
}

TEST_CASE("trimming keeps a subset and is a no-op when nothing falls below the floors") {
  const auto s = mar_sample(5000, 6, 0.75);
  const auto untrimmed = ipw_ate(s, std::nullopt);
  const auto trimmed = ipw_ate(s, TrimRule{});
  CHECK(trimmed.n_trimmed == 0);
  CHECK(trimmed.point == untrimmed.point);

  const auto heavy = draw_sample(design_preset("I", 2000, 2.0, 0.0, 3), 0).sample;
  const auto rule = TrimRule{0.75, 0.05, 0.95};
  const auto cut = ipw_ate_r(heavy, rule);
  CHECK(cut.n_trimmed > 0);
  const std::size_t used = cut.n_used[cell_index(0, 1)] + cut.n_used[cell_index(1, 1)];
  CHECK(used + cut.n_trimmed == heavy.respondents());
}

TEST_CASE("selection on the baseline in Design I biases IPW toward the naive contrast") {
  // Response depends on both periods, so conditioning on Y0 leaves bias.
  const auto s = draw_sample(design_preset("I", 20000, 2.0, 0.0, 12), 0).sample;
  const double beta1 = design_preset("I", 1, 2.0, 0.0, 0).beta1();
  CHECK(ipw_ate_r(s, std::nullopt).point < beta1 - 0.1);
}

TEST_CASE("missing at random: IPW is close to the truth in Design III") {
  const auto design = design_preset("III", 50000, 2.0, 1.0, 13);
  const auto s = draw_sample(design, 0).sample;
  CHECK(ipw_ate(s, std::nullopt).point == doctest::Approx(design.beta1()).epsilon(0.1));
  CHECK(ipw_ate_r(s, TrimRule{}).point == doctest::Approx(design.beta1()).epsilon(0.1));
}

}  // TEST_SUITE
