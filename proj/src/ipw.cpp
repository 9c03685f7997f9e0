#include "attrition/ipw.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "attrition/errors.hpp"

namespace attrition {

namespace {

constexpr double kScoreTolerance = 1e-8;
constexpr int kMaxIterations = 100;

double logistic(double index) {
  // Strictly inside (0, 1) even when exp() saturates.
  constexpr double kLow = std::numeric_limits<double>::min();
  constexpr double kHigh = 1.0 - std::numeric_limits<double>::epsilon() / 2.0;
  const double p = index >= 0.0 ? 1.0 / (1.0 + std::exp(-index))
                                : std::exp(index) / (1.0 + std::exp(index));
  return std::clamp(p, kLow, kHigh);
}

}  // namespace

double PropensityFit::predict(double x) const {
  if (constant_probability) return *constant_probability;
  return logistic(intercept + slope * x);
}

double logistic_log_likelihood(std::span<const int> outcome, std::span<const double> regressor,
                               double intercept, double slope) {
  double ll = 0.0;
  for (std::size_t i = 0; i < outcome.size(); ++i) {
    const double index = intercept + slope * regressor[i];
    // log(1 + exp(index)) computed without overflow.
    const double softplus = index > 0.0 ? index + std::log1p(std::exp(-index))
                                        : std::log1p(std::exp(index));
    ll += outcome[i] * index - softplus;
  }
  return ll;
}

std::array<double, 2> logistic_score(std::span<const int> outcome,
                                     std::span<const double> regressor, double intercept,
                                     double slope) {
  std::array<double, 2> score{};
  for (std::size_t i = 0; i < outcome.size(); ++i) {
    const double resid = outcome[i] - logistic(intercept + slope * regressor[i]);
    score[0] += resid;
    score[1] += resid * regressor[i];
  }
  return score;
}

PropensityFit fit_logistic(std::span<const int> outcome, std::span<const double> regressor) {
  if (outcome.size() != regressor.size()) {
    throw EstimationError("logistic fit: outcome and regressor lengths differ");
  }
  if (outcome.size() < 2) throw EstimationError("logistic fit needs at least two observations");
  std::size_t ones = 0;
  double max0 = -std::numeric_limits<double>::infinity();
  double min0 = std::numeric_limits<double>::infinity();
  double max1 = max0;
  double min1 = min0;
  double mean_x = 0.0;
  for (std::size_t i = 0; i < outcome.size(); ++i) {
    if (outcome[i] != 0 && outcome[i] != 1) throw EstimationError("logistic fit: non-binary outcome");
    const double x = regressor[i];
    mean_x += x;
    if (outcome[i] == 1) {
      ++ones;
      max1 = std::max(max1, x);
      min1 = std::min(min1, x);
    } else {
      max0 = std::max(max0, x);
      min0 = std::min(min0, x);
    }
  }
  if (ones == 0 || ones == outcome.size()) {
    throw EstimationError("logistic fit: outcome has a single class");
  }
  const double n = static_cast<double>(outcome.size());
  mean_x /= n;
  double var_x = 0.0;
  for (double x : regressor) var_x += (x - mean_x) * (x - mean_x);
  const double sd_x = std::sqrt(var_x / n);

  PropensityFit fit;
  const double share = static_cast<double>(ones) / n;
  const bool constant_regressor = !(sd_x > 0.0);
  if (!constant_regressor && (max0 <= min1 || max1 <= min0)) {
    fit.separated = true;
    fit.converged = false;
    fit.intercept = std::log(share / (1.0 - share));
    fit.fitted.assign(outcome.size(), share);
    return fit;
  }

  // Newton iterations on the standardized regressor z = (x - mean) / sd.
  double a = std::log(share / (1.0 - share));
  double b = 0.0;
  const auto to_original = [&](double za, double zb) -> std::pair<double, double> {
    if (constant_regressor) return {za, 0.0};
    return {za - zb * mean_x / sd_x, zb / sd_x};
  };
  std::vector<double> z(regressor.size());
  for (std::size_t i = 0; i < z.size(); ++i) {
    z[i] = constant_regressor ? 0.0 : (regressor[i] - mean_x) / sd_x;
  }
  double ll = logistic_log_likelihood(outcome, z, a, b);
  for (fit.iterations = 0; fit.iterations < kMaxIterations; ++fit.iterations) {
    const auto [ia, ib] = to_original(a, b);
    const auto score = logistic_score(outcome, regressor, ia, ib);
    fit.max_abs_score = std::max(std::abs(score[0]), std::abs(score[1]));
    if (fit.max_abs_score <= kScoreTolerance) {
      fit.converged = true;
      break;
    }
    double g0 = 0.0, g1 = 0.0, h00 = 0.0, h01 = 0.0, h11 = 0.0;
    for (std::size_t i = 0; i < z.size(); ++i) {
      const double p = logistic(a + b * z[i]);
      const double w = p * (1.0 - p);
      const double resid = outcome[i] - p;
      g0 += resid;
      g1 += resid * z[i];
      h00 += w;
      h01 += w * z[i];
      h11 += w * z[i] * z[i];
    }
    double da = 0.0;
    double db = 0.0;
    if (constant_regressor) {
      da = g0 / h00;
    } else {
      const double det = h00 * h11 - h01 * h01;
      if (!(det > 0.0) || !std::isfinite(det)) break;
      da = (h11 * g0 - h01 * g1) / det;
      db = (h00 * g1 - h01 * g0) / det;
    }
    // Step halving keeps the likelihood non-decreasing.
    double step = 1.0;
    double next_ll = logistic_log_likelihood(outcome, z, a + da, b + db);
    while (next_ll < ll - 1e-12 * std::abs(ll) && step > 1e-10) {
      step *= 0.5;
      next_ll = logistic_log_likelihood(outcome, z, a + step * da, b + step * db);
    }
    a += step * da;
    b += step * db;
    ll = next_ll;
  }
  const auto [ia, ib] = to_original(a, b);
  fit.intercept = ia;
  fit.slope = ib;
  if (!fit.converged) {
    const auto score = logistic_score(outcome, regressor, ia, ib);
    fit.max_abs_score = std::max(std::abs(score[0]), std::abs(score[1]));
    fit.converged = fit.max_abs_score <= kScoreTolerance;
  }
  fit.fitted.resize(regressor.size());
  for (std::size_t i = 0; i < regressor.size(); ++i) fit.fitted[i] = fit.predict(regressor[i]);
  return fit;
}

void TrimRule::validate() const {
  const auto in_unit = [](double p) { return p >= 0.0 && p <= 1.0; };
  if (!in_unit(response_floor) || !in_unit(treat_floor) || !in_unit(treat_ceiling) ||
      !(treat_floor < treat_ceiling) || !(response_floor < 1.0)) {
    throw ConfigError("trim rule needs 0 <= floor < ceiling <= 1");
  }
}

namespace {

PropensityFit checked_fit(std::span<const int> outcome, std::span<const double> regressor,
                          const char* what, bool allow_all_ones = false) {
  if (allow_all_ones && !outcome.empty() &&
      std::all_of(outcome.begin(), outcome.end(), [](int v) { return v == 1; })) {
    PropensityFit fit;
    fit.converged = true;
    fit.constant_probability = 1.0;
    fit.fitted.assign(outcome.size(), 1.0);
    return fit;
  }
  auto fit = fit_logistic(outcome, regressor);
  if (fit.separated) {
    throw EstimationError(std::string(what) + " propensity: baseline outcome perfectly separates classes");
  }
  if (!fit.converged) {
    throw EstimationError(std::string(what) + " propensity: logistic fit did not converge");
  }
  return fit;
}

}  // namespace

PropensityModels fit_propensities(const PanelSample& sample) {
  std::vector<int> response;
  std::vector<int> treated;
  std::vector<double> baseline;
  std::array<std::vector<int>, 2> arm_response;
  std::array<std::vector<double>, 2> arm_baseline;
  for (const auto& rec : sample.records()) {
    response.push_back(rec.r);
    treated.push_back(rec.g);
    baseline.push_back(rec.y0);
    arm_response[static_cast<std::size_t>(rec.g)].push_back(rec.r);
    arm_baseline[static_cast<std::size_t>(rec.g)].push_back(rec.y0);
  }
  return PropensityModels{
      .response_pooled = checked_fit(response, baseline, "pooled response", true),
      .response_by_arm = {checked_fit(arm_response[0], arm_baseline[0], "control-arm response", true),
                          checked_fit(arm_response[1], arm_baseline[1], "treatment-arm response", true)},
      .treatment = checked_fit(treated, baseline, "treatment")};
}

namespace {

struct WeightedMean {
  double weighted_sum = 0.0;
  double weight_total = 0.0;
  std::size_t used = 0;
  double value() const { return weighted_sum / weight_total; }
};

template <class WeightFn, class KeepFn>
EstimandValue hajek_contrast(const PanelSample& sample, Estimand estimand,
                             const std::optional<TrimRule>& trim, WeightFn weight, KeepFn keep) {
  if (trim) trim->validate();
  std::array<WeightedMean, 2> arm{};
  std::size_t trimmed = 0;
  for (const auto& rec : sample.records()) {
    if (rec.r != 1) continue;
    if (trim && !keep(rec, *trim)) {
      ++trimmed;
      continue;
    }
    const double w = weight(rec);
    if (!(w > 0.0) || !std::isfinite(w)) {
      throw EstimationError("non-positive or non-finite inverse-probability weight");
    }
    auto& m = arm[static_cast<std::size_t>(rec.g)];
    m.weighted_sum += w * *rec.y1;
    m.weight_total += w;
    ++m.used;
  }
  for (int g = 0; g <= 1; ++g) {
    if (arm[static_cast<std::size_t>(g)].used == 0) {
      throw EstimationError(std::string("all ") + (g == 1 ? "treatment" : "control") +
                            " respondents trimmed or absent");
    }
  }
  EstimandValue v;
  v.estimand = estimand;
  v.method = trim ? Method::kIpwTrimmed : Method::kIpwUntrimmed;
  v.point = arm[1].value() - arm[0].value();
  v.n_used = {sample.count(0, 0), arm[0].used, sample.count(1, 0), arm[1].used};
  v.n_trimmed = trimmed;
  v.notes.push_back("Hajek-normalized weights");
  return v;
}

void require_respondent_arms(const PanelSample& sample) {
  if (sample.count(0, 1) == 0 || sample.count(1, 1) == 0) {
    throw EstimationError("IPW needs respondents in both arms");
  }
}

}  // namespace

EstimandValue ipw_ate_r(const PanelSample& sample, const PropensityModels& models,
                        const std::optional<TrimRule>& trim) {
  require_respondent_arms(sample);
  const auto own_arm = [&](const UnitRecord& rec) {
    return models.response_by_arm[static_cast<std::size_t>(rec.g)].predict(rec.y0);
  };
  return hajek_contrast(
      sample, Estimand::kAteR, trim,
      [&](const UnitRecord& rec) { return models.response_pooled.predict(rec.y0) / own_arm(rec); },
      [&](const UnitRecord& rec, const TrimRule& rule) {
        return own_arm(rec) >= rule.response_floor;
      });
}

EstimandValue ipw_ate(const PanelSample& sample, const PropensityModels& models,
                      const std::optional<TrimRule>& trim) {
  require_respondent_arms(sample);
  const auto own_arm = [&](const UnitRecord& rec) {
    return models.response_by_arm[static_cast<std::size_t>(rec.g)].predict(rec.y0);
  };
  const auto arm_probability = [&](const UnitRecord& rec) {
    const double e = models.treatment.predict(rec.y0);
    return rec.g == 1 ? e : 1.0 - e;
  };
  return hajek_contrast(
      sample, Estimand::kAte, trim,
      [&](const UnitRecord& rec) { return 1.0 / (own_arm(rec) * arm_probability(rec)); },
      [&](const UnitRecord& rec, const TrimRule& rule) {
        const double e = models.treatment.predict(rec.y0);
        return own_arm(rec) >= rule.response_floor && e >= rule.treat_floor &&
               e <= rule.treat_ceiling;
      });
}

EstimandValue ipw_ate_r(const PanelSample& sample, const std::optional<TrimRule>& trim) {
  require_respondent_arms(sample);
  return ipw_ate_r(sample, fit_propensities(sample), trim);
}

EstimandValue ipw_ate(const PanelSample& sample, const std::optional<TrimRule>& trim) {
  require_respondent_arms(sample);
  return ipw_ate(sample, fit_propensities(sample), trim);
}

}  // namespace attrition
