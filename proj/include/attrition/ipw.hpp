#pragma once

#include <array>
#include <optional>
#include <span>
#include <vector>

#include "attrition/cic_estimators.hpp"
#include "attrition/panel_data.hpp"

namespace attrition {

/// Logit fit of a binary outcome on (1, x).
struct PropensityFit {
  double intercept = 0.0;
  double slope = 0.0;
  std::vector<double> fitted;  // strictly inside (0, 1)
  bool converged = false;
  bool separated = false;
  int iterations = 0;
  double max_abs_score = 0.0;
  /// Set when every unit responded: the model is the constant probability 1.
  std::optional<double> constant_probability;

  double predict(double x) const;
};

/// Maximum-likelihood logistic regression by iteratively reweighted least
/// squares. Converged means max |score| <= 1e-8. Perfectly separated data is
/// reported through `separated` with converged = false. Throws
/// EstimationError when the outcome has a single class or the inputs are
/// mismatched.
PropensityFit fit_logistic(std::span<const int> outcome, std::span<const double> regressor);

/// Log-likelihood and score of the logit model at (intercept, slope).
double logistic_log_likelihood(std::span<const int> outcome, std::span<const double> regressor,
                               double intercept, double slope);
std::array<double, 2> logistic_score(std::span<const int> outcome,
                                     std::span<const double> regressor, double intercept,
                                     double slope);

struct TrimRule {
  double response_floor = 0.05;
  double treat_floor = 0.05;
  double treat_ceiling = 0.95;

  /// Throws ConfigError unless 0 <= floors < ceiling <= 1.
  void validate() const;
};

/// Response propensities fitted on the baseline outcome: pooled, and
/// separately within each arm; plus the treatment propensity.
struct PropensityModels {
  PropensityFit response_pooled;
  std::array<PropensityFit, 2> response_by_arm;  // indexed by g
  PropensityFit treatment;
};

/// Fits every model and throws EstimationError when any fails to converge.
PropensityModels fit_propensities(const PanelSample& sample);

/// Hajek-weighted respondent contrast reweighted to the respondent
/// population's baseline distribution. `trim` = nullopt gives IPW1.
EstimandValue ipw_ate_r(const PanelSample& sample, const std::optional<TrimRule>& trim);
/// Hajek-weighted respondent contrast reweighted to the full study
/// population (inverse response and treatment propensities).
EstimandValue ipw_ate(const PanelSample& sample, const std::optional<TrimRule>& trim);

EstimandValue ipw_ate_r(const PanelSample& sample, const PropensityModels& models,
                        const std::optional<TrimRule>& trim);
EstimandValue ipw_ate(const PanelSample& sample, const PropensityModels& models,
                      const std::optional<TrimRule>& trim);

}  // namespace attrition
