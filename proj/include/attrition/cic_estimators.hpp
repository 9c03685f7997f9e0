#pragma once

#include <array>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "attrition/empirical.hpp"
#include "attrition/panel_data.hpp"

namespace attrition {

/// kAte is the study-population effect estimated by a method that does not
/// go through either CiC route (IPW).
enum class Estimand { kNaiveDeltaR, kAttR, kAtuR, kAteR, kAteRa, kAteNora, kAttA, kAtuA, kAte };

enum class Method { kNaive, kCic, kIpwUntrimmed, kIpwTrimmed };

/// Identification route a number relies on.
enum class Route { kNone, kRespondents, kRandomAssignment, kNoRandomAssignment, kUnconfoundedness };

std::string_view to_string(Estimand e);
std::string_view to_string(Method m);
std::string_view to_string(Route r);
Route route_of(Estimand e, Method m);

struct EstimandValue {
  Estimand estimand = Estimand::kAttR;
  Method method = Method::kCic;
  double point = 0.0;
  /// Units entering the estimate per (g, r) cell, indexed by cell_index().
  CellCounts n_used{};
  /// Some mapped baseline value lay outside the identifying sample's range.
  bool support_warning = false;
  /// Fraction of mapped baseline values that were clamped to an end of the
  /// identifying sample.
  double clamp_fraction = 0.0;
  std::size_t n_trimmed = 0;
  std::vector<std::string> notes;
};

enum class Potential { kUntreated = 0, kTreated = 1 };

constexpr int arm_of(Potential d) noexcept { return static_cast<int>(d); }

/// Running sum of imputed values with a count of out-of-range inputs.
struct ImputedMean {
  double sum = 0.0;
  std::size_t count = 0;
  std::size_t clamped = 0;
  double mean() const { return sum / static_cast<double>(count); }
};

/// The two quantile transforms identified from respondents. Arm d's
/// respondents pin down how the baseline distribution maps to the follow-up
/// distribution of potential outcome Y1(d).
class CicTransforms {
 public:
  /// Requires both respondent cells to be non-empty.
  static CicTransforms build(const PanelSample& sample);

  /// Y1(d) for a unit with baseline y0: F^{-1}_{Y1|G=d,R=1}(F_{Y0|G=d,R=1}(y0)).
  double impute(Potential d, double y0) const;
  /// The baseline-scale image of follow-up value y:
  /// F^{-1}_{Y0|G=d,R=1}(F_{Y1|G=d,R=1}(y)).
  double to_baseline(Potential d, double y) const;

  bool outside_range(Potential d, double y0) const;

  ImputedMean impute_all(Potential d, std::span<const double> baseline) const;

  const EmpiricalCdf& baseline(Potential d) const { return baseline_[idx(d)]; }
  const EmpiricalCdf& follow_up(Potential d) const { return follow_up_[idx(d)]; }

 private:
  CicTransforms(std::array<EmpiricalCdf, 2> baseline, std::array<EmpiricalCdf, 2> follow_up)
      : baseline_(std::move(baseline)), follow_up_(std::move(follow_up)) {}
  static std::size_t idx(Potential d) { return static_cast<std::size_t>(d); }

  std::array<EmpiricalCdf, 2> baseline_;
  std::array<EmpiricalCdf, 2> follow_up_;
};

EstimandValue naive_delta_r(const PanelSample& sample);
EstimandValue att_r(const PanelSample& sample);
EstimandValue atu_r(const PanelSample& sample);
EstimandValue ate_r(const PanelSample& sample);
EstimandValue ate_random_assignment(const PanelSample& sample);

/// Variants reusing already-built transforms.
EstimandValue att_r(const PanelSample& sample, const CicTransforms& t);
EstimandValue atu_r(const PanelSample& sample, const CicTransforms& t);
EstimandValue ate_r(const PanelSample& sample, const CicTransforms& t);
EstimandValue ate_random_assignment(const PanelSample& sample, const CicTransforms& t);

struct NoRandomAssignmentResult {
  EstimandValue ate;
  EstimandValue att_r;
  EstimandValue atu_r;
  /// Absent when the arm has no attritors (the component carries weight 0).
  std::optional<EstimandValue> att_a;
  std::optional<EstimandValue> atu_a;
};

NoRandomAssignmentResult ate_no_random_assignment(const PanelSample& sample);
NoRandomAssignmentResult ate_no_random_assignment(const PanelSample& sample,
                                                  const CicTransforms& t);

struct CdfBound {
  double y = 0.0;
  double lower = 0.0;
  double upper = 0.0;
};

/// Bounds on the cdf of potential outcome Y1(d) in cell (g, r) for outcomes
/// that are only weakly monotone in the unobservable. The lower curve uses the
/// sup-inverse, the upper curve the inf-inverse. Below the identifying
/// follow-up sample both curves are 0.
std::vector<CdfBound> discrete_bounds(const PanelSample& sample, int g, int r, Potential d,
                                      std::span<const double> grid);

/// Signed gap between the two arms' mixtures of Y1(d) cdfs, for d = 0, 1,
/// evaluated on a grid. Under random assignment both gaps vanish.
struct RaDiscrepancy {
  std::vector<double> grid;
  std::array<std::vector<double>, 2> gap;
  std::array<double, 2> statistic{};  // sup-norm of each gap
};

/// Observed follow-up values plus every transform-imputed value, sorted and
/// deduplicated.
std::vector<double> ra_default_grid(const PanelSample& sample);

/// `grid` must be sorted ascending.
RaDiscrepancy ra_diagnostic(const PanelSample& sample, std::span<const double> grid);
RaDiscrepancy ra_diagnostic(const PanelSample& sample);

/// Arm difference of baseline CDFs, P(R|G)-weighted over cells of
/// `baseline_source`, evaluated at the quantile maps of `map_source`. Every
/// cell, the identifying one included, enters through its baseline ECDF.
/// Coincides with ra_diagnostic when both samples are the same and the
/// identifying cells have no tied baseline values.
RaDiscrepancy ra_mapped_baseline_gap(const PanelSample& baseline_source,
                                     const PanelSample& map_source, std::span<const double> grid);

}  // namespace attrition
