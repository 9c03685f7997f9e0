#include "attrition/cic_estimators.hpp"

#include <algorithm>
#include <cmath>

#include "attrition/errors.hpp"

namespace attrition {

std::string_view to_string(Estimand e) {
  switch (e) {
    case Estimand::kNaiveDeltaR: return "naive-DeltaR";
    case Estimand::kAttR: return "ATT-R";
    case Estimand::kAtuR: return "ATU-R";
    case Estimand::kAteR: return "ATE-R";
    case Estimand::kAteRa: return "ATE-RA";
    case Estimand::kAteNora: return "ATE-NORA";
    case Estimand::kAttA: return "ATT-A";
    case Estimand::kAtuA: return "ATU-A";
    case Estimand::kAte: return "ATE";
  }
  return "?";
}

std::string_view to_string(Method m) {
  switch (m) {
    case Method::kNaive: return "naive";
    case Method::kCic: return "CiC";
    case Method::kIpwUntrimmed: return "IPW1";
    case Method::kIpwTrimmed: return "IPW2";
  }
  return "?";
}

std::string_view to_string(Route r) {
  switch (r) {
    case Route::kNone: return "none";
    case Route::kRespondents: return "respondents-only";
    case Route::kRandomAssignment: return "random-assignment";
    case Route::kNoRandomAssignment: return "no-random-assignment";
    case Route::kUnconfoundedness: return "unconfoundedness-given-baseline";
  }
  return "?";
}

Route route_of(Estimand e, Method m) {
  if (m == Method::kIpwUntrimmed || m == Method::kIpwTrimmed) return Route::kUnconfoundedness;
  switch (e) {
    case Estimand::kNaiveDeltaR: return Route::kNone;
    case Estimand::kAttR:
    case Estimand::kAtuR:
    case Estimand::kAteR: return Route::kRespondents;
    case Estimand::kAteRa: return Route::kRandomAssignment;
    case Estimand::kAteNora:
    case Estimand::kAttA:
    case Estimand::kAtuA: return Route::kNoRandomAssignment;
    case Estimand::kAte: return Route::kNone;
  }
  return Route::kNone;
}

namespace {

double mean_of(std::span<const double> v) {
  double sum = 0.0;
  for (double x : v) sum += x;
  return sum / static_cast<double>(v.size());
}

void require_respondents(const PanelSample& sample) {
  for (int g = 0; g <= 1; ++g) {
    if (sample.count(g, 1) == 0) {
      throw EstimationError(std::string("empty identifying cell: no ") +
                            (g == 1 ? "treatment" : "control") + " respondents");
    }
  }
}

CellCounts cells_used(const PanelSample& sample, std::initializer_list<std::size_t> cells) {
  CellCounts out{};
  for (std::size_t c : cells) out[c] = sample.counts()[c];
  return out;
}

double fraction(std::size_t part, std::size_t whole) {
  return whole == 0 ? 0.0 : static_cast<double>(part) / static_cast<double>(whole);
}

}  // namespace

CicTransforms CicTransforms::build(const PanelSample& sample) {
  require_respondents(sample);
  return CicTransforms(
      {EmpiricalCdf(sample.subsample(0, 1, Field::kBaseline)),
       EmpiricalCdf(sample.subsample(1, 1, Field::kBaseline))},
      {EmpiricalCdf(sample.subsample(0, 1, Field::kFollowUp)),
       EmpiricalCdf(sample.subsample(1, 1, Field::kFollowUp))});
}

double CicTransforms::impute(Potential d, double y0) const {
  return qq_map(baseline(d), follow_up(d), y0);
}

double CicTransforms::to_baseline(Potential d, double y) const {
  return qq_map(follow_up(d), baseline(d), y);
}

bool CicTransforms::outside_range(Potential d, double y0) const {
  return y0 < baseline(d).min() || y0 > baseline(d).max();
}

ImputedMean CicTransforms::impute_all(Potential d, std::span<const double> values) const {
  ImputedMean m;
  for (double y0 : values) {
    m.sum += impute(d, y0);
    ++m.count;
    if (outside_range(d, y0)) ++m.clamped;
  }
  return m;
}

EstimandValue naive_delta_r(const PanelSample& sample) {
  require_respondents(sample);
  EstimandValue v;
  v.estimand = Estimand::kNaiveDeltaR;
  v.method = Method::kNaive;
  v.point = mean_of(sample.subsample(1, 1, Field::kFollowUp)) -
            mean_of(sample.subsample(0, 1, Field::kFollowUp));
  v.n_used = cells_used(sample, {cell_index(0, 1), cell_index(1, 1)});
  return v;
}

EstimandValue att_r(const PanelSample& sample, const CicTransforms& t) {
  const auto counterfactual =
      t.impute_all(Potential::kUntreated, sample.subsample(1, 1, Field::kBaseline));
  EstimandValue v;
  v.estimand = Estimand::kAttR;
  v.point = mean_of(sample.subsample(1, 1, Field::kFollowUp)) - counterfactual.mean();
  v.n_used = cells_used(sample, {cell_index(0, 1), cell_index(1, 1)});
  v.support_warning = counterfactual.clamped > 0;
  v.clamp_fraction = fraction(counterfactual.clamped, counterfactual.count);
  return v;
}

EstimandValue atu_r(const PanelSample& sample, const CicTransforms& t) {
  const auto counterfactual =
      t.impute_all(Potential::kTreated, sample.subsample(0, 1, Field::kBaseline));
  EstimandValue v;
  v.estimand = Estimand::kAtuR;
  v.point = counterfactual.mean() - mean_of(sample.subsample(0, 1, Field::kFollowUp));
  v.n_used = cells_used(sample, {cell_index(0, 1), cell_index(1, 1)});
  v.support_warning = counterfactual.clamped > 0;
  v.clamp_fraction = fraction(counterfactual.clamped, counterfactual.count);
  return v;
}

namespace {

EstimandValue combine_respondents(const PanelSample& sample, const EstimandValue& att,
                                  const EstimandValue& atu) {
  const double n11 = static_cast<double>(sample.count(1, 1));
  const double n01 = static_cast<double>(sample.count(0, 1));
  const double w1 = n11 / (n11 + n01);
  const double w0 = n01 / (n11 + n01);
  EstimandValue v;
  v.estimand = Estimand::kAteR;
  v.point = w1 * att.point + w0 * atu.point;
  v.n_used = att.n_used;
  v.support_warning = att.support_warning || atu.support_warning;
  v.clamp_fraction = w1 * att.clamp_fraction + w0 * atu.clamp_fraction;
  return v;
}

}  // namespace

EstimandValue ate_r(const PanelSample& sample, const CicTransforms& t) {
  return combine_respondents(sample, att_r(sample, t), atu_r(sample, t));
}

EstimandValue ate_random_assignment(const PanelSample& sample, const CicTransforms& t) {
  EstimandValue v;
  v.estimand = Estimand::kAteRa;
  v.n_used = sample.counts();
  std::array<double, 2> arm_mean{};
  std::size_t clamped = 0;
  std::size_t mapped = 0;
  for (int g = 0; g <= 1; ++g) {
    const auto d = static_cast<Potential>(g);
    const double responding = sample.response_share(g, 1);
    arm_mean[static_cast<std::size_t>(g)] =
        responding * mean_of(sample.subsample(g, 1, Field::kFollowUp));
    if (sample.count(g, 0) == 0) {
      v.notes.push_back(std::string(g == 1 ? "treatment" : "control") +
                        " arm has no attritors; imputed term skipped with weight 0");
      continue;
    }
    const auto imputed = t.impute_all(d, sample.subsample(g, 0, Field::kBaseline));
    arm_mean[static_cast<std::size_t>(g)] += sample.response_share(g, 0) * imputed.mean();
    clamped += imputed.clamped;
    mapped += imputed.count;
  }
  v.point = arm_mean[1] - arm_mean[0];
  v.support_warning = clamped > 0;
  v.clamp_fraction = fraction(clamped, mapped);
  return v;
}

NoRandomAssignmentResult ate_no_random_assignment(const PanelSample& sample,
                                                  const CicTransforms& t) {
  NoRandomAssignmentResult out{.ate = {},
                               .att_r = att_r(sample, t),
                               .atu_r = atu_r(sample, t),
                               .att_a = std::nullopt,
                               .atu_a = std::nullopt};
  // Effects on attritors: both potential outcomes imputed from the baseline.
  const auto attritor_effect = [&](int g, Estimand name) -> std::optional<EstimandValue> {
    if (sample.count(g, 0) == 0) return std::nullopt;
    const auto baseline = sample.subsample(g, 0, Field::kBaseline);
    const auto treated = t.impute_all(Potential::kTreated, baseline);
    const auto untreated = t.impute_all(Potential::kUntreated, baseline);
    EstimandValue v;
    v.estimand = name;
    v.point = treated.mean() - untreated.mean();
    v.n_used = cells_used(sample, {cell_index(0, 1), cell_index(1, 1), cell_index(g, 0)});
    v.support_warning = treated.clamped + untreated.clamped > 0;
    v.clamp_fraction = fraction(treated.clamped + untreated.clamped, 2 * baseline.size());
    return v;
  };
  out.att_a = attritor_effect(1, Estimand::kAttA);
  out.atu_a = attritor_effect(0, Estimand::kAtuA);

  EstimandValue& ate = out.ate;
  ate.estimand = Estimand::kAteNora;
  ate.n_used = sample.counts();
  ate.point = sample.cell_probability(1, 1) * out.att_r.point +
              sample.cell_probability(0, 1) * out.atu_r.point;
  ate.clamp_fraction = sample.cell_probability(1, 1) * out.att_r.clamp_fraction +
                       sample.cell_probability(0, 1) * out.atu_r.clamp_fraction;
  ate.support_warning = out.att_r.support_warning || out.atu_r.support_warning;
  if (out.att_a) {
    ate.point += sample.cell_probability(1, 0) * out.att_a->point;
    ate.clamp_fraction += sample.cell_probability(1, 0) * out.att_a->clamp_fraction;
    ate.support_warning = ate.support_warning || out.att_a->support_warning;
  } else {
    ate.notes.push_back("treatment arm has no attritors; ATT-A skipped with weight 0");
  }
  if (out.atu_a) {
    ate.point += sample.cell_probability(0, 0) * out.atu_a->point;
    ate.clamp_fraction += sample.cell_probability(0, 0) * out.atu_a->clamp_fraction;
    ate.support_warning = ate.support_warning || out.atu_a->support_warning;
  } else {
    ate.notes.push_back("control arm has no attritors; ATU-A skipped with weight 0");
  }
  return out;
}

EstimandValue att_r(const PanelSample& sample) { return att_r(sample, CicTransforms::build(sample)); }
EstimandValue atu_r(const PanelSample& sample) { return atu_r(sample, CicTransforms::build(sample)); }
EstimandValue ate_r(const PanelSample& sample) { return ate_r(sample, CicTransforms::build(sample)); }
EstimandValue ate_random_assignment(const PanelSample& sample) {
  return ate_random_assignment(sample, CicTransforms::build(sample));
}
NoRandomAssignmentResult ate_no_random_assignment(const PanelSample& sample) {
  return ate_no_random_assignment(sample, CicTransforms::build(sample));
}

// ---------------------------------------------------------------------------
// Discrete-outcome bounds

std::vector<CdfBound> discrete_bounds(const PanelSample& sample, int g, int r, Potential d,
                                      std::span<const double> grid) {
  if (grid.empty()) throw EstimationError("discrete bounds need a non-empty grid");
  const int arm = arm_of(d);
  const EmpiricalCdf identifying_follow_up(sample.subsample(arm, 1, Field::kFollowUp));
  const EmpiricalCdf identifying_baseline(sample.subsample(arm, 1, Field::kBaseline));
  const EmpiricalCdf target(sample.subsample(g, r, Field::kBaseline));

  std::vector<CdfBound> out;
  out.reserve(grid.size());
  for (double y : grid) {
    const double q = identifying_follow_up.cdf(y);
    CdfBound b{y, 0.0, 0.0};
    if (q > 0.0) {
      b.upper = target.cdf(identifying_baseline.inf_inverse(q));
      const auto lower_point = identifying_baseline.sup_inverse(q);
      b.lower = lower_point.is_negative_infinity() ? 0.0 : target.cdf(lower_point.value());
    }
    out.push_back(b);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Random-assignment diagnostic

std::vector<double> ra_default_grid(const PanelSample& sample) {
  const auto t = CicTransforms::build(sample);
  std::vector<double> grid;
  for (int g = 0; g <= 1; ++g) {
    const auto y1 = sample.cell_values(g, 1, Field::kFollowUp);
    grid.insert(grid.end(), y1.begin(), y1.end());
  }
  for (int d = 0; d <= 1; ++d) {
    for (int g = 0; g <= 1; ++g) {
      for (int r = 0; r <= 1; ++r) {
        if (g == d && r == 1) continue;
        for (double y0 : sample.cell_values(g, r, Field::kBaseline)) {
          grid.push_back(t.impute(static_cast<Potential>(d), y0));
        }
      }
    }
  }
  std::sort(grid.begin(), grid.end());
  grid.erase(std::unique(grid.begin(), grid.end()), grid.end());
  return grid;
}

namespace {

/// Counts #{sorted <= x} for each x of an ascending sequence in one sweep.
class CountCursor {
 public:
  explicit CountCursor(std::span<const double> sorted) : sorted_(sorted) {}
  std::size_t advance_to(double x) {
    while (pos_ < sorted_.size() && sorted_[pos_] <= x) ++pos_;
    return pos_;
  }

 private:
  std::span<const double> sorted_;
  std::size_t pos_ = 0;
};

std::vector<double> sorted_copy(std::span<const double> v) {
  std::vector<double> out(v.begin(), v.end());
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace

namespace {

// Shared sweep. The quantile maps come from `maps`, the cell CDFs and
// response shares from `base`. With `rank_identifying` the identifying cell
// contributes its follow-up ECDF; otherwise its baseline ECDF at the mapped
// point, like every other cell.
RaDiscrepancy sweep_gaps(const PanelSample& base, const PanelSample& maps,
                         std::span<const double> grid, bool rank_identifying) {
  require_respondents(maps);
  if (!std::is_sorted(grid.begin(), grid.end())) {
    throw EstimationError("diagnostic grid must be sorted");
  }
  std::array<std::vector<double>, 4> baseline;
  for (int g = 0; g <= 1; ++g) {
    for (int r = 0; r <= 1; ++r) {
      baseline[cell_index(g, r)] = sorted_copy(base.cell_values(g, r, Field::kBaseline));
    }
  }
  RaDiscrepancy out;
  out.grid.assign(grid.begin(), grid.end());
  for (int d = 0; d <= 1; ++d) {
    const auto follow_up = sorted_copy(maps.cell_values(d, 1, Field::kFollowUp));
    const auto identifying = sorted_copy(maps.cell_values(d, 1, Field::kBaseline));
    const double n_identifying = static_cast<double>(follow_up.size());
    CountCursor follow_up_cursor(follow_up);
    std::array<CountCursor, 4> cell_cursor{CountCursor(baseline[0]), CountCursor(baseline[1]),
                                           CountCursor(baseline[2]), CountCursor(baseline[3])};
    auto& gap = out.gap[static_cast<std::size_t>(d)];
    gap.resize(grid.size());
    double sup = 0.0;
    for (std::size_t j = 0; j < grid.size(); ++j) {
      const std::size_t k = follow_up_cursor.advance_to(grid[j]);
      // Baseline and follow-up samples of the identifying cell have equal
      // size, so inf_inverse(k / n) is the k-th smallest baseline value.
      std::array<double, 4> cdf{};
      for (std::size_t c = 0; c < 4; ++c) {
        if (baseline[c].empty()) continue;
        if (rank_identifying && c == cell_index(d, 1)) {
          cdf[c] = static_cast<double>(k) / n_identifying;
        } else if (k > 0) {
          const double mapped = identifying[k - 1];
          cdf[c] = static_cast<double>(cell_cursor[c].advance_to(mapped)) /
                   static_cast<double>(baseline[c].size());
        }
      }
      const double treated_arm = base.response_share(1, 1) * cdf[cell_index(1, 1)] +
                                 base.response_share(1, 0) * cdf[cell_index(1, 0)];
      const double control_arm = base.response_share(0, 1) * cdf[cell_index(0, 1)] +
                                 base.response_share(0, 0) * cdf[cell_index(0, 0)];
      gap[j] = treated_arm - control_arm;
      sup = std::max(sup, std::abs(gap[j]));
    }
    out.statistic[static_cast<std::size_t>(d)] = sup;
  }
  return out;
}

}  // namespace

RaDiscrepancy ra_diagnostic(const PanelSample& sample, std::span<const double> grid) {
  require_respondents(sample);
  return sweep_gaps(sample, sample, grid, true);
}

RaDiscrepancy ra_mapped_baseline_gap(const PanelSample& baseline_source,
                                     const PanelSample& map_source, std::span<const double> grid) {
  if (baseline_source.size() == 0) throw EstimationError("baseline source sample is empty");
  return sweep_gaps(baseline_source, map_source, grid, false);
}

RaDiscrepancy ra_diagnostic(const PanelSample& sample) {
  const auto grid = ra_default_grid(sample);
  return ra_diagnostic(sample, grid);
}

}  // namespace attrition
