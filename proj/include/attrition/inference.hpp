#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "attrition/panel_data.hpp"

namespace attrition {

enum class ResampleUnit { kUnit, kCluster };

struct BootstrapSpec {
  std::size_t draws = 999;
  std::uint64_t seed = 0;
  ResampleUnit resample_unit = ResampleUnit::kUnit;
  double ci_level = 0.95;
  /// Resample within each arm, keeping arm sizes fixed.
  bool stratify_by_arm = false;
  /// Worker threads; 0 picks the hardware concurrency.
  unsigned threads = 0;
  /// A run with a larger share of failed replicates is rejected.
  double max_failure_share = 0.20;

  /// Throws ConfigError when draws < 2, ci_level is outside (0, 1), or
  /// cluster mode is requested on a sample without cluster ids.
  void validate(const PanelSample& sample) const;
};

struct BootstrapResult {
  std::string name;
  double point = 0.0;
  double se = 0.0;
  double ci_lo = 0.0;
  double ci_hi = 0.0;
  std::size_t draws_used = 0;
  std::size_t failures = 0;
  /// Successful replicate values in replicate-index order.
  std::vector<double> replicates;
};

/// A scalar statistic of a sample. Throwing EstimationError marks the
/// replicate as failed.
struct Statistic {
  std::string name;
  std::function<double(const PanelSample&)> evaluate;
};

/// Several statistics computed together from one sample; a missing entry
/// marks that component as failed on this sample.
struct StatisticSet {
  std::vector<std::string> names;
  std::function<std::vector<std::optional<double>>(const PanelSample&)> evaluate;
};

/// Statistics by name: naive, att_r, atu_r, ate_r, ate_ra, ate_nora, att_a,
/// atu_a, ipw1_ate_r, ipw2_ate_r, ipw1_ate, ipw2_ate, mean_y0. Throws
/// ConfigError for an unknown name.
Statistic named_statistic(const std::string& name);
std::vector<std::string> statistic_names();
/// first - second.
Statistic difference(Statistic first, Statistic second);

/// Row indices of a resample for replicate `replicate`.
std::vector<std::size_t> resample_rows(const PanelSample& sample, const BootstrapSpec& spec,
                                       std::uint64_t replicate);

/// Nonparametric bootstrap. The point estimate is always computed on the
/// original sample. Throws EstimationError when the statistic fails on the
/// original sample or more than max_failure_share of replicates fail.
BootstrapResult bootstrap(const PanelSample& sample, const Statistic& statistic,
                          const BootstrapSpec& spec);

/// One resampling loop shared by all statistics in the set. Entries failing
/// on the original sample come back as nullopt; unreliable ones throw only if
/// `strict` is set, otherwise they are nullopt too.
std::vector<std::optional<BootstrapResult>> bootstrap_set(const PanelSample& sample,
                                                          const StatisticSet& set,
                                                          const BootstrapSpec& spec,
                                                          bool strict = false);

/// Percentile interval and standard error from replicate values.
BootstrapResult summarize_replicates(std::string name, double point,
                                     std::vector<double> replicates, std::size_t failures,
                                     double ci_level);

struct DiagnosticPValue {
  std::array<double, 2> statistic{};
  std::array<double, 2> pvalue{};
  /// Uses max over d of the two sup-norm gaps.
  double joint_statistic = 0.0;
  double joint_pvalue = 0.0;
  std::size_t draws_used = 0;
  std::size_t failures = 0;
};

/// Bootstrap p-values of the random-assignment diagnostic. Each replicate gap
/// is centred at the original sample's baseline CDF difference evaluated at
/// the replicate's quantile maps (see ra_mapped_baseline_gap).
DiagnosticPValue diagnostic_pvalue(const PanelSample& sample, const BootstrapSpec& spec);

/// Runs `task(i)` for i in [0, count) on `threads` workers (0 = hardware).
void parallel_for(std::size_t count, unsigned threads, const std::function<void(std::size_t)>& task);

}  // namespace attrition
