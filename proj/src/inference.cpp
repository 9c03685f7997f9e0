#include "attrition/inference.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <map>
#include <mutex>
#include <thread>

#include "attrition/cic_estimators.hpp"
#include "attrition/empirical.hpp"
#include "attrition/errors.hpp"
#include "attrition/ipw.hpp"
#include "attrition/rng.hpp"

namespace attrition {

void parallel_for(std::size_t count, unsigned threads,
                  const std::function<void(std::size_t)>& task) {
  if (count == 0) return;
  unsigned workers = threads != 0 ? threads : std::max(1u, std::thread::hardware_concurrency());
  workers = static_cast<unsigned>(std::min<std::size_t>(workers, count));
  if (workers <= 1) {
    for (std::size_t i = 0; i < count; ++i) task(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (unsigned w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (;;) {
        const std::size_t i = next.fetch_add(1);
        if (i >= count) return;
        try {
          task(i);
        } catch (...) {
          std::lock_guard lock(error_mutex);
          if (!error) error = std::current_exception();
          next.store(count);
          return;
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

void BootstrapSpec::validate(const PanelSample& sample) const {
  if (draws < 2) throw ConfigError("bootstrap needs at least 2 draws");
  if (!(ci_level > 0.0 && ci_level < 1.0)) throw ConfigError("ci_level must lie in (0, 1)");
  if (!(max_failure_share >= 0.0 && max_failure_share <= 1.0)) {
    throw ConfigError("max_failure_share must lie in [0, 1]");
  }
  if (resample_unit == ResampleUnit::kCluster && !sample.has_clusters()) {
    throw ConfigError("cluster resampling requires a cluster id on every record");
  }
}

namespace {

/// Precomputed resampling blocks: single rows, or whole clusters, optionally
/// split by arm.
class Resampler {
 public:
  Resampler(const PanelSample& sample, const BootstrapSpec& spec) : spec_(spec) {
    const auto& records = sample.records();
    const std::size_t strata = spec.stratify_by_arm ? 2 : 1;
    blocks_.resize(strata);
    if (spec.resample_unit == ResampleUnit::kUnit) {
      for (std::size_t i = 0; i < records.size(); ++i) {
        const std::size_t s = spec.stratify_by_arm ? static_cast<std::size_t>(records[i].g) : 0;
        blocks_[s].push_back({i});
      }
    } else {
      std::map<std::string, std::size_t> index;
      std::vector<std::vector<std::size_t>> clusters;
      std::vector<std::size_t> stratum_of;
      for (std::size_t i = 0; i < records.size(); ++i) {
        const auto& id = records[i].cluster.value();
        auto [it, inserted] = index.try_emplace(id, clusters.size());
        if (inserted) {
          clusters.emplace_back();
          stratum_of.push_back(spec.stratify_by_arm ? static_cast<std::size_t>(records[i].g) : 0);
        }
        clusters[it->second].push_back(i);
      }
      for (std::size_t c = 0; c < clusters.size(); ++c) {
        blocks_[stratum_of[c]].push_back(std::move(clusters[c]));
      }
    }
    total_rows_ = records.size();
  }

  std::vector<std::size_t> draw(std::uint64_t replicate) const {
    Rng rng(derive_seed(spec_.seed, replicate));
    std::vector<std::size_t> rows;
    rows.reserve(total_rows_);
    for (const auto& stratum : blocks_) {
      for (std::size_t k = 0; k < stratum.size(); ++k) {
        const auto& block = stratum[rng.below(stratum.size())];
        rows.insert(rows.end(), block.begin(), block.end());
      }
    }
    return rows;
  }

 private:
  BootstrapSpec spec_;
  std::vector<std::vector<std::vector<std::size_t>>> blocks_;
  std::size_t total_rows_ = 0;
};

}  // namespace

std::vector<std::size_t> resample_rows(const PanelSample& sample, const BootstrapSpec& spec,
                                       std::uint64_t replicate) {
  spec.validate(sample);
  return Resampler(sample, spec).draw(replicate);
}

BootstrapResult summarize_replicates(std::string name, double point,
                                     std::vector<double> replicates, std::size_t failures,
                                     double ci_level) {
  BootstrapResult out;
  out.name = std::move(name);
  out.point = point;
  out.failures = failures;
  out.draws_used = replicates.size();
  out.replicates = std::move(replicates);
  if (out.replicates.empty()) return out;
  const auto [lo_it, hi_it] = std::minmax_element(out.replicates.begin(), out.replicates.end());
  if (*lo_it != *hi_it && out.replicates.size() > 1) {
    double mean = 0.0;
    for (double v : out.replicates) mean += v;
    mean /= static_cast<double>(out.replicates.size());
    double ss = 0.0;
    for (double v : out.replicates) ss += (v - mean) * (v - mean);
    out.se = std::sqrt(ss / static_cast<double>(out.replicates.size() - 1));
  }
  const EmpiricalCdf dist(std::span<const double>(out.replicates));
  const double tail = (1.0 - ci_level) / 2.0;
  out.ci_lo = dist.inf_inverse(tail);
  out.ci_hi = dist.inf_inverse(1.0 - tail);
  return out;
}

std::vector<std::optional<BootstrapResult>> bootstrap_set(const PanelSample& sample,
                                                          const StatisticSet& set,
                                                          const BootstrapSpec& spec, bool strict) {
  spec.validate(sample);
  const std::size_t k = set.names.size();
  const auto original = set.evaluate(sample);
  if (original.size() != k) throw std::logic_error("statistic set returned wrong arity");

  const Resampler resampler(sample, spec);
  std::vector<std::vector<std::optional<double>>> draws(spec.draws);
  parallel_for(spec.draws, spec.threads, [&](std::size_t b) {
    const auto rows = resampler.draw(b);
    const auto resampled = PanelSample::resample(sample, rows);
    draws[b] = set.evaluate(resampled);
  });

  std::vector<std::optional<BootstrapResult>> out(k);
  for (std::size_t j = 0; j < k; ++j) {
    if (!original[j]) {
      if (strict) throw EstimationError(set.names[j] + ": statistic fails on the original sample");
      continue;
    }
    std::vector<double> values;
    values.reserve(spec.draws);
    std::size_t failures = 0;
    for (const auto& d : draws) {
      if (d[j]) {
        values.push_back(*d[j]);
      } else {
        ++failures;
      }
    }
    if (static_cast<double>(failures) > spec.max_failure_share * static_cast<double>(spec.draws) ||
        values.size() < 2) {
      if (strict) {
        throw EstimationError(set.names[j] + ": bootstrap unreliable, " +
                              std::to_string(failures) + " of " + std::to_string(spec.draws) +
                              " replicates failed");
      }
      continue;
    }
    out[j] = summarize_replicates(set.names[j], *original[j], std::move(values), failures,
                                  spec.ci_level);
  }
  return out;
}

BootstrapResult bootstrap(const PanelSample& sample, const Statistic& statistic,
                          const BootstrapSpec& spec) {
  StatisticSet set;
  set.names = {statistic.name};
  set.evaluate = [&](const PanelSample& s) -> std::vector<std::optional<double>> {
    try {
      return {statistic.evaluate(s)};
    } catch (const EstimationError&) {
      return {std::nullopt};
    }
  };
  auto results = bootstrap_set(sample, set, spec, true);
  return std::move(*results.front());
}

// ---------------------------------------------------------------------------
// Named statistics

namespace {

struct NamedEntry {
  const char* name;
  double (*evaluate)(const PanelSample&);
};

double require_attritor(const std::optional<EstimandValue>& v, const char* what) {
  if (!v) throw EstimationError(std::string(what) + ": arm has no attritors");
  return v->point;
}

const NamedEntry kNamed[] = {
    {"naive", [](const PanelSample& s) { return naive_delta_r(s).point; }},
    {"att_r", [](const PanelSample& s) { return att_r(s).point; }},
    {"atu_r", [](const PanelSample& s) { return atu_r(s).point; }},
    {"ate_r", [](const PanelSample& s) { return ate_r(s).point; }},
    {"ate_ra", [](const PanelSample& s) { return ate_random_assignment(s).point; }},
    {"ate_nora", [](const PanelSample& s) { return ate_no_random_assignment(s).ate.point; }},
    {"att_a",
     [](const PanelSample& s) { return require_attritor(ate_no_random_assignment(s).att_a, "ATT-A"); }},
    {"atu_a",
     [](const PanelSample& s) { return require_attritor(ate_no_random_assignment(s).atu_a, "ATU-A"); }},
    {"ipw1_ate_r", [](const PanelSample& s) { return ipw_ate_r(s, std::nullopt).point; }},
    {"ipw2_ate_r", [](const PanelSample& s) { return ipw_ate_r(s, TrimRule{}).point; }},
    {"ipw1_ate", [](const PanelSample& s) { return ipw_ate(s, std::nullopt).point; }},
    {"ipw2_ate", [](const PanelSample& s) { return ipw_ate(s, TrimRule{}).point; }},
    {"mean_y0",
     [](const PanelSample& s) {
       if (s.empty()) throw EstimationError("empty sample");
       double sum = 0.0;
       for (const auto& rec : s.records()) sum += rec.y0;
       return sum / static_cast<double>(s.size());
     }},
};

}  // namespace

std::vector<std::string> statistic_names() {
  std::vector<std::string> out;
  for (const auto& e : kNamed) out.emplace_back(e.name);
  return out;
}

Statistic named_statistic(const std::string& name) {
  for (const auto& e : kNamed) {
    if (name == e.name) return Statistic{name, e.evaluate};
  }
  throw ConfigError("unknown statistic '" + name + "'");
}

Statistic difference(Statistic first, Statistic second) {
  Statistic out;
  out.name = first.name + " - " + second.name;
  out.evaluate = [a = std::move(first.evaluate), b = std::move(second.evaluate)](
                     const PanelSample& s) { return a(s) - b(s); };
  return out;
}

// ---------------------------------------------------------------------------
// Random-assignment diagnostic

DiagnosticPValue diagnostic_pvalue(const PanelSample& sample, const BootstrapSpec& spec) {
  spec.validate(sample);
  const auto grid = ra_default_grid(sample);
  const auto observed = ra_diagnostic(sample, grid);

  const Resampler resampler(sample, spec);
  std::vector<std::optional<std::array<double, 2>>> replicate(spec.draws);
  parallel_for(spec.draws, spec.threads, [&](std::size_t b) {
    const auto resampled = PanelSample::resample(sample, resampler.draw(b));
    try {
      const auto gap = ra_diagnostic(resampled, grid);
      // Under the null the gap is the arm difference of baseline CDFs at the
      // quantile-mapped points, and that difference vanishes everywhere. The
      // replicate is therefore centred at the original baseline CDFs taken at
      // the replicate's own mapped points.
      const auto centre = ra_mapped_baseline_gap(sample, resampled, grid);
      std::array<double, 2> stat{};
      for (std::size_t d = 0; d < 2; ++d) {
        for (std::size_t j = 0; j < grid.size(); ++j) {
          stat[d] = std::max(stat[d], std::abs(gap.gap[d][j] - centre.gap[d][j]));
        }
      }
      replicate[b] = stat;
    } catch (const EstimationError&) {
      replicate[b] = std::nullopt;
    }
  });

  DiagnosticPValue out;
  out.statistic = observed.statistic;
  out.joint_statistic = std::max(observed.statistic[0], observed.statistic[1]);
  std::array<std::size_t, 2> exceed{};
  std::size_t joint_exceed = 0;
  for (const auto& r : replicate) {
    if (!r) {
      ++out.failures;
      continue;
    }
    ++out.draws_used;
    for (std::size_t d = 0; d < 2; ++d) {
      if ((*r)[d] >= out.statistic[d]) ++exceed[d];
    }
    if (std::max((*r)[0], (*r)[1]) >= out.joint_statistic) ++joint_exceed;
  }
  if (static_cast<double>(out.failures) > spec.max_failure_share * static_cast<double>(spec.draws) ||
      out.draws_used == 0) {
    throw EstimationError("diagnostic bootstrap unreliable: " + std::to_string(out.failures) +
                          " of " + std::to_string(spec.draws) + " replicates failed");
  }
  const double used = static_cast<double>(out.draws_used);
  for (std::size_t d = 0; d < 2; ++d) out.pvalue[d] = static_cast<double>(exceed[d]) / used;
  out.joint_pvalue = static_cast<double>(joint_exceed) / used;
  return out;
}

}  // namespace attrition
