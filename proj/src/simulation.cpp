#include "attrition/simulation.hpp"

#include <cmath>
#include <iomanip>
#include <ostream>
#include <sstream>

#include "json.hpp"

#include "attrition/errors.hpp"
#include "attrition/inference.hpp"
#include "attrition/ipw.hpp"
#include "attrition/rng.hpp"
#include "attrition/stats.hpp"

namespace attrition {

double SimDesign::sigma_y1_untreated() const { return std::sqrt(1.0 + sigma * sigma); }

double SimDesign::beta1() const { return 0.25 * sigma_y1_untreated(); }

double SimDesign::sigma_v() const {
  const double loading_var = response == ResponseRule::kSymmetric
                                 ? 1.0 + sigma * sigma / 2.0  // Var((U0 + U1) / 2)
                                 : 1.0 + sigma * sigma;       // Var(U1)
  return std::sqrt(b * b * loading_var + 1.0);
}

double SimDesign::threshold(int g) const {
  return sigma_v() * stats::normal_quantile(target_attrition(g));
}

void SimDesign::validate() const {
  if (n == 0) throw ConfigError("design n must be positive");
  if (!(sigma >= 0.0) || !std::isfinite(sigma)) throw ConfigError("design sigma must be >= 0");
  if (!std::isfinite(beta2) || !std::isfinite(b)) throw ConfigError("design coefficients must be finite");
  for (double rate : {attrition_control, attrition_treated}) {
    if (!(rate > 0.0 && rate < 1.0)) throw ConfigError("attrition rates must lie in (0, 1)");
  }
}

SimDesign design_preset(std::string_view name, std::size_t n, double sigma, double beta2,
                        std::uint64_t seed) {
  SimDesign d;
  d.label = std::string(name);
  d.n = n;
  d.sigma = sigma;
  d.beta2 = beta2;
  d.seed = seed;
  if (name == "I") {
    d.b = 1.0;
    d.attrition_control = 0.3;
    d.attrition_treated = 0.2;
  } else if (name == "II") {
    d.b = 1.0;
    d.attrition_control = 0.25;
    d.attrition_treated = 0.25;
  } else if (name == "III") {
    d.b = 0.0;
    d.attrition_control = 0.3;
    d.attrition_treated = 0.2;
  } else {
    throw ConfigError("unknown design '" + std::string(name) + "' (expected I, II or III)");
  }
  d.validate();
  return d;
}

namespace {

struct Thresholds {
  double control;
  double treated;
};

LatentRecord draw_unit(Rng& rng, const SimDesign& design, const Thresholds& a) {
  LatentRecord u;
  u.alpha = rng.normal();
  u.eta0 = rng.normal();
  u.eta1 = rng.normal();
  u.eps = rng.normal();
  u.g = rng.bernoulli(0.5) ? 1 : 0;
  u.u0 = u.alpha + design.sigma * u.eta0;
  u.u1 = u.alpha + design.sigma * u.eta1;
  const double loading =
      design.response == ResponseRule::kSymmetric ? 0.5 * (u.u0 + u.u1) : u.u1;
  const double v = design.b * loading + u.eps;
  u.r0 = v >= a.control ? 1 : 0;
  u.r1 = v >= a.treated ? 1 : 0;
  return u;
}

Thresholds thresholds_of(const SimDesign& design) {
  return {design.threshold(0), design.threshold(1)};
}

constexpr std::uint64_t kTruthStream = 0x8000000000000000ULL;
constexpr std::uint64_t kInvarianceStream = 0x4000000000000000ULL;

}  // namespace

SimDraw draw_sample(const SimDesign& design, std::uint64_t replication, bool keep_latents) {
  design.validate();
  const auto a = thresholds_of(design);
  Rng rng(derive_seed(design.seed, replication));
  const double beta1 = design.beta1();
  std::vector<UnitRecord> records;
  records.reserve(design.n);
  SimDraw out;
  if (keep_latents) out.latents.reserve(design.n);
  for (std::size_t i = 0; i < design.n; ++i) {
    const auto u = draw_unit(rng, design, a);
    UnitRecord rec;
    rec.id = std::to_string(i + 1);
    rec.g = u.g;
    rec.r = u.g == 1 ? u.r1 : u.r0;
    rec.y0 = u.u0;
    if (rec.r == 1) rec.y1 = u.g == 1 ? beta1 + (1.0 + design.beta2) * u.u1 : u.u1;
    records.push_back(std::move(rec));
    if (keep_latents) out.latents.push_back(u);
  }
  out.sample = PanelSample::from_records(std::move(records));
  return out;
}

TrueValues true_values(const SimDesign& design, std::size_t mc_size, unsigned threads) {
  design.validate();
  if (mc_size == 0) throw ConfigError("mc_size must be positive");
  const auto a = thresholds_of(design);
  constexpr std::size_t kChunk = 1'000'000;
  const std::size_t chunks = (mc_size + kChunk - 1) / kChunk;
  struct Sums {
    std::array<double, 4> effect{};  // by (g, r) cell
    std::array<std::size_t, 4> count{};
  };
  std::vector<Sums> partial(chunks);
  const double beta1 = design.beta1();
  parallel_for(chunks, threads, [&](std::size_t c) {
    Rng rng(derive_seed(design.seed ^ kTruthStream, c));
    const std::size_t units = std::min(kChunk, mc_size - c * kChunk);
    Sums& s = partial[c];
    for (std::size_t i = 0; i < units; ++i) {
      const auto u = draw_unit(rng, design, a);
      const int r = u.g == 1 ? u.r1 : u.r0;
      const double effect = beta1 + design.beta2 * u.u1;  // Y1(1) - Y1(0)
      const std::size_t cell = cell_index(u.g, r);
      s.effect[cell] += effect;
      ++s.count[cell];
    }
  });
  Sums total;
  for (const auto& s : partial) {
    for (std::size_t c = 0; c < 4; ++c) {
      total.effect[c] += s.effect[c];
      total.count[c] += s.count[c];
    }
  }
  const auto ratio = [](double sum, std::size_t count) {
    return count == 0 ? 0.0 : sum / static_cast<double>(count);
  };
  TrueValues tv;
  tv.mc_size = mc_size;
  tv.att_r = ratio(total.effect[cell_index(1, 1)], total.count[cell_index(1, 1)]);
  tv.atu_r = ratio(total.effect[cell_index(0, 1)], total.count[cell_index(0, 1)]);
  tv.att_a = ratio(total.effect[cell_index(1, 0)], total.count[cell_index(1, 0)]);
  tv.atu_a = ratio(total.effect[cell_index(0, 0)], total.count[cell_index(0, 0)]);
  tv.ate_r = ratio(total.effect[cell_index(1, 1)] + total.effect[cell_index(0, 1)],
                   total.count[cell_index(1, 1)] + total.count[cell_index(0, 1)]);
  double all = 0.0;
  std::size_t n = 0;
  for (std::size_t c = 0; c < 4; ++c) {
    all += total.effect[c];
    n += total.count[c];
  }
  tv.ate = ratio(all, n);
  return tv;
}

// ---------------------------------------------------------------------------
// Monte Carlo

std::vector<McEstimator> all_mc_estimators() {
  return {McEstimator::kNaive,    McEstimator::kCicAttR,   McEstimator::kCicAtuR,
          McEstimator::kCicAteR,  McEstimator::kIpw1AteR,  McEstimator::kIpw2AteR,
          McEstimator::kCicAteRa, McEstimator::kCicAteNora, McEstimator::kIpw1Ate,
          McEstimator::kIpw2Ate};
}

std::pair<std::string, std::string> mc_labels(McEstimator e) {
  switch (e) {
    case McEstimator::kNaive: return {"ATE-R", "naive-DeltaR"};
    case McEstimator::kCicAttR: return {"ATT-R", "CiC"};
    case McEstimator::kCicAtuR: return {"ATU-R", "CiC"};
    case McEstimator::kCicAteR: return {"ATE-R", "CiC"};
    case McEstimator::kIpw1AteR: return {"ATE-R", "IPW1"};
    case McEstimator::kIpw2AteR: return {"ATE-R", "IPW2"};
    case McEstimator::kCicAteRa: return {"ATE", "CiC-RA"};
    case McEstimator::kCicAteNora: return {"ATE", "CiC-NORA"};
    case McEstimator::kIpw1Ate: return {"ATE", "IPW1"};
    case McEstimator::kIpw2Ate: return {"ATE", "IPW2"};
  }
  return {"?", "?"};
}

const McRow& McSummary::row(McEstimator e) const {
  for (const auto& r : rows) {
    if (r.estimator == e) return r;
  }
  throw std::out_of_range("estimator not part of this summary");
}

McRow summarize_estimates(std::span<const double> values, double truth) {
  McRow row;
  row.truth = truth;
  row.used = values.size();
  if (values.empty()) return row;
  const double n = static_cast<double>(values.size());
  double sum = 0.0;
  for (double v : values) sum += v;
  row.mean = sum / n;
  double ss = 0.0;
  double sq_err = 0.0;
  for (double v : values) {
    ss += (v - row.mean) * (v - row.mean);
    sq_err += (v - truth) * (v - truth);
  }
  row.bias = row.mean - truth;
  row.sd = std::sqrt(ss / n);
  row.rmse = std::sqrt(sq_err / n);
  return row;
}

namespace {

double truth_for(McEstimator e, const TrueValues& tv) {
  switch (e) {
    case McEstimator::kCicAttR: return tv.att_r;
    case McEstimator::kCicAtuR: return tv.atu_r;
    case McEstimator::kNaive:
    case McEstimator::kCicAteR:
    case McEstimator::kIpw1AteR:
    case McEstimator::kIpw2AteR: return tv.ate_r;
    case McEstimator::kCicAteRa:
    case McEstimator::kCicAteNora:
    case McEstimator::kIpw1Ate:
    case McEstimator::kIpw2Ate: return tv.ate;
  }
  return 0.0;
}

bool uses_ipw(McEstimator e) {
  return e == McEstimator::kIpw1AteR || e == McEstimator::kIpw2AteR ||
         e == McEstimator::kIpw1Ate || e == McEstimator::kIpw2Ate;
}

bool uses_cic(McEstimator e) {
  return e == McEstimator::kCicAttR || e == McEstimator::kCicAtuR ||
         e == McEstimator::kCicAteR || e == McEstimator::kCicAteRa ||
         e == McEstimator::kCicAteNora;
}

std::vector<std::optional<double>> evaluate_estimators(const PanelSample& sample,
                                                       const std::vector<McEstimator>& which) {
  std::vector<std::optional<double>> out(which.size());
  std::optional<CicTransforms> transforms;
  std::optional<PropensityModels> models;
  bool cic_failed = false;
  bool ipw_failed = false;
  for (std::size_t k = 0; k < which.size(); ++k) {
    const McEstimator e = which[k];
    try {
      if (uses_cic(e) && !transforms && !cic_failed) {
        try {
          transforms = CicTransforms::build(sample);
        } catch (const EstimationError&) {
          cic_failed = true;
        }
      }
      if (uses_ipw(e) && !models && !ipw_failed) {
        try {
          models = fit_propensities(sample);
        } catch (const EstimationError&) {
          ipw_failed = true;
        }
      }
      if ((uses_cic(e) && !transforms) || (uses_ipw(e) && !models)) continue;
      switch (e) {
        case McEstimator::kNaive: out[k] = naive_delta_r(sample).point; break;
        case McEstimator::kCicAttR: out[k] = att_r(sample, *transforms).point; break;
        case McEstimator::kCicAtuR: out[k] = atu_r(sample, *transforms).point; break;
        case McEstimator::kCicAteR: out[k] = ate_r(sample, *transforms).point; break;
        case McEstimator::kCicAteRa:
          out[k] = ate_random_assignment(sample, *transforms).point;
          break;
        case McEstimator::kCicAteNora:
          out[k] = ate_no_random_assignment(sample, *transforms).ate.point;
          break;
        case McEstimator::kIpw1AteR: out[k] = ipw_ate_r(sample, *models, std::nullopt).point; break;
        case McEstimator::kIpw2AteR: out[k] = ipw_ate_r(sample, *models, TrimRule{}).point; break;
        case McEstimator::kIpw1Ate: out[k] = ipw_ate(sample, *models, std::nullopt).point; break;
        case McEstimator::kIpw2Ate: out[k] = ipw_ate(sample, *models, TrimRule{}).point; break;
      }
    } catch (const EstimationError&) {
      out[k] = std::nullopt;
    }
  }
  return out;
}

}  // namespace

McSummary run_monte_carlo(const SimDesign& design, std::size_t replications,
                          const std::vector<McEstimator>& estimators, const McOptions& options) {
  design.validate();
  if (replications < 2) throw ConfigError("Monte Carlo needs at least 2 replications");
  McSummary summary;
  summary.design = design;
  summary.replications = replications;
  summary.truth = true_values(design, options.truth_mc_size, options.threads);

  std::vector<std::vector<std::optional<double>>> results(replications);
  parallel_for(replications, options.threads, [&](std::size_t rep) {
    const auto draw = draw_sample(design, rep);
    results[rep] = evaluate_estimators(draw.sample, estimators);
  });

  for (std::size_t k = 0; k < estimators.size(); ++k) {
    std::vector<double> values;
    values.reserve(replications);
    std::size_t failures = 0;
    for (const auto& r : results) {
      if (r[k]) {
        values.push_back(*r[k]);
      } else {
        ++failures;
      }
    }
    McRow row = summarize_estimates(values, truth_for(estimators[k], summary.truth));
    row.estimator = estimators[k];
    std::tie(row.estimand, row.method) = mc_labels(estimators[k]);
    row.failures = failures;
    summary.rows.push_back(std::move(row));
  }
  return summary;
}

void write_summary_csv(std::ostream& out, const McSummary& summary) {
  out << "estimand,estimator,true,mean,bias,sd,rmse,failures\n";
  const auto old = out.precision(17);
  for (const auto& r : summary.rows) {
    out << r.estimand << ',' << r.method << ',' << r.truth << ',' << r.mean << ',' << r.bias
        << ',' << r.sd << ',' << r.rmse << ',' << r.failures << '\n';
  }
  out.precision(old);
}

std::string summary_to_json(const McSummary& summary, int indent) {
  using nlohmann::ordered_json;
  ordered_json j;
  j["schema"] = "attrition-cic/mc-summary/v1";
  const auto& d = summary.design;
  j["design"] = {{"label", d.label},
                 {"n", d.n},
                 {"sigma", d.sigma},
                 {"beta1", d.beta1()},
                 {"beta2", d.beta2},
                 {"b", d.b},
                 {"attrition_control", d.attrition_control},
                 {"attrition_treated", d.attrition_treated},
                 {"a0", d.threshold(0)},
                 {"a1", d.threshold(1)},
                 {"seed", d.seed},
                 {"normal_algorithm", std::string(kNormalAlgorithm)}};
  j["replications"] = summary.replications;
  j["true_values"] = {{"ATT-R", summary.truth.att_r}, {"ATU-R", summary.truth.atu_r},
                      {"ATE-R", summary.truth.ate_r}, {"ATE", summary.truth.ate},
                      {"ATT-A", summary.truth.att_a}, {"ATU-A", summary.truth.atu_a},
                      {"mc_size", summary.truth.mc_size}};
  ordered_json rows = ordered_json::array();
  for (const auto& r : summary.rows) {
    rows.push_back({{"estimand", r.estimand},
                    {"estimator", r.method},
                    {"true", r.truth},
                    {"mean", r.mean},
                    {"bias", r.bias},
                    {"sd", r.sd},
                    {"rmse", r.rmse},
                    {"failures", r.failures}});
  }
  j["rows"] = rows;
  return j.dump(indent);
}

void write_summary_text(std::ostream& out, const McSummary& summary) {
  const auto& d = summary.design;
  out << "Design " << d.label << "  n=" << d.n << "  sigma=" << d.sigma << "  beta2=" << d.beta2
      << "  replications=" << summary.replications << '\n';
  out << std::left << std::setw(8) << "" << std::setw(14) << "Estim." << std::right
      << std::setw(8) << "True" << std::setw(8) << "Mean" << std::setw(8) << "Bias"
      << std::setw(8) << "SD" << std::setw(8) << "RMSE" << std::setw(10) << "Failures" << '\n';
  std::string last;
  for (const auto& r : summary.rows) {
    const std::string label = r.estimand == last ? "" : r.estimand;
    last = r.estimand;
    out << std::left << std::setw(8) << label << std::setw(14) << r.method << std::right
        << std::fixed << std::setprecision(2) << std::setw(8) << r.truth << std::setw(8)
        << r.mean << std::setw(8) << r.bias << std::setw(8) << r.sd << std::setw(8) << r.rmse
        << std::setw(10) << r.failures << '\n';
  }
  out.unsetf(std::ios::floatfield);
}

// ---------------------------------------------------------------------------
// Time invariance

std::vector<CellDistance> time_invariance_check(const SimDesign& design, std::size_t mc_size) {
  design.validate();
  if (mc_size == 0) throw ConfigError("mc_size must be positive");
  const auto a = thresholds_of(design);
  std::array<std::vector<double>, 4> u0_by_cell;
  std::array<std::vector<double>, 4> u1_by_cell;
  std::array<std::vector<double>, 4> u0_by_type;  // index 2 * r0 + r1
  std::array<std::vector<double>, 4> u1_by_type;
  const auto smallest = [&] {
    std::size_t m = u0_by_cell[0].size();
    for (const auto& v : u0_by_cell) m = std::min(m, v.size());
    return m;
  };
  Rng rng(derive_seed(design.seed ^ kInvarianceStream, 0));
  // Bail out if a cell is so rare that filling it would take forever.
  const std::size_t max_units = 1000 * mc_size;
  std::size_t drawn = 0;
  while (smallest() < mc_size && drawn < max_units) {
    const auto u = draw_unit(rng, design, a);
    ++drawn;
    const int r = u.g == 1 ? u.r1 : u.r0;
    const std::size_t cell = cell_index(u.g, r);
    u0_by_cell[cell].push_back(u.u0);
    u1_by_cell[cell].push_back(u.u1);
    const std::size_t type = static_cast<std::size_t>(2 * u.r0 + u.r1);
    u0_by_type[type].push_back(u.u0);
    u1_by_type[type].push_back(u.u1);
  }
  std::vector<CellDistance> out;
  for (int g = 0; g <= 1; ++g) {
    for (int r = 0; r <= 1; ++r) {
      const std::size_t c = cell_index(g, r);
      CellDistance cd;
      cd.cell = "G=" + std::to_string(g) + ",R=" + std::to_string(r);
      cd.n = u0_by_cell[c].size();
      if (cd.n > 0) {
        cd.ks = stats::ks_distance(u0_by_cell[c], u1_by_cell[c]);
        cd.pvalue = stats::ks_pvalue(cd.ks, cd.n, cd.n);
      }
      out.push_back(cd);
    }
  }
  for (int r0 = 0; r0 <= 1; ++r0) {
    for (int r1 = 0; r1 <= 1; ++r1) {
      const std::size_t t = static_cast<std::size_t>(2 * r0 + r1);
      if (u0_by_type[t].empty()) continue;
      CellDistance cd;
      cd.cell = "R(0)=" + std::to_string(r0) + ",R(1)=" + std::to_string(r1);
      cd.n = u0_by_type[t].size();
      cd.ks = stats::ks_distance(u0_by_type[t], u1_by_type[t]);
      cd.pvalue = stats::ks_pvalue(cd.ks, cd.n, cd.n);
      out.push_back(cd);
    }
  }
  return out;
}

}  // namespace attrition
