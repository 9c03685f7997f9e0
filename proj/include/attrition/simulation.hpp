#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <string_view>
#include <span>
#include <utility>
#include <vector>

#include "attrition/cic_estimators.hpp"
#include "attrition/panel_data.hpp"

namespace attrition {

/// How the response index V loads on the outcome unobservables.
enum class ResponseRule {
  /// V = b * (U0 + U1) / 2 + eps: symmetric in (U0, U1).
  kSymmetric,
  /// V = b * U1 + eps: breaks time invariance given response.
  kFollowUpOnly,
};

/// Parameterization of the two-period simulation design.
///
///   U_t = alpha + sigma * eta_t,   alpha, eta_0, eta_1 ~ N(0, 1) iid
///   Y_t(0) = U_t,  Y_t(1) = beta1 + (1 + beta2) * U_t
///   G ~ Bernoulli(0.5)
///   R(g) = 1{V >= a_g},  R = G * R(1) + (1 - G) * R(0)
///
/// beta1 is a quarter of the standard deviation of Y_1(0); the thresholds
/// a_g are the quantiles of V that reproduce the target attrition rates.
struct SimDesign {
  std::string label = "custom";
  std::size_t n = 2000;
  double sigma = 2.0;
  double beta2 = 0.0;
  double b = 1.0;
  double attrition_control = 0.3;
  double attrition_treated = 0.2;
  std::uint64_t seed = 0;
  ResponseRule response = ResponseRule::kSymmetric;

  double sigma_y1_untreated() const;
  double beta1() const;
  double sigma_v() const;
  /// a_g, chosen so that P(V < a_g) equals the arm's target attrition rate.
  double threshold(int g) const;
  double target_attrition(int g) const { return g == 1 ? attrition_treated : attrition_control; }

  /// Throws ConfigError for n = 0, sigma < 0, or rates outside (0, 1).
  void validate() const;
};

/// Designs "I", "II" and "III". Throws ConfigError for any other name.
SimDesign design_preset(std::string_view name, std::size_t n, double sigma, double beta2,
                        std::uint64_t seed);

struct LatentRecord {
  double alpha = 0.0;
  double eta0 = 0.0;
  double eta1 = 0.0;
  double eps = 0.0;
  double u0 = 0.0;
  double u1 = 0.0;
  int g = 0;
  int r0 = 0;  // potential response when untreated
  int r1 = 0;  // potential response when treated
};

struct SimDraw {
  PanelSample sample;
  /// Filled only when requested; never part of the sample.
  std::vector<LatentRecord> latents;
};

/// Replication `replication` of the design, seeded from
/// derive_seed(design.seed, replication).
SimDraw draw_sample(const SimDesign& design, std::uint64_t replication, bool keep_latents = false);

struct TrueValues {
  double att_r = 0.0;
  double atu_r = 0.0;
  double ate_r = 0.0;
  double ate = 0.0;
  double att_a = 0.0;
  double atu_a = 0.0;
  std::size_t mc_size = 0;
};

/// Population effects by Monte Carlo over latent potential outcomes and
/// potential responses, on a stream separate from the replications.
TrueValues true_values(const SimDesign& design, std::size_t mc_size, unsigned threads = 0);

enum class McEstimator {
  kNaive,
  kCicAttR,
  kCicAtuR,
  kCicAteR,
  kIpw1AteR,
  kIpw2AteR,
  kCicAteRa,
  kCicAteNora,
  kIpw1Ate,
  kIpw2Ate,
};

std::vector<McEstimator> all_mc_estimators();
/// Row label pair (estimand, estimator), e.g. ("ATE-R", "IPW1").
std::pair<std::string, std::string> mc_labels(McEstimator e);

struct McRow {
  McEstimator estimator = McEstimator::kNaive;
  std::string estimand;
  std::string method;
  double truth = 0.0;
  double mean = 0.0;
  double bias = 0.0;
  double sd = 0.0;
  double rmse = 0.0;
  std::size_t failures = 0;
  std::size_t used = 0;
};

struct McSummary {
  SimDesign design;
  std::size_t replications = 0;
  TrueValues truth;
  std::vector<McRow> rows;

  const McRow& row(McEstimator e) const;
};

struct McOptions {
  std::size_t truth_mc_size = 1'000'000;
  unsigned threads = 0;
};

/// Throws ConfigError when replications < 2.
McSummary run_monte_carlo(const SimDesign& design, std::size_t replications,
                          const std::vector<McEstimator>& estimators, const McOptions& options = {});

/// Mean, bias, sd and rmse of `values` around `truth` (population moments).
McRow summarize_estimates(std::span<const double> values, double truth);

/// Fixed column order: estimand, estimator, true, mean, bias, sd, rmse, failures.
void write_summary_csv(std::ostream& out, const McSummary& summary);
std::string summary_to_json(const McSummary& summary, int indent = 2);
void write_summary_text(std::ostream& out, const McSummary& summary);

struct CellDistance {
  std::string cell;  // e.g. "G=1,R=0" or "R(0)=0,R(1)=1"
  std::size_t n = 0;
  double ks = 0.0;
  double pvalue = 1.0;
};

/// Two-sample KS distance between U0 and U1 within every (G, R) cell and
/// every non-empty response-type cell (R(0), R(1)). Draws units until each
/// (G, R) cell holds at least `mc_size` of them.
std::vector<CellDistance> time_invariance_check(const SimDesign& design, std::size_t mc_size);

}  // namespace attrition
