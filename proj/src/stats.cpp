#include "attrition/stats.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include <boost/math/distributions/normal.hpp>

namespace attrition::stats {

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

double normal_quantile(double p) {
  return boost::math::quantile(boost::math::normal_distribution<double>(), p);
}

double ks_distance(std::span<const double> a, std::span<const double> b) {
  std::vector<double> xs(a.begin(), a.end());
  std::vector<double> ys(b.begin(), b.end());
  std::sort(xs.begin(), xs.end());
  std::sort(ys.begin(), ys.end());
  const double na = static_cast<double>(xs.size());
  const double nb = static_cast<double>(ys.size());
  std::size_t i = 0;
  std::size_t j = 0;
  double d = 0.0;
  while (i < xs.size() && j < ys.size()) {
    const double v = std::min(xs[i], ys[j]);
    while (i < xs.size() && xs[i] == v) ++i;
    while (j < ys.size() && ys[j] == v) ++j;
    d = std::max(d, std::abs(static_cast<double>(i) / na - static_cast<double>(j) / nb));
  }
  return d;
}

double kolmogorov_survival(double lambda) {
  if (lambda <= 0.0) return 1.0;
  if (lambda < 0.2) return 1.0;
  double sum = 0.0;
  double sign = 1.0;
  for (int k = 1; k <= 100; ++k) {
    const double term = sign * std::exp(-2.0 * k * k * lambda * lambda);
    sum += term;
    if (std::abs(term) < 1e-16) break;
    sign = -sign;
  }
  return std::clamp(2.0 * sum, 0.0, 1.0);
}

double ks_pvalue(double distance, std::size_t n_a, std::size_t n_b) {
  if (n_a == 0 || n_b == 0) return 1.0;
  const double na = static_cast<double>(n_a);
  const double nb = static_cast<double>(n_b);
  const double en = std::sqrt(na * nb / (na + nb));
  return kolmogorov_survival((en + 0.12 + 0.11 / en) * distance);
}

}  // namespace attrition::stats
