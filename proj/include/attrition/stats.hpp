#pragma once

#include <cstddef>
#include <span>

namespace attrition::stats {

double normal_cdf(double x);
double normal_quantile(double p);

/// Two-sample Kolmogorov-Smirnov distance sup |F_a - F_b|. Inputs need not be
/// sorted.
double ks_distance(std::span<const double> a, std::span<const double> b);

/// Asymptotic p-value of the two-sample KS statistic (Kolmogorov limit law
/// with the Stephens small-sample correction).
double ks_pvalue(double distance, std::size_t n_a, std::size_t n_b);

/// Survival function of the Kolmogorov distribution, P(K > lambda).
double kolmogorov_survival(double lambda);

}  // namespace attrition::stats
