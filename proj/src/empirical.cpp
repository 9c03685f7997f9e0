#include "attrition/empirical.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace attrition {

double LowerExtendedReal::value() const {
  if (neg_inf_) throw std::logic_error("value() of the -infinity marker");
  return value_;
}

EmpiricalCdf::EmpiricalCdf(std::vector<double> values) : values_(std::move(values)) {
  if (values_.empty()) throw std::invalid_argument("empirical cdf of an empty sample");
  for (double v : values_) {
    if (!std::isfinite(v)) throw std::invalid_argument("empirical cdf of a non-finite value");
  }
  std::sort(values_.begin(), values_.end());
}

double EmpiricalCdf::cdf(double y) const {
  const auto it = std::upper_bound(values_.begin(), values_.end(), y);
  return level(static_cast<std::size_t>(it - values_.begin()));
}

double clamp_probability(double q) {
  constexpr double kTolerance = 1e-12;
  if (!(q >= -kTolerance && q <= 1.0 + kTolerance)) {
    throw std::domain_error("probability outside [0, 1]");
  }
  return std::clamp(q, 0.0, 1.0);
}

double EmpiricalCdf::inf_inverse(double q) const {
  q = clamp_probability(q);
  // cdf(values_[j]) >= level(j + 1), with equality unless values_[j] is tied
  // with later entries; within a tie block every entry is the same value, so
  // the first j with level(j + 1) >= q names the answer.
  std::size_t lo = 0;
  std::size_t hi = values_.size() - 1;
  while (lo < hi) {
    const std::size_t mid = lo + (hi - lo) / 2;
    if (level(mid + 1) >= q) {
      hi = mid;
    } else {
      lo = mid + 1;
    }
  }
  return values_[lo];
}

LowerExtendedReal EmpiricalCdf::sup_inverse(double q) const {
  q = clamp_probability(q);
  // Largest count c in [0, n] with level(c) <= q.
  std::size_t lo = 0;
  std::size_t hi = values_.size();
  while (lo < hi) {
    const std::size_t mid = lo + (hi - lo + 1) / 2;
    if (level(mid) <= q) {
      lo = mid;
    } else {
      hi = mid - 1;
    }
  }
  if (lo == 0) return LowerExtendedReal::negative_infinity();
  const double candidate = values_[lo - 1];
  const auto upper = std::upper_bound(values_.begin(), values_.end(), candidate);
  if (level(static_cast<std::size_t>(upper - values_.begin())) <= q) {
    return LowerExtendedReal::finite(candidate);
  }
  // The tie block of `candidate` ends above level q; step back one block.
  const auto lower = std::lower_bound(values_.begin(), values_.end(), candidate);
  if (lower == values_.begin()) return LowerExtendedReal::negative_infinity();
  return LowerExtendedReal::finite(*(lower - 1));
}

double qq_map(const EmpiricalCdf& source, const EmpiricalCdf& target, double y) {
  return target.inf_inverse(source.cdf(y));
}

}  // namespace attrition
