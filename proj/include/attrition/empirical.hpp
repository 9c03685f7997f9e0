#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace attrition {

/// A real number or -infinity, kept as a tagged value so that callers must
/// handle the marker explicitly.
class LowerExtendedReal {
 public:
  static LowerExtendedReal negative_infinity() { return LowerExtendedReal(); }
  static LowerExtendedReal finite(double v) { return LowerExtendedReal(v); }

  bool is_negative_infinity() const noexcept { return neg_inf_; }
  /// Only valid when !is_negative_infinity().
  double value() const;

  bool operator==(const LowerExtendedReal&) const = default;

 private:
  LowerExtendedReal() = default;
  explicit LowerExtendedReal(double v) : neg_inf_(false), value_(v) {}
  bool neg_inf_ = true;
  double value_ = 0.0;
};

/// Right-continuous step distribution of a finite sample. Ties are kept, so
/// each value carries jump 1/n per occurrence.
class EmpiricalCdf {
 public:
  /// Throws std::invalid_argument when `values` is empty or has non-finite
  /// entries.
  explicit EmpiricalCdf(std::vector<double> values);
  explicit EmpiricalCdf(std::span<const double> values)
      : EmpiricalCdf(std::vector<double>(values.begin(), values.end())) {}

  std::size_t size() const noexcept { return values_.size(); }
  const std::vector<double>& values() const noexcept { return values_; }
  double min() const noexcept { return values_.front(); }
  double max() const noexcept { return values_.back(); }

  /// #{values <= y} / n.
  double cdf(double y) const;
  /// Smallest sample value whose cdf is >= q. q = 0 gives the minimum.
  double inf_inverse(double q) const;
  /// Largest sample value whose cdf is <= q, or -infinity when none is.
  LowerExtendedReal sup_inverse(double q) const;

  /// The cdf level reached at count c, computed exactly as cdf() does.
  double level(std::size_t count) const noexcept {
    return static_cast<double>(count) / static_cast<double>(values_.size());
  }

 private:
  std::vector<double> values_;
};

/// Clamps a composed probability into [0, 1]. Values further than 1e-12
/// outside the interval throw std::domain_error.
double clamp_probability(double q);

/// target.inf_inverse(source.cdf(y)): rank-preserving map from the source
/// distribution onto the target one.
double qq_map(const EmpiricalCdf& source, const EmpiricalCdf& target, double y);

}  // namespace attrition
