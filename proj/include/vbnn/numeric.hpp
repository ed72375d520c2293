#pragma once

#include <cmath>
#include <cstddef>
#include <span>

namespace vbnn {

// log(1 + e^z) without overflow for large |z|.
inline double softplus(double z) {
  return std::max(z, 0.0) + std::log1p(std::exp(-std::abs(z)));
}

inline double sigmoid(double z) {
  if (z >= 0.0) {
    return 1.0 / (1.0 + std::exp(-z));
  }
  const double e = std::exp(z);
  return e / (1.0 + e);
}

// log sigma(z) = -softplus(-z)
inline double log_sigmoid(double z) { return -softplus(-z); }

// Inverse of softplus for s > 0: log(e^s - 1).
inline double softplus_inverse(double s) { return s + std::log(-std::expm1(-s)); }

inline double logit(double prob) { return std::log(prob) - std::log1p(-prob); }

/// Pairwise (tree) summation in a fixed order that depends only on the
/// length of the input, never on how the values were produced.
double pairwise_sum(std::span<const double> values);

inline double pairwise_mean(std::span<const double> values) {
  return values.empty() ? 0.0 : pairwise_sum(values) / static_cast<double>(values.size());
}

/// Unbiased sample variance (denominator n - 1); zero for fewer than two values.
double sample_variance(std::span<const double> values);

}  // namespace vbnn
