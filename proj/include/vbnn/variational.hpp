#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "vbnn/model.hpp"

namespace vbnn {

/// Lower bound applied to s inside gradient evaluation only; the stored raw
/// scale r is never modified by it.
inline constexpr double kMinScale = 1e-6;

/// Mean-field Gaussian q(theta) = prod_j N(m_j, s_j^2) with s_j = softplus(r_j).
struct VariationalParams {
  std::vector<double> m;
  std::vector<double> r;

  VariationalParams() = default;
  VariationalParams(std::vector<double> means, std::vector<double> raw_scales);

  /// q equal to the prior: m = mu, r = softplus^{-1}(zeta).
  static VariationalParams from_prior(const PriorConfig& prior);

  std::size_t size() const { return m.size(); }
  double scale(std::size_t j) const;
  std::vector<double> scales() const;

  friend bool operator==(const VariationalParams&, const VariationalParams&) = default;
};

/// Identifies the random stream that produced a sample matrix. Row w is drawn
/// from stream_key(seed, stream, w) so rows can be generated in any order.
struct SampleKey {
  std::uint64_t seed = 0;
  std::uint64_t stream = 0;
};

struct SampleMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> values;
  SampleKey key;

  std::span<const double> row(std::size_t w) const {
    return std::span(values).subspan(w * cols, cols);
  }
};

/// theta[w]_j = m_j + s_j z, z ~ N(0, 1).
SampleMatrix sample(const VariationalParams& q, std::size_t count, SampleKey key);

double log_q(const VariationalParams& q, std::span<const double> theta);

std::vector<double> grad_log_q_m(const VariationalParams& q, std::span<const double> theta);
std::vector<double> grad_log_q_s(const VariationalParams& q, std::span<const double> theta);
std::vector<double> grad_log_q_r(const VariationalParams& q, std::span<const double> theta);

/// Writes [grad_m | grad_r] (length 2K) for one sample into out.
void score_into(const VariationalParams& q, std::span<const double> theta, std::span<double> out);

}  // namespace vbnn
