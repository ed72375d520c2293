#include "vbnn/variational.hpp"

#include <algorithm>
#include <cmath>

#include "vbnn/numeric.hpp"
#include "vbnn/parallel.hpp"
#include "vbnn/rng.hpp"

namespace vbnn {
namespace {

constexpr double kLog2Pi = 1.8378770664093454836;

void check_lengths(const VariationalParams& q, std::span<const double> theta) {
  if (theta.size() != q.size()) throw ShapeError("theta length does not match variational dimension");
}

double gradient_scale(double r) { return std::max(softplus(r), kMinScale); }

double score_m(double theta, double m, double s) { return (theta - m) / (s * s); }

double score_s(double theta, double m, double s) {
  const double d = theta - m;
  return d * d / (s * s * s) - 1.0 / s;
}

}  // namespace

VariationalParams::VariationalParams(std::vector<double> means, std::vector<double> raw_scales)
    : m(std::move(means)), r(std::move(raw_scales)) {
  if (m.size() != r.size()) throw ShapeError("m and r must have equal length");
}

VariationalParams VariationalParams::from_prior(const PriorConfig& prior) {
  prior.validate(prior.mu.size());
  std::vector<double> r(prior.zeta.size());
  std::transform(prior.zeta.begin(), prior.zeta.end(), r.begin(), softplus_inverse);
  return {prior.mu, std::move(r)};
}

double VariationalParams::scale(std::size_t j) const { return softplus(r[j]); }

std::vector<double> VariationalParams::scales() const {
  std::vector<double> s(r.size());
  std::transform(r.begin(), r.end(), s.begin(), softplus);
  return s;
}

SampleMatrix sample(const VariationalParams& q, std::size_t count, SampleKey key) {
  const std::size_t dim = q.size();
  SampleMatrix out{count, dim, std::vector<double>(count * dim), key};
  const std::vector<double> s = q.scales();
  parallel_for(count, [&](std::size_t w) {
    Rng rng(key.seed, key.stream, w);
    double* row = out.values.data() + w * dim;
    for (std::size_t j = 0; j < dim; ++j) row[j] = q.m[j] + s[j] * rng.normal();
  });
  return out;
}

double log_q(const VariationalParams& q, std::span<const double> theta) {
  check_lengths(q, theta);
  double total = 0.0;
  for (std::size_t j = 0; j < theta.size(); ++j) {
    const double s = q.scale(j);
    const double z = (theta[j] - q.m[j]) / s;
    total += -0.5 * kLog2Pi - std::log(s) - 0.5 * z * z;
  }
  return total;
}

std::vector<double> grad_log_q_m(const VariationalParams& q, std::span<const double> theta) {
  check_lengths(q, theta);
  std::vector<double> g(theta.size());
  for (std::size_t j = 0; j < g.size(); ++j) g[j] = score_m(theta[j], q.m[j], gradient_scale(q.r[j]));
  return g;
}

std::vector<double> grad_log_q_s(const VariationalParams& q, std::span<const double> theta) {
  check_lengths(q, theta);
  std::vector<double> g(theta.size());
  for (std::size_t j = 0; j < g.size(); ++j) g[j] = score_s(theta[j], q.m[j], gradient_scale(q.r[j]));
  return g;
}

// ds/dr = sigma(r)
std::vector<double> grad_log_q_r(const VariationalParams& q, std::span<const double> theta) {
  check_lengths(q, theta);
  std::vector<double> g(theta.size());
  for (std::size_t j = 0; j < g.size(); ++j) {
    g[j] = sigmoid(q.r[j]) * score_s(theta[j], q.m[j], gradient_scale(q.r[j]));
  }
  return g;
}

void score_into(const VariationalParams& q, std::span<const double> theta, std::span<double> out) {
  check_lengths(q, theta);
  const std::size_t dim = q.size();
  if (out.size() != 2 * dim) throw ShapeError("score buffer must have length 2K");
  for (std::size_t j = 0; j < dim; ++j) {
    const double s = gradient_scale(q.r[j]);
    out[j] = score_m(theta[j], q.m[j], s);
    out[dim + j] = sigmoid(q.r[j]) * score_s(theta[j], q.m[j], s);
  }
}

}  // namespace vbnn
