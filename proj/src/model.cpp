#include "vbnn/model.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include "vbnn/numeric.hpp"

namespace vbnn {

NetworkShape::NetworkShape(std::size_t inputs, std::size_t hidden) : p(inputs), k(hidden) {
  if (p < 1 || k < 1) {
    throw ShapeError("network shape requires p >= 1 and k >= 1");
  }
}

NetworkParams::NetworkParams(NetworkShape shape)
    : shape_(shape), flat_(shape.param_count(), 0.0) {}

NetworkParams::NetworkParams(NetworkShape shape, std::vector<double> flat)
    : shape_(shape), flat_(std::move(flat)) {
  if (flat_.size() != shape_.param_count()) {
    throw ShapeError("flat parameter vector has length " + std::to_string(flat_.size()) +
                     ", expected " + std::to_string(shape_.param_count()));
  }
}

NetworkParams NetworkParams::unflatten(NetworkShape shape, std::span<const double> flat) {
  return NetworkParams(shape, std::vector<double>(flat.begin(), flat.end()));
}

PriorConfig PriorConfig::isotropic(std::size_t count, double mean, double sd) {
  PriorConfig prior{std::vector<double>(count, mean), std::vector<double>(count, sd)};
  prior.validate(count);
  return prior;
}

void PriorConfig::validate(std::size_t count) const {
  if (mu.size() != count || zeta.size() != count) {
    throw ShapeError("prior length does not match parameter count " + std::to_string(count));
  }
  for (double z : zeta) {
    if (!(z > 0.0) || !std::isfinite(z)) throw ConfigError("prior standard deviations must be positive");
  }
}

LabeledBatch::LabeledBatch(std::size_t width, std::vector<double> features,
                           std::vector<std::uint8_t> labels)
    : p(width), x(std::move(features)), y(std::move(labels)) {
  validate();
}

void LabeledBatch::validate() const {
  if (x.size() != y.size() * p) {
    throw ShapeError("feature matrix size " + std::to_string(x.size()) + " does not match " +
                     std::to_string(y.size()) + " rows of width " + std::to_string(p));
  }
  for (auto label : y) {
    if (label > 1) throw DataError("labels must be 0 or 1");
  }
}

double forward_score(const NetworkShape& shape, std::span<const double> theta,
                     std::span<const double> x) {
  if (theta.size() != shape.param_count() || x.size() != shape.p) {
    throw ShapeError("forward_score: dimension mismatch");
  }
  const std::size_t k = shape.k;
  const std::size_t p = shape.p;
  const double* beta = theta.data() + 1;
  const double* gamma0 = theta.data() + 1 + k;
  const double* gamma = theta.data() + 1 + 2 * k;
  double score = theta[0];
  for (std::size_t j = 0; j < k; ++j) {
    double activation = gamma0[j];
    const double* row = gamma + j * p;
    for (std::size_t i = 0; i < p; ++i) activation += row[i] * x[i];
    score += beta[j] * sigmoid(activation);
  }
  return score;
}

double forward_score(const NetworkParams& theta, std::span<const double> x) {
  return forward_score(theta.shape(), theta.flat(), x);
}

double log_likelihood(const NetworkShape& shape, std::span<const double> theta,
                      const LabeledBatch& batch) {
  if (batch.rows() > 0 && batch.p != shape.p) {
    throw ShapeError("log_likelihood: batch width does not match network inputs");
  }
  double total = 0.0;
  for (std::size_t i = 0; i < batch.rows(); ++i) {
    const double eta = forward_score(shape, theta, batch.row(i));
    // y*eta - log(1+e^eta), written as log sigma(+-eta) to keep the tail digits
    total -= softplus(batch.y[i] ? -eta : eta);
  }
  return total;
}

double log_likelihood(const NetworkParams& theta, const LabeledBatch& batch) {
  return log_likelihood(theta.shape(), theta.flat(), batch);
}

double log_prior(std::span<const double> theta, const PriorConfig& prior) {
  if (theta.size() != prior.mu.size() || theta.size() != prior.zeta.size()) {
    throw ShapeError("log_prior: length mismatch");
  }
  constexpr double kLog2Pi = 1.8378770664093454836;
  double total = 0.0;
  for (std::size_t j = 0; j < theta.size(); ++j) {
    const double z = (theta[j] - prior.mu[j]) / prior.zeta[j];
    total += -0.5 * kLog2Pi - std::log(prior.zeta[j]) - 0.5 * z * z;
  }
  return total;
}

double log_joint(const Model& model, std::span<const double> theta, const LabeledBatch& batch) {
  return log_likelihood(model.shape, theta, batch) + log_prior(theta, model.prior);
}

}  // namespace vbnn
