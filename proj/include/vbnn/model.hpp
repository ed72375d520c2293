#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "vbnn/errors.hpp"

namespace vbnn {

/// Single hidden layer with p inputs and k sigmoid units.
///
/// The flat parameter vector is laid out as
///   [beta0, beta_1..beta_k, gamma_10..gamma_k0, Gamma (k x p, row-major)]
/// which gives k(p+2)+1 free weights.
struct NetworkShape {
  std::size_t p = 1;
  std::size_t k = 1;

  NetworkShape() = default;
  NetworkShape(std::size_t inputs, std::size_t hidden);

  std::size_t param_count() const { return k * (p + 2) + 1; }

  std::size_t beta0_index() const { return 0; }
  std::size_t beta_index(std::size_t j) const { return 1 + j; }
  std::size_t gamma0_index(std::size_t j) const { return 1 + k + j; }
  std::size_t gamma_index(std::size_t j, std::size_t i) const { return 1 + 2 * k + j * p + i; }

  friend bool operator==(const NetworkShape&, const NetworkShape&) = default;
};

/// Network weights stored directly in the canonical flat order, so
/// flatten/unflatten are copies.
class NetworkParams {
 public:
  explicit NetworkParams(NetworkShape shape);
  NetworkParams(NetworkShape shape, std::vector<double> flat);

  const NetworkShape& shape() const { return shape_; }

  double beta0() const { return flat_[0]; }
  double beta(std::size_t j) const { return flat_[shape_.beta_index(j)]; }
  double gamma0(std::size_t j) const { return flat_[shape_.gamma0_index(j)]; }
  double gamma(std::size_t j, std::size_t i) const { return flat_[shape_.gamma_index(j, i)]; }

  double& beta0() { return flat_[0]; }
  double& beta(std::size_t j) { return flat_[shape_.beta_index(j)]; }
  double& gamma0(std::size_t j) { return flat_[shape_.gamma0_index(j)]; }
  double& gamma(std::size_t j, std::size_t i) { return flat_[shape_.gamma_index(j, i)]; }

  std::span<const double> flat() const { return flat_; }
  std::vector<double> flatten() const { return flat_; }
  static NetworkParams unflatten(NetworkShape shape, std::span<const double> flat);

  friend bool operator==(const NetworkParams&, const NetworkParams&) = default;

 private:
  NetworkShape shape_;
  std::vector<double> flat_;
};

/// Independent normal prior per weight.
struct PriorConfig {
  std::vector<double> mu;
  std::vector<double> zeta;

  static PriorConfig isotropic(std::size_t count, double mean = 0.0, double sd = 1.0);
  void validate(std::size_t count) const;
};

/// n x p features (row-major) and binary labels.
struct LabeledBatch {
  std::size_t p = 0;
  std::vector<double> x;
  std::vector<std::uint8_t> y;

  LabeledBatch() = default;
  LabeledBatch(std::size_t width, std::vector<double> features, std::vector<std::uint8_t> labels);

  std::size_t rows() const { return y.size(); }
  std::span<const double> row(std::size_t i) const { return std::span(x).subspan(i * p, p); }
  void validate() const;
};

/// Shape and prior: everything about the target density except the data.
struct Model {
  NetworkShape shape;
  PriorConfig prior;

  static Model with_default_prior(NetworkShape shape) {
    return {shape, PriorConfig::isotropic(shape.param_count())};
  }
};

double forward_score(const NetworkShape& shape, std::span<const double> theta,
                     std::span<const double> x);
double forward_score(const NetworkParams& theta, std::span<const double> x);

/// Bernoulli-logit log-likelihood of the whole batch; always <= 0.
double log_likelihood(const NetworkShape& shape, std::span<const double> theta,
                      const LabeledBatch& batch);
double log_likelihood(const NetworkParams& theta, const LabeledBatch& batch);

double log_prior(std::span<const double> theta, const PriorConfig& prior);

/// Unnormalized log posterior: log L(theta) + log p(theta).
double log_joint(const Model& model, std::span<const double> theta, const LabeledBatch& batch);

}  // namespace vbnn
