#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "vbnn/model.hpp"
#include "vbnn/variational.hpp"

namespace vbnn {

struct PredictiveConfig {
  std::size_t M = 1000;
  std::uint64_t seed = 0;
  double prob_clamp_eps = 1e-12;

  void validate() const;
};

/// Plug-in classifier built from M draws of q. The draws are taken once per
/// (q, seed), so every input is scored against the same posterior ensemble.
class VariationalClassifier {
 public:
  VariationalClassifier(NetworkShape shape, const VariationalParams& q, PredictiveConfig config);

  /// Mean over the ensemble of sigma(eta_theta(x)).
  double probability(std::span<const double> x) const;
  /// sigma^{-1} of the probability after clamping into [eps, 1 - eps].
  double logit(std::span<const double> x) const;
  /// 1 iff probability >= 1/2.
  int classify(std::span<const double> x) const;

  std::vector<double> probabilities(const LabeledBatch& batch) const;
  std::vector<double> probabilities(std::span<const double> rows, std::size_t width) const;
  double accuracy(const LabeledBatch& batch) const;

  const NetworkShape& shape() const { return shape_; }
  const SampleMatrix& ensemble() const { return ensemble_; }
  const PredictiveConfig& config() const { return config_; }

 private:
  NetworkShape shape_;
  PredictiveConfig config_;
  SampleMatrix ensemble_;
};

double clamp_probability(double prob, double eps);
int classify_probability(double prob);

double predictive_probability(const NetworkShape& shape, const VariationalParams& q,
                              std::span<const double> x, const PredictiveConfig& cfg);
double predictive_logit(const NetworkShape& shape, const VariationalParams& q,
                        std::span<const double> x, const PredictiveConfig& cfg);
int classify(const NetworkShape& shape, const VariationalParams& q, std::span<const double> x,
             const PredictiveConfig& cfg);
double test_accuracy(const NetworkShape& shape, const VariationalParams& q,
                     const LabeledBatch& batch, const PredictiveConfig& cfg);

}  // namespace vbnn
