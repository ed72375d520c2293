#include "vbnn/prediction.hpp"

#include <algorithm>

#include "vbnn/numeric.hpp"
#include "vbnn/parallel.hpp"
#include "vbnn/rng.hpp"

namespace vbnn {

void PredictiveConfig::validate() const {
  if (M < 1) throw ConfigError("M must be at least 1");
  if (!(prob_clamp_eps > 0.0 && prob_clamp_eps < 0.5)) {
    throw ConfigError("prob_clamp_eps must lie in (0, 0.5)");
  }
}

double clamp_probability(double prob, double eps) { return std::clamp(prob, eps, 1.0 - eps); }

// Ties go to class 1.
int classify_probability(double prob) { return prob >= 0.5 ? 1 : 0; }

VariationalClassifier::VariationalClassifier(NetworkShape shape, const VariationalParams& q,
                                             PredictiveConfig config)
    : shape_(shape), config_(config) {
  config_.validate();
  if (q.size() != shape_.param_count()) {
    throw ShapeError("variational dimension does not match the network shape");
  }
  ensemble_ = sample(q, config_.M, {config_.seed, streams::kPredictive});
}

double VariationalClassifier::probability(std::span<const double> x) const {
  if (x.size() != shape_.p) throw ShapeError("input width does not match network inputs");
  std::vector<double> probs(ensemble_.rows);
  for (std::size_t i = 0; i < ensemble_.rows; ++i) {
    probs[i] = sigmoid(forward_score(shape_, ensemble_.row(i), x));
  }
  return pairwise_mean(probs);
}

double VariationalClassifier::logit(std::span<const double> x) const {
  return vbnn::logit(clamp_probability(probability(x), config_.prob_clamp_eps));
}

int VariationalClassifier::classify(std::span<const double> x) const {
  return classify_probability(probability(x));
}

std::vector<double> VariationalClassifier::probabilities(std::span<const double> rows,
                                                         std::size_t width) const {
  if (width != shape_.p) throw ShapeError("input width does not match network inputs");
  const std::size_t n = width == 0 ? 0 : rows.size() / width;
  std::vector<double> out(n);
  parallel_for(n, [&](std::size_t i) { out[i] = probability(rows.subspan(i * width, width)); });
  return out;
}

std::vector<double> VariationalClassifier::probabilities(const LabeledBatch& batch) const {
  if (batch.rows() == 0) return {};
  return probabilities(batch.x, batch.p);
}

double VariationalClassifier::accuracy(const LabeledBatch& batch) const {
  if (batch.rows() == 0) throw DataError("accuracy of an empty batch is undefined");
  const std::vector<double> probs = probabilities(batch);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    if (classify_probability(probs[i]) == batch.y[i]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(probs.size());
}

double predictive_probability(const NetworkShape& shape, const VariationalParams& q,
                              std::span<const double> x, const PredictiveConfig& cfg) {
  return VariationalClassifier(shape, q, cfg).probability(x);
}

double predictive_logit(const NetworkShape& shape, const VariationalParams& q,
                        std::span<const double> x, const PredictiveConfig& cfg) {
  return VariationalClassifier(shape, q, cfg).logit(x);
}

int classify(const NetworkShape& shape, const VariationalParams& q, std::span<const double> x,
             const PredictiveConfig& cfg) {
  return VariationalClassifier(shape, q, cfg).classify(x);
}

double test_accuracy(const NetworkShape& shape, const VariationalParams& q,
                     const LabeledBatch& batch, const PredictiveConfig& cfg) {
  return VariationalClassifier(shape, q, cfg).accuracy(batch);
}

}  // namespace vbnn
