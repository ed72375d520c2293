#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "vbnn/model.hpp"
#include "vbnn/variational.hpp"

namespace vbnn {

// ---------------------------------------------------------------------------
// Step-size schedules
// ---------------------------------------------------------------------------

enum class ScheduleKind { fixed, robbins_monro };

/// Either a constant rate or rho_t = rho0 / (b (t+1)^c), t counted from 0.
struct Schedule {
  ScheduleKind kind = ScheduleKind::fixed;
  double rho = 0.001;
  double rho0 = 1.0;
  double b = 100.0;
  double c = 0.3;
  /// Require 0.5 < c <= 1 so that sum rho_t^2 < inf as well.
  bool strict_rm = false;

  static Schedule fixed(double rate) { return {ScheduleKind::fixed, rate}; }
  static Schedule robbins_monro(double rho0, double b, double c, bool strict = false) {
    return {ScheduleKind::robbins_monro, 0.0, rho0, b, c, strict};
  }

  void validate() const;
  double rate(std::size_t t) const;
};

// ---------------------------------------------------------------------------
// Training configuration and report
// ---------------------------------------------------------------------------

enum class CvMode { per_coordinate, pooled };

struct TrainConfig {
  std::size_t S = 200;
  Schedule schedule;
  bool use_control_variates = false;
  CvMode cv_mode = CvMode::per_coordinate;
  /// Fit a* on the first ceil(S/2) samples, average the rest.
  bool cv_holdout = false;
  std::size_t max_iters = 5000;
  std::size_t conv_window = 50;
  double conv_rel_tol = 1e-4;
  std::optional<double> grad_clip;
  std::uint64_t seed = 0;
  /// Half-width of the uniform jitter added to the initial means; 0 disables it.
  double init_jitter = 0.0;

  void validate() const;
};

struct TrainReport {
  std::vector<double> elbo_trace;
  std::vector<double> grad_var_trace;
  std::vector<double> rho_trace;
  std::size_t iterations_run = 0;
  bool converged = false;
  double wall_time = 0.0;
};

struct TrainResult {
  VariationalParams q;
  TrainReport report;
};

/// Thrown by step() when the gradient has a NaN or infinite entry.
class NonFiniteGradient : public std::runtime_error {
 public:
  NonFiniteGradient(std::size_t iteration, std::size_t coordinate);
  std::size_t iteration() const { return iteration_; }
  std::size_t coordinate() const { return coordinate_; }

 private:
  std::size_t iteration_;
  std::size_t coordinate_;
};

/// Training stopped early; carries the last state whose ELBO and gradient
/// were finite plus the report up to that point.
class TrainingDiverged : public std::runtime_error {
 public:
  TrainingDiverged(const std::string& what, std::size_t iteration, TrainResult last_good);
  std::size_t iteration() const { return iteration_; }
  const TrainResult& last_good() const { return last_good_; }

 private:
  std::size_t iteration_;
  TrainResult last_good_;
};

// ---------------------------------------------------------------------------
// Monte Carlo estimators
// ---------------------------------------------------------------------------

/// Per-sample quantities shared by every estimator: the weight
/// log_joint(theta[w]) - log_q(theta[w]) and the score row grad log q(theta[w])
/// laid out as [m-block | r-block].
struct SampleTerms {
  std::size_t samples = 0;
  std::size_t width = 0;  // 2K
  std::vector<double> weight;
  std::vector<double> score;

  std::span<const double> score_row(std::size_t w) const {
    return std::span(score).subspan(w * width, width);
  }
};

SampleTerms evaluate_samples(const VariationalParams& q, const Model& model,
                             const LabeledBatch& batch, const SampleMatrix& samples);

/// S x 2K row-major matrix.
struct RowMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> values;

  double operator()(std::size_t i, std::size_t j) const { return values[i * cols + j]; }
  std::vector<double> column(std::size_t j) const;
};

/// u[w] = score[w] * weight[w], v[w] = score[w].
RowMatrix control_variate_u(const SampleTerms& terms);
RowMatrix control_variate_v(const SampleTerms& terms);

double estimate_elbo(const VariationalParams& q, const Model& model, const LabeledBatch& batch,
                     const SampleMatrix& samples);

std::vector<double> estimate_gradient(const VariationalParams& q, const Model& model,
                                      const LabeledBatch& batch, const SampleMatrix& samples);

/// a*_j = cov(u_j, v_j) / var(v_j); zero where var(v_j) < 1e-20.
std::vector<double> control_variate_coefficients(const RowMatrix& u, const RowMatrix& v);
/// One shared a = sum_j cov(u_j, v_j) / sum_j var(v_j), broadcast to every coordinate.
std::vector<double> pooled_control_variate_coefficients(const RowMatrix& u, const RowMatrix& v);

std::vector<double> estimate_gradient_cv(const VariationalParams& q, const Model& model,
                                         const LabeledBatch& batch, const SampleMatrix& samples,
                                         CvMode mode = CvMode::per_coordinate);

/// Gradient plus the averaged per-coordinate empirical variance of the
/// per-sample contributions that were averaged to produce it.
struct GradientEstimate {
  std::vector<double> gradient;
  double mean_variance = 0.0;
};

GradientEstimate gradient_from_terms(const SampleTerms& terms);
/// CV gradient; coefficients override the fitted a* when given.
GradientEstimate cv_gradient_from_terms(const SampleTerms& terms, CvMode mode, bool holdout,
                                        const std::vector<double>* coefficients = nullptr);

// ---------------------------------------------------------------------------
// Ascent
// ---------------------------------------------------------------------------

/// V <- V + rho_t * grad in (m, r) coordinates.
VariationalParams step(const VariationalParams& q, std::span<const double> grad, std::size_t t,
                       const Schedule& schedule);

/// Moving-average stopping rule on the ELBO trace.
bool elbo_converged(std::span<const double> elbo_trace, std::size_t window, double rel_tol);

/// Initial q: the prior, plus optional seeded jitter on the means.
VariationalParams initial_variational(const Model& model, const TrainConfig& config);

TrainResult train(const LabeledBatch& batch, const Model& model, const TrainConfig& config);
TrainResult train(const LabeledBatch& batch, const Model& model, const TrainConfig& config,
                  VariationalParams init);

}  // namespace vbnn
