#include "vbnn/bbvi.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <string>

#include "vbnn/numeric.hpp"
#include "vbnn/parallel.hpp"
#include "vbnn/rng.hpp"

namespace vbnn {
namespace {

constexpr double kDegenerateVariance = 1e-20;

struct Moments {
  double cov = 0.0;
  double var = 0.0;
};

// Sample covariance of (u_j, v_j) and variance of v_j over rows [begin, end).
Moments column_moments(const RowMatrix& u, const RowMatrix& v, std::size_t j, std::size_t begin,
                       std::size_t end) {
  const std::size_t count = end - begin;
  if (count < 2) return {};
  std::vector<double> uc(count), vc(count);
  for (std::size_t w = begin; w < end; ++w) {
    uc[w - begin] = u(w, j);
    vc[w - begin] = v(w, j);
  }
  const double u_mean = pairwise_mean(uc);
  const double v_mean = pairwise_mean(vc);
  std::vector<double> cross(count), sq(count);
  for (std::size_t w = 0; w < count; ++w) {
    const double dv = vc[w] - v_mean;
    cross[w] = (uc[w] - u_mean) * dv;
    sq[w] = dv * dv;
  }
  const double denom = static_cast<double>(count - 1);
  return {pairwise_sum(cross) / denom, pairwise_sum(sq) / denom};
}

std::vector<double> coefficients_over(const RowMatrix& u, const RowMatrix& v, std::size_t begin,
                                      std::size_t end, CvMode mode) {
  if (u.rows != v.rows || u.cols != v.cols) throw ShapeError("u and v must have the same shape");
  std::vector<Moments> moments(u.cols);
  for (std::size_t j = 0; j < u.cols; ++j) moments[j] = column_moments(u, v, j, begin, end);
  std::vector<double> a(u.cols, 0.0);
  if (mode == CvMode::per_coordinate) {
    for (std::size_t j = 0; j < u.cols; ++j) {
      if (moments[j].var >= kDegenerateVariance) a[j] = moments[j].cov / moments[j].var;
    }
  } else {
    std::vector<double> covs(u.cols), vars(u.cols);
    for (std::size_t j = 0; j < u.cols; ++j) {
      covs[j] = moments[j].cov;
      vars[j] = moments[j].var;
    }
    const double var = pairwise_sum(vars);
    if (var >= kDegenerateVariance) std::fill(a.begin(), a.end(), pairwise_sum(covs) / var);
  }
  return a;
}

// Means and averaged variance of contribution columns over rows [begin, end).
GradientEstimate summarize(const RowMatrix& contrib, std::size_t begin, std::size_t end) {
  GradientEstimate out;
  out.gradient.resize(contrib.cols);
  std::vector<double> variances(contrib.cols);
  std::vector<double> column(end - begin);
  for (std::size_t j = 0; j < contrib.cols; ++j) {
    for (std::size_t w = begin; w < end; ++w) column[w - begin] = contrib(w, j);
    out.gradient[j] = pairwise_mean(column);
    variances[j] = sample_variance(column);
  }
  out.mean_variance = pairwise_mean(variances);
  return out;
}

double moving_average(std::span<const double> trace, std::size_t end, std::size_t window) {
  const std::size_t begin = end + 1 >= window ? end + 1 - window : 0;
  return pairwise_mean(trace.subspan(begin, end + 1 - begin));
}

}  // namespace

// ---------------------------------------------------------------------------

void Schedule::validate() const {
  if (kind == ScheduleKind::fixed) {
    if (!(rho > 0.0) || !std::isfinite(rho)) throw ConfigError("fixed schedule requires rho > 0");
    return;
  }
  if (!(rho0 > 0.0) || !(b > 0.0) || !(c > 0.0)) {
    throw ConfigError("robbins_monro schedule requires rho0 > 0, b > 0 and c > 0");
  }
  if (strict_rm && !(c > 0.5 && c <= 1.0)) {
    throw ConfigError("strict Robbins-Monro schedule requires 0.5 < c <= 1");
  }
}

double Schedule::rate(std::size_t t) const {
  if (kind == ScheduleKind::fixed) return rho;
  return rho0 / (b * std::pow(static_cast<double>(t + 1), c));
}

void TrainConfig::validate() const {
  schedule.validate();
  if (S < 1) throw ConfigError("S must be at least 1");
  if (use_control_variates && S < 2) throw ConfigError("control variates require S ≥ 2");
  if (max_iters < 1) throw ConfigError("max_iters must be at least 1");
  if (conv_window < 1) throw ConfigError("conv_window must be at least 1");
  if (!(conv_rel_tol > 0.0)) throw ConfigError("conv_rel_tol must be positive");
  if (grad_clip && !(*grad_clip > 0.0)) throw ConfigError("grad_clip must be positive");
  if (!(init_jitter >= 0.0)) throw ConfigError("init_jitter must be non-negative");
}

NonFiniteGradient::NonFiniteGradient(std::size_t iteration, std::size_t coordinate)
    : std::runtime_error("non-finite gradient at iteration " + std::to_string(iteration) +
                         " (coordinate " + std::to_string(coordinate) + ")"),
      iteration_(iteration),
      coordinate_(coordinate) {}

TrainingDiverged::TrainingDiverged(const std::string& what, std::size_t iteration,
                                   TrainResult last_good)
    : std::runtime_error(what), iteration_(iteration), last_good_(std::move(last_good)) {}

// ---------------------------------------------------------------------------

std::vector<double> RowMatrix::column(std::size_t j) const {
  std::vector<double> out(rows);
  for (std::size_t i = 0; i < rows; ++i) out[i] = values[i * cols + j];
  return out;
}

SampleTerms evaluate_samples(const VariationalParams& q, const Model& model,
                             const LabeledBatch& batch, const SampleMatrix& samples) {
  if (samples.cols != q.size() || q.size() != model.shape.param_count()) {
    throw ShapeError("sample width, variational dimension and parameter count must agree");
  }
  SampleTerms terms;
  terms.samples = samples.rows;
  terms.width = 2 * q.size();
  terms.weight.resize(samples.rows);
  terms.score.resize(samples.rows * terms.width);
  parallel_for(samples.rows, [&](std::size_t w) {
    const auto theta = samples.row(w);
    terms.weight[w] = log_joint(model, theta, batch) - log_q(q, theta);
    score_into(q, theta, std::span(terms.score).subspan(w * terms.width, terms.width));
  });
  return terms;
}

RowMatrix control_variate_u(const SampleTerms& terms) {
  RowMatrix u{terms.samples, terms.width, terms.score};
  for (std::size_t w = 0; w < terms.samples; ++w) {
    for (std::size_t j = 0; j < terms.width; ++j) u.values[w * terms.width + j] *= terms.weight[w];
  }
  return u;
}

RowMatrix control_variate_v(const SampleTerms& terms) {
  return {terms.samples, terms.width, terms.score};
}

double estimate_elbo(const VariationalParams& q, const Model& model, const LabeledBatch& batch,
                     const SampleMatrix& samples) {
  return pairwise_mean(evaluate_samples(q, model, batch, samples).weight);
}

GradientEstimate gradient_from_terms(const SampleTerms& terms) {
  return summarize(control_variate_u(terms), 0, terms.samples);
}

std::vector<double> estimate_gradient(const VariationalParams& q, const Model& model,
                                      const LabeledBatch& batch, const SampleMatrix& samples) {
  return gradient_from_terms(evaluate_samples(q, model, batch, samples)).gradient;
}

std::vector<double> control_variate_coefficients(const RowMatrix& u, const RowMatrix& v) {
  return coefficients_over(u, v, 0, u.rows, CvMode::per_coordinate);
}

std::vector<double> pooled_control_variate_coefficients(const RowMatrix& u, const RowMatrix& v) {
  return coefficients_over(u, v, 0, u.rows, CvMode::pooled);
}

GradientEstimate cv_gradient_from_terms(const SampleTerms& terms, CvMode mode, bool holdout,
                                        const std::vector<double>* coefficients) {
  const RowMatrix u = control_variate_u(terms);
  const RowMatrix& v_scores = control_variate_v(terms);
  const std::size_t fit_end = holdout ? (terms.samples + 1) / 2 : terms.samples;
  const std::size_t avg_begin = holdout ? fit_end : 0;
  const std::vector<double> a =
      coefficients ? *coefficients : coefficients_over(u, v_scores, 0, fit_end, mode);
  if (a.size() != terms.width) throw ShapeError("control variate coefficient length must be 2K");
  RowMatrix contrib = u;
  for (std::size_t w = 0; w < terms.samples; ++w) {
    for (std::size_t j = 0; j < terms.width; ++j) {
      contrib.values[w * terms.width + j] -= a[j] * v_scores(w, j);
    }
  }
  return summarize(contrib, avg_begin, terms.samples);
}

std::vector<double> estimate_gradient_cv(const VariationalParams& q, const Model& model,
                                         const LabeledBatch& batch, const SampleMatrix& samples,
                                         CvMode mode) {
  if (samples.rows < 2) throw ConfigError("control variates require S ≥ 2");
  return cv_gradient_from_terms(evaluate_samples(q, model, batch, samples), mode, false).gradient;
}

// ---------------------------------------------------------------------------

VariationalParams step(const VariationalParams& q, std::span<const double> grad, std::size_t t,
                       const Schedule& schedule) {
  const std::size_t dim = q.size();
  if (grad.size() != 2 * dim) throw ShapeError("gradient length must be 2K");
  for (std::size_t j = 0; j < grad.size(); ++j) {
    if (!std::isfinite(grad[j])) throw NonFiniteGradient(t, j);
  }
  const double rho = schedule.rate(t);
  VariationalParams next = q;
  for (std::size_t j = 0; j < dim; ++j) {
    next.m[j] += rho * grad[j];
    next.r[j] += rho * grad[dim + j];
  }
  return next;
}

// avg_t = mean of the last `window` estimates (fewer near the start); the
// rule fires once |avg_t - avg_{t-window}| / (|avg_{t-window}| + 1e-12) < tol.
bool elbo_converged(std::span<const double> elbo_trace, std::size_t window, double rel_tol) {
  if (window == 0 || elbo_trace.size() <= window) return false;
  const std::size_t t = elbo_trace.size() - 1;
  const double current = moving_average(elbo_trace, t, window);
  const double previous = moving_average(elbo_trace, t - window, window);
  return std::abs(current - previous) / (std::abs(previous) + 1e-12) < rel_tol;
}

VariationalParams initial_variational(const Model& model, const TrainConfig& config) {
  VariationalParams q = VariationalParams::from_prior(model.prior);
  if (config.init_jitter > 0.0) {
    Rng rng(config.seed, streams::kInit, 0);
    for (double& m : q.m) m += rng.uniform(-config.init_jitter, config.init_jitter);
  }
  return q;
}

TrainResult train(const LabeledBatch& batch, const Model& model, const TrainConfig& config) {
  return train(batch, model, config, initial_variational(model, config));
}

TrainResult train(const LabeledBatch& batch, const Model& model, const TrainConfig& config,
                  VariationalParams init) {
  config.validate();
  batch.validate();
  model.prior.validate(model.shape.param_count());
  if (init.size() != model.shape.param_count()) {
    throw ShapeError("initial variational parameters do not match the network shape");
  }
  if (batch.rows() > 0 && batch.p != model.shape.p) {
    throw ShapeError("batch width does not match network inputs");
  }

  const auto start = std::chrono::steady_clock::now();
  TrainResult result{std::move(init), {}};
  TrainReport& report = result.report;
  auto elapsed = [&] {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  };

  for (std::size_t t = 0; t < config.max_iters; ++t) {
    const SampleMatrix samples = sample(result.q, config.S, {config.seed, t});
    const SampleTerms terms = evaluate_samples(result.q, model, batch, samples);
    const double elbo = pairwise_mean(terms.weight);
    if (!std::isfinite(elbo)) {
      report.wall_time = elapsed();
      throw TrainingDiverged("ELBO estimate is not finite at iteration " + std::to_string(t), t,
                             result);
    }
    GradientEstimate estimate =
        config.use_control_variates
            ? cv_gradient_from_terms(terms, config.cv_mode, config.cv_holdout)
            : gradient_from_terms(terms);
    if (config.grad_clip) {
      const double clip = *config.grad_clip;
      for (double& g : estimate.gradient) g = std::clamp(g, -clip, clip);
    }
    VariationalParams next;
    try {
      next = step(result.q, estimate.gradient, t, config.schedule);
    } catch (const NonFiniteGradient& e) {
      report.wall_time = elapsed();
      throw TrainingDiverged(e.what(), t, result);
    }
    report.elbo_trace.push_back(elbo);
    report.grad_var_trace.push_back(estimate.mean_variance);
    report.rho_trace.push_back(config.schedule.rate(t));
    report.iterations_run = t + 1;
    result.q = std::move(next);
    if (elbo_converged(report.elbo_trace, config.conv_window, config.conv_rel_tol)) {
      report.converged = true;
      break;
    }
  }
  report.wall_time = elapsed();
  return result;
}

}  // namespace vbnn
