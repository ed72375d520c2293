#include "vbnn/metrics.hpp"

#include <algorithm>
#include <cmath>

#include "vbnn/numeric.hpp"
#include "vbnn/parallel.hpp"
#include "vbnn/rng.hpp"

namespace vbnn {
namespace {

Estimate mc_mean(std::span<const double> values) {
  const double n = static_cast<double>(values.size());
  return {pairwise_mean(values), std::sqrt(sample_variance(values) / n)};
}

Estimate sqrt_estimate(const Estimate& squared) {
  const double value = std::sqrt(std::max(squared.value, 0.0));
  return {value, value > 0.0 ? squared.stderr_ / (2.0 * value) : 0.0};
}

std::vector<double> evaluate_field(const LogitField& field, std::span<const double> points) {
  const std::size_t n = points.size() / field.dim;
  std::vector<double> out(n);
  parallel_for(n, [&](std::size_t i) { out[i] = field(points.subspan(i * field.dim, field.dim)); });
  return out;
}

void check_dims(const LogitField& a, const LogitField& b) {
  if (a.dim != b.dim) throw ShapeError("fields must share the same input dimension");
}

template <typename Fn>
std::vector<double> pointwise(std::span<const double> a, std::span<const double> b, Fn fn) {
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = fn(a[i], b[i]);
  return out;
}

// Excess risk of deciding `label` at x over the Bayes decision.
double excess_risk(double eta0, int label) {
  const int bayes = classify_probability(sigmoid(eta0));
  if (label == bayes) return 0.0;
  return std::abs(sigmoid(eta0) - sigmoid(-eta0));
}

}  // namespace

// ---------------------------------------------------------------------------

TrueFunction::TrueFunction(Form form) : form_(std::move(form)) {
  if (const auto* lin = std::get_if<Linear>(&form_); lin && lin->a.empty()) {
    throw ShapeError("linear truth needs at least one coefficient");
  }
  if (const auto* c = std::get_if<Constant>(&form_); c && c->p < 1) {
    throw ShapeError("constant truth needs p >= 1");
  }
}

NetworkParams TrueFunction::reference_network() {
  NetworkParams theta(NetworkShape(2, 3));
  theta.beta0() = -0.5;
  theta.beta(0) = 3.0;
  theta.beta(1) = -2.5;
  theta.beta(2) = 2.0;
  theta.gamma0(0) = -2.0;
  theta.gamma0(1) = 1.0;
  theta.gamma0(2) = -4.0;
  theta.gamma(0, 0) = 4.0;
  theta.gamma(0, 1) = 0.5;
  theta.gamma(1, 0) = -1.0;
  theta.gamma(1, 1) = 3.0;
  theta.gamma(2, 0) = 3.0;
  theta.gamma(2, 1) = 3.0;
  return theta;
}

TrueFunction TrueFunction::reference() { return network(reference_network()); }

std::size_t TrueFunction::dim() const {
  struct {
    std::size_t operator()(const NetworkParams& t) const { return t.shape().p; }
    std::size_t operator()(const Constant& c) const { return c.p; }
    std::size_t operator()(const Linear& l) const { return l.a.size(); }
  } visitor;
  return std::visit(visitor, form_);
}

double TrueFunction::eta(std::span<const double> x) const {
  if (x.size() != dim()) throw ShapeError("truth evaluated at a point of the wrong dimension");
  struct {
    std::span<const double> x;
    double operator()(const NetworkParams& t) const { return forward_score(t, x); }
    double operator()(const Constant& c) const { return c.value; }
    double operator()(const Linear& l) const {
      double v = l.b;
      for (std::size_t i = 0; i < x.size(); ++i) v += l.a[i] * x[i];
      return v;
    }
  } visitor{x};
  return std::visit(visitor, form_);
}

LogitField TrueFunction::field() const {
  return {dim(), [self = *this](std::span<const double> x) { return self.eta(x); }};
}

void IntegrationConfig::validate() const {
  if (n_mc < 1) throw ConfigError("n_mc must be at least 1");
}

std::vector<double> integration_points(std::size_t p, const IntegrationConfig& cfg) {
  cfg.validate();
  std::vector<double> points(cfg.n_mc * p);
  parallel_for(cfg.n_mc, [&](std::size_t i) {
    Rng rng(cfg.seed, streams::kIntegration, i);
    for (std::size_t d = 0; d < p; ++d) points[i * p + d] = rng.uniform();
  });
  return points;
}

double hellinger_integrand(double eta_a, double eta_b) {
  const double dp = std::sqrt(sigmoid(eta_a)) - std::sqrt(sigmoid(eta_b));
  const double dq = std::sqrt(sigmoid(-eta_a)) - std::sqrt(sigmoid(-eta_b));
  return 0.5 * (dp * dp + dq * dq);
}

double kl_integrand(double eta_a, double eta_b) {
  if (eta_a == eta_b) return 0.0;
  const double pa = sigmoid(eta_a);
  const double qa = sigmoid(-eta_a);
  return pa * (log_sigmoid(eta_a) - log_sigmoid(eta_b)) +
         qa * (log_sigmoid(-eta_a) - log_sigmoid(-eta_b));
}

Estimate hellinger_squared(const LogitField& a, const LogitField& b, const IntegrationConfig& cfg) {
  check_dims(a, b);
  const auto points = integration_points(a.dim, cfg);
  return mc_mean(pointwise(evaluate_field(a, points), evaluate_field(b, points), hellinger_integrand));
}

Estimate hellinger_distance(const LogitField& a, const LogitField& b, const IntegrationConfig& cfg) {
  return sqrt_estimate(hellinger_squared(a, b, cfg));
}

Estimate kl_distance(const LogitField& a, const LogitField& b, const IntegrationConfig& cfg) {
  check_dims(a, b);
  const auto points = integration_points(a.dim, cfg);
  return mc_mean(pointwise(evaluate_field(a, points), evaluate_field(b, points), kl_integrand));
}

Estimate bayes_risk(const TrueFunction& truth, const IntegrationConfig& cfg) {
  const auto points = integration_points(truth.dim(), cfg);
  std::vector<double> risk = evaluate_field(truth.field(), points);
  for (double& v : risk) v = std::min(sigmoid(v), sigmoid(-v));
  return mc_mean(risk);
}

LogitField predictive_field(const VariationalClassifier& classifier) {
  return {classifier.shape().p,
          [&classifier](std::span<const double> x) { return classifier.logit(x); }};
}

Diagnostics diagnose(const VariationalClassifier& classifier, const TrueFunction& truth,
                     const IntegrationConfig& cfg) {
  if (truth.dim() != classifier.shape().p) {
    throw ShapeError("truth and model disagree on the input dimension");
  }
  const auto points = integration_points(truth.dim(), cfg);
  const std::vector<double> eta0 = evaluate_field(truth.field(), points);
  const std::vector<double> prob = classifier.probabilities(points, truth.dim());
  const double eps = classifier.config().prob_clamp_eps;
  std::vector<double> eta_hat(prob.size());
  for (std::size_t i = 0; i < prob.size(); ++i) eta_hat[i] = logit(clamp_probability(prob[i], eps));

  Diagnostics out;
  out.n_mc = cfg.n_mc;
  out.seed = cfg.seed;
  out.hellinger = sqrt_estimate(mc_mean(pointwise(eta0, eta_hat, hellinger_integrand)));
  out.kl = mc_mean(pointwise(eta0, eta_hat, kl_integrand));
  std::vector<double> risk(eta0.size()), gap(eta0.size()), bound(eta0.size());
  for (std::size_t i = 0; i < eta0.size(); ++i) {
    risk[i] = std::min(sigmoid(eta0[i]), sigmoid(-eta0[i]));
    gap[i] = excess_risk(eta0[i], classify_probability(prob[i]));
    bound[i] = 2.0 * std::abs(sigmoid(eta0[i]) - prob[i]);
  }
  out.bayes_risk = mc_mean(risk);
  out.risk = {mc_mean(gap), mc_mean(bound)};
  return out;
}

RiskGap risk_gap(const VariationalClassifier& classifier, const TrueFunction& truth,
                 const IntegrationConfig& cfg) {
  return diagnose(classifier, truth, cfg).risk;
}

RiskGap risk_gap(const NetworkShape& shape, const VariationalParams& q, const TrueFunction& truth,
                 const PredictiveConfig& pred_cfg, const IntegrationConfig& cfg) {
  return risk_gap(VariationalClassifier(shape, q, pred_cfg), truth, cfg);
}

std::vector<VarianceProfileRow> gradient_variance_profile(const TrainReport& report,
                                                          std::size_t window) {
  const auto& var = report.grad_var_trace;
  const auto& elbo = report.elbo_trace;
  if (var.empty()) return {};
  if (window == 0) window = 1;
  if (var.size() < window) {
    return {{var.size() - 1, pairwise_mean(var), pairwise_mean(elbo)}};
  }
  std::vector<VarianceProfileRow> rows(var.size());
  for (std::size_t t = 0; t < var.size(); ++t) {
    const std::size_t begin = t + 1 >= window ? t + 1 - window : 0;
    const std::size_t len = t + 1 - begin;
    rows[t] = {t, pairwise_mean(std::span(var).subspan(begin, len)),
               pairwise_mean(std::span(elbo).subspan(begin, len))};
  }
  return rows;
}

}  // namespace vbnn
