#include <cmath>
#include <random>

#include "doctest.h"
#include "toy_problem.hpp"
#include "vbnn/bbvi.hpp"
#include "vbnn/data.hpp"
#include "vbnn/metrics.hpp"
#include "vbnn/numeric.hpp"
#include "vbnn/parallel.hpp"
#include "vbnn/prediction.hpp"

using namespace vbnn;

namespace {

// Column means and standard errors of a list of gradient estimates.
struct ColumnStats {
  std::vector<double> mean, stderr_, var;
};

ColumnStats column_stats(const std::vector<std::vector<double>>& rows) {
  const std::size_t n = rows.size(), d = rows.front().size();
  ColumnStats out{std::vector<double>(d), std::vector<double>(d), std::vector<double>(d)};
  std::vector<double> col(n);
  for (std::size_t j = 0; j < d; ++j) {
    for (std::size_t i = 0; i < n; ++i) col[i] = rows[i][j];
    out.mean[j] = pairwise_mean(col);
    out.var[j] = sample_variance(col);
    out.stderr_[j] = std::sqrt(out.var[j] / n);
  }
  return out;
}

RowMatrix random_matrix(std::mt19937_64& gen, std::size_t rows, std::size_t cols) {
  std::normal_distribution<double> z(0.0, 1.0);
  RowMatrix m{rows, cols, std::vector<double>(rows * cols)};
  for (double& v : m.values) v = z(gen);
  return m;
}

}  // namespace

TEST_CASE("quadrature oracle is converged in the node count") {
  const double coarse = oracle::quadrature_elbo(toy::q().m, toy::q().r, 20, toy::oracle_log_joint);
  CHECK(std::abs(coarse - toy::elbo()) < 1e-9);
}

TEST_CASE("schedule") {
  SUBCASE("fixed") {
    const auto s = Schedule::fixed(0.001);
    CHECK(s.rate(0) == 0.001);
    CHECK(s.rate(12345) == 0.001);
    CHECK_THROWS_AS(Schedule::fixed(0.0).validate(), ConfigError);
  }
  SUBCASE("robbins-monro with the reported constants") {
    const auto s = Schedule::robbins_monro(1.0, 100.0, 0.3);
    CHECK(std::abs(s.rate(0) - 0.01) < 1e-12);
    CHECK(std::abs(s.rate(99) - 1.0 / (100.0 * std::pow(100.0, 0.3))) < 1e-12);
    for (std::size_t t = 0; t < 1000; ++t) {
      CHECK(s.rate(t) > 0.0);
      CHECK(s.rate(t + 1) < s.rate(t));
    }
    CHECK_NOTHROW(s.validate());
    CHECK_THROWS_AS(Schedule::robbins_monro(1.0, 100.0, 0.3, true).validate(), ConfigError);
    CHECK_NOTHROW(Schedule::robbins_monro(1.0, 100.0, 0.75, true).validate());
    CHECK_THROWS_AS(Schedule::robbins_monro(1.0, 0.0, 0.3).validate(), ConfigError);
  }
}

TEST_CASE("train config validation") {
  TrainConfig c;
  c.use_control_variates = true;
  c.S = 1;
  CHECK_THROWS_WITH_AS(c.validate(), "control variates require S ≥ 2", ConfigError);
  c.S = 2;
  CHECK_NOTHROW(c.validate());
  c.max_iters = 0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
}

TEST_CASE("estimate_elbo") {
  SUBCASE("q equal to the prior with no data is exactly zero") {
    const Model model = Model::with_default_prior(NetworkShape(2, 3));
    const auto q = VariationalParams::from_prior(model.prior);
    const LabeledBatch empty(2, {}, {});
    const auto draws = sample(q, 64, {1, 0});
    const SampleTerms terms = evaluate_samples(q, model, empty, draws);
    for (double w : terms.weight) CHECK(std::abs(w) < 1e-12);
    CHECK(std::abs(estimate_elbo(q, model, empty, draws)) < 1e-12);
  }
  SUBCASE("agrees with quadrature on the toy model") {
    const auto q = toy::q();
    const auto draws = sample(q, 100000, {42, 0});
    const SampleTerms terms = evaluate_samples(q, toy::model(), toy::data(), draws);
    const double est = pairwise_mean(terms.weight);
    const double se = std::sqrt(sample_variance(terms.weight) / terms.weight.size());
    CHECK(std::abs(est - toy::elbo()) < 3.0 * se);
  }
  SUBCASE("deterministic for a fixed key") {
    const auto draws = sample(toy::q(), 500, {8, 1});
    CHECK(estimate_elbo(toy::q(), toy::model(), toy::data(), draws) ==
          estimate_elbo(toy::q(), toy::model(), toy::data(), sample(toy::q(), 500, {8, 1})));
  }
}

TEST_CASE("estimate_gradient") {
  SUBCASE("q equal to the prior with no data gives the zero vector") {
    const Model model = Model::with_default_prior(NetworkShape(1, 2));
    const auto q = VariationalParams::from_prior(model.prior);
    const auto g = estimate_gradient(q, model, LabeledBatch(1, {}, {}), sample(q, 50, {3, 0}));
    REQUIRE(g.size() == 2 * model.shape.param_count());
    for (double v : g) CHECK(std::abs(v) < 1e-11);
  }
  SUBCASE("deterministic for a fixed key") {
    const auto a = estimate_gradient(toy::q(), toy::model(), toy::data(), sample(toy::q(), 300, {4, 4}));
    const auto b = estimate_gradient(toy::q(), toy::model(), toy::data(), sample(toy::q(), 300, {4, 4}));
    CHECK(a == b);
  }
  SUBCASE("independent of the worker count") {
    const auto draws = sample(toy::q(), 999, {4, 5});
    set_num_threads(1);
    const auto serial = estimate_gradient_cv(toy::q(), toy::model(), toy::data(), draws);
    set_num_threads(5);
    const auto parallel = estimate_gradient_cv(toy::q(), toy::model(), toy::data(), draws);
    set_num_threads(1);
    CHECK(serial == parallel);
  }
}

TEST_CASE("both estimators are unbiased for the quadrature gradient") {
  const auto q = toy::q();
  const Model model = toy::model();
  const LabeledBatch batch = toy::data();
  const std::vector<double> truth = toy::elbo_gradient();

  std::vector<std::vector<double>> plain, cv;
  for (std::size_t rep = 0; rep < 200; ++rep) {
    const auto draws = sample(q, 1000, {1234, rep});
    const SampleTerms terms = evaluate_samples(q, model, batch, draws);
    plain.push_back(gradient_from_terms(terms).gradient);
    cv.push_back(cv_gradient_from_terms(terms, CvMode::per_coordinate, false).gradient);
  }
  const ColumnStats ps = column_stats(plain), cs = column_stats(cv);
  for (std::size_t j = 0; j < truth.size(); ++j) {
    CAPTURE(j);
    CHECK(std::abs(ps.mean[j] - truth[j]) < 5.0 * ps.stderr_[j]);
    CHECK(std::abs(cs.mean[j] - truth[j]) < 5.0 * cs.stderr_[j]);
  }

  SUBCASE("control variates shrink the variance wherever u and v correlate") {
    const auto big = evaluate_samples(q, model, batch, sample(q, 20000, {55, 0}));
    const RowMatrix u = control_variate_u(big), v = control_variate_v(big);
    for (std::size_t j = 0; j < truth.size(); ++j) {
      const auto uj = u.column(j), vj = v.column(j);
      const double mu = pairwise_mean(uj), mv = pairwise_mean(vj);
      std::vector<double> cross(uj.size());
      for (std::size_t w = 0; w < uj.size(); ++w) cross[w] = (uj[w] - mu) * (vj[w] - mv);
      const double corr = pairwise_sum(cross) / (uj.size() - 1) /
                          std::sqrt(sample_variance(uj) * sample_variance(vj));
      CAPTURE(j);
      CAPTURE(corr);
      if (std::abs(corr) > 0.1) CHECK(cs.var[j] < ps.var[j]);
    }
  }
}

TEST_CASE("control_variate_coefficients") {
  std::mt19937_64 gen(8);
  SUBCASE("perfectly correlated columns") {
    const RowMatrix v = random_matrix(gen, 40, 6);
    RowMatrix u = v;
    for (double& x : u.values) x *= 3.0;
    for (double a : control_variate_coefficients(u, v)) CHECK(a == doctest::Approx(3.0).epsilon(1e-12));
    for (double a : pooled_control_variate_coefficients(u, v)) CHECK(a == doctest::Approx(3.0).epsilon(1e-12));
  }
  SUBCASE("constant v column gets a zero coefficient") {
    RowMatrix v = random_matrix(gen, 30, 3);
    for (std::size_t w = 0; w < 30; ++w) v.values[w * 3 + 1] = 2.5;
    const RowMatrix u = random_matrix(gen, 30, 3);
    const auto a = control_variate_coefficients(u, v);
    CHECK(a[1] == 0.0);
    CHECK(a[0] != 0.0);
  }
  SUBCASE("in-sample OLS optimality") {
    for (int trial = 0; trial < 20; ++trial) {
      const RowMatrix v = random_matrix(gen, 1000, 8);
      RowMatrix u = random_matrix(gen, 1000, 8);
      for (std::size_t i = 0; i < u.values.size(); ++i) u.values[i] += (trial % 5) * 0.3 * v.values[i];
      const auto a = control_variate_coefficients(u, v);
      for (std::size_t j = 0; j < 8; ++j) {
        const auto uj = u.column(j), vj = v.column(j);
        std::vector<double> resid(uj.size());
        for (std::size_t w = 0; w < uj.size(); ++w) resid[w] = uj[w] - a[j] * vj[w];
        CHECK(sample_variance(resid) <= sample_variance(uj) * (1.0 + 1e-12));
      }
    }
  }
}

TEST_CASE("estimate_gradient_cv") {
  const auto q = toy::q();
  const auto draws = sample(q, 400, {9, 9});
  const SampleTerms terms = evaluate_samples(q, toy::model(), toy::data(), draws);

  SUBCASE("zero coefficients reproduce the plain estimator") {
    const std::vector<double> zeros(terms.width, 0.0);
    CHECK(cv_gradient_from_terms(terms, CvMode::per_coordinate, false, &zeros).gradient ==
          gradient_from_terms(terms).gradient);
  }
  SUBCASE("fitted per-coordinate coefficients never raise in-sample variance") {
    const auto plain = gradient_from_terms(terms);
    const auto cv = cv_gradient_from_terms(terms, CvMode::per_coordinate, false);
    CHECK(cv.mean_variance <= plain.mean_variance);
    const auto pooled = cv_gradient_from_terms(terms, CvMode::pooled, false);
    CHECK(cv.mean_variance <= pooled.mean_variance * (1.0 + 1e-12));
  }
  SUBCASE("public entry point matches the terms-based path") {
    CHECK(estimate_gradient_cv(q, toy::model(), toy::data(), draws) ==
          cv_gradient_from_terms(terms, CvMode::per_coordinate, false).gradient);
  }
  SUBCASE("holdout averages only the second half") {
    const auto held = cv_gradient_from_terms(terms, CvMode::per_coordinate, true);
    CHECK(held.gradient.size() == terms.width);
    for (double g : held.gradient) CHECK(std::isfinite(g));
  }
  SUBCASE("needs two samples") {
    CHECK_THROWS_AS(estimate_gradient_cv(q, toy::model(), toy::data(), sample(q, 1, {1, 1})), ConfigError);
  }
}

TEST_CASE("step") {
  const VariationalParams q({0.5, -1.0}, {0.2, 0.3});
  SUBCASE("zero gradient leaves q unchanged") {
    CHECK(step(q, std::vector<double>(4, 0.0), 0, Schedule::fixed(0.001)) == q);
  }
  SUBCASE("unit gradient moves every coordinate by rho") {
    const auto next = step(q, std::vector<double>(4, 1.0), 7, Schedule::fixed(0.001));
    for (std::size_t j = 0; j < 2; ++j) {
      CHECK(next.m[j] == q.m[j] + 0.001);
      CHECK(next.r[j] == q.r[j] + 0.001);
    }
  }
  SUBCASE("robbins-monro rate at t = 0") {
    const auto next = step(q, std::vector<double>(4, 1.0), 0, Schedule::robbins_monro(1.0, 100.0, 0.3));
    CHECK(next.m[0] == doctest::Approx(q.m[0] + 0.01).epsilon(1e-15));
  }
  SUBCASE("non-finite gradient carries the iteration") {
    std::vector<double> g(4, 0.0);
    g[3] = std::nan("");
    try {
      step(q, g, 17, Schedule::fixed(0.1));
      FAIL("expected NonFiniteGradient");
    } catch (const NonFiniteGradient& e) {
      CHECK(e.iteration() == 17);
      CHECK(e.coordinate() == 3);
    }
  }
}

TEST_CASE("moving-average convergence rule") {
  std::vector<double> flat(60, -10.0);
  CHECK_FALSE(elbo_converged(std::span(flat).first(50), 50, 1e-4));
  CHECK(elbo_converged(std::span(flat).first(51), 50, 1e-4));
  std::vector<double> rising(200);
  for (std::size_t i = 0; i < rising.size(); ++i) rising[i] = -100.0 + i;
  CHECK_FALSE(elbo_converged(rising, 50, 1e-4));
}

TEST_CASE("train") {
  SUBCASE("no data and a prior-matched start converges at the first check") {
    const Model model = Model::with_default_prior(NetworkShape(2, 2));
    TrainConfig cfg;
    cfg.S = 20;
    cfg.max_iters = 500;
    const TrainResult result = train(LabeledBatch(2, {}, {}), model, cfg);
    CHECK(result.report.converged);
    CHECK(result.report.iterations_run == cfg.conv_window + 1);
    CHECK(result.q == VariationalParams::from_prior(model.prior));
    CHECK(result.report.elbo_trace.size() == result.report.iterations_run);
    CHECK(result.report.grad_var_trace.size() == result.report.iterations_run);
  }
  SUBCASE("identical config and seed give an identical report") {
    TrainConfig cfg;
    cfg.S = 30;
    cfg.max_iters = 40;
    cfg.use_control_variates = true;
    cfg.seed = 3;
    cfg.init_jitter = 0.1;
    const auto a = train(toy::data(), toy::model(), cfg);
    set_num_threads(4);
    const auto b = train(toy::data(), toy::model(), cfg);
    set_num_threads(1);
    CHECK(a.q == b.q);
    CHECK(a.report.elbo_trace == b.report.elbo_trace);
    CHECK(a.report.grad_var_trace == b.report.grad_var_trace);
    CHECK(a.report.rho_trace == b.report.rho_trace);
    cfg.seed = 4;
    CHECK(train(toy::data(), toy::model(), cfg).report.elbo_trace != a.report.elbo_trace);
  }
  SUBCASE("divergence aborts with the last good state") {
    TrainConfig cfg;
    cfg.S = 20;
    cfg.max_iters = 200;
    cfg.schedule = Schedule::fixed(1e6);
    try {
      train(toy::data(), toy::model(), cfg);
      FAIL("expected TrainingDiverged");
    } catch (const TrainingDiverged& e) {
      CHECK(e.last_good().report.iterations_run == e.iteration());
      for (double m : e.last_good().q.m) CHECK(std::isfinite(m));
    }
  }
  SUBCASE("gradient clipping bounds every step") {
    TrainConfig cfg;
    cfg.S = 20;
    cfg.max_iters = 1;
    cfg.schedule = Schedule::fixed(1.0);
    cfg.grad_clip = 0.5;
    const auto q0 = VariationalParams::from_prior(toy::model().prior);
    const auto result = train(toy::data(), toy::model(), cfg);
    for (std::size_t j = 0; j < q0.size(); ++j) {
      CHECK(std::abs(result.q.m[j] - q0.m[j]) <= 0.5 + 1e-15);
      CHECK(std::abs(result.q.r[j] - q0.r[j]) <= 0.5 + 1e-15);
    }
  }
}

TEST_CASE("training on the reference truth improves the ELBO and beats the majority class") {
  const TrueFunction truth = TrueFunction::reference();
  const LabeledBatch train_set = generate_synthetic(truth, 500, 1);
  const LabeledBatch test_set = generate_synthetic(truth, 2000, 2);
  const Model model = Model::with_default_prior(NetworkShape(2, 3));
  TrainConfig cfg;
  cfg.S = 100;
  cfg.max_iters = 800;
  cfg.use_control_variates = true;
  cfg.schedule = Schedule::robbins_monro(1.0, 100.0, 0.3);
  cfg.seed = 5;
  const TrainResult result = train(train_set, model, cfg);

  const auto q0 = VariationalParams::from_prior(model.prior);
  const auto eval_draws = [&](const VariationalParams& q) { return sample(q, 4000, {77, 0}); };
  const double before = estimate_elbo(q0, model, train_set, eval_draws(q0));
  const double after = estimate_elbo(result.q, model, train_set, eval_draws(result.q));
  CHECK(after > before);

  double ones = 0.0;
  for (auto y : test_set.y) ones += y;
  const double majority = std::max(ones, test_set.rows() - ones) / test_set.rows();
  const double accuracy = test_accuracy(model.shape, result.q, test_set, {300, 1, 1e-12});
  CAPTURE(majority);
  CHECK(accuracy > majority);
}
