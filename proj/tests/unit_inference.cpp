#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "freelunch/baselines.hpp"
#include "freelunch/coupling.hpp"
#include "freelunch/errors.hpp"
#include "freelunch/harness.hpp"
#include "freelunch/models.hpp"
#include "freelunch/stats.hpp"
#include "support/test_support.hpp"

using namespace freelunch;

namespace {

Matrix gaussian_draws(long B, long d, double sd, RngStream& rng) {
  Matrix draws(B, d);
  for (long b = 0; b < B; ++b)
    for (long j = 0; j < d; ++j) draws(b, j) = sd * rng.normal();
  return draws;
}

SummarizeInputs inputs_for(long m, double gamma, long n, double alpha = 0.05) {
  SummarizeInputs in;
  in.m = m;
  in.gamma = gamma;
  in.n = n;
  in.alpha = alpha;
  return in;
}

}  // namespace

TEST_CASE("phi values") {
  CHECK(phi(1.0) == doctest::Approx(1.0));
  CHECK(phi(0.1) == doctest::Approx(0.01 / 0.19).epsilon(1e-12));
  CHECK(phi(0.1) == doctest::Approx(0.052632).epsilon(1e-4));
  CHECK(phi(0.3) == doctest::Approx(0.09 / 0.51).epsilon(1e-12));
  CHECK_THROWS_AS(phi(0.0), ConfigError);
  CHECK_THROWS_AS(phi(1.2), ConfigError);
}

TEST_CASE("standard errors match the scaled-draw form") {
  RngStream rng(1, 0);
  const Matrix draws = gaussian_draws(500, 2, 0.2, rng);
  const long m = 150, n = 600;
  const double gamma = 0.3;
  const InferenceReport rep = summarize(draws, inputs_for(m, gamma, n));
  const Vector sd = stats::col_sd(draws);
  // sd(draws) * sqrt(m/n) * sqrt((1-(1-gamma)^2)/gamma^2)
  const double adj = std::sqrt(static_cast<double>(m) / n) *
                     std::sqrt((1.0 - (1.0 - gamma) * (1.0 - gamma)) / (gamma * gamma));
  for (long j = 0; j < 2; ++j) CHECK(rep.se[j] == doctest::Approx(sd[j] * adj).epsilon(1e-12));
  // the m = n, gamma = 0.3 multiplier is sqrt(1/phi(0.3)) ~ 2.3805
  CHECK(std::sqrt(1.0 / phi(0.3)) == doctest::Approx(2.3805).epsilon(1e-4));
}

TEST_CASE("identical draws collapse to a point and are flagged") {
  Matrix draws(50, 2);
  for (long b = 0; b < 50; ++b) draws.row(b) << 1.5, -0.5;
  const InferenceReport rep = summarize(draws, inputs_for(100, 0.5, 100));
  CHECK(rep.V.cwiseAbs().maxCoeff() == 0.0);
  CHECK(rep.se.maxCoeff() == 0.0);
  CHECK(rep.degenerate[0]);
  CHECK(rep.degenerate[1]);
  CHECK(rep.ci_lower[0] == rep.ci_upper[0]);
}

TEST_CASE("the adjusted variance is reorder-invariant and scales exactly") {
  RngStream rng(2, 0);
  const Matrix draws = gaussian_draws(300, 2, 0.1, rng);
  const auto in = inputs_for(80, 0.2, 400);
  const InferenceReport rep = summarize(draws, in);

  Matrix reversed = draws.colwise().reverse();
  const InferenceReport rev = summarize(reversed, in);
  CHECK((rep.V - rev.V).cwiseAbs().maxCoeff() <= 1e-14);

  const Vector mean = stats::col_mean(draws);
  Matrix doubled = draws;
  for (long b = 0; b < draws.rows(); ++b)
    doubled.row(b) = mean.transpose() + 2.0 * (draws.row(b) - mean.transpose());
  const InferenceReport two = summarize(doubled, in);
  CHECK((two.V - 4.0 * rep.V).cwiseAbs().maxCoeff() <= 1e-10 * rep.V.norm());
}

TEST_CASE("interval endpoints are monotone in the level and cover the mean") {
  RngStream rng(3, 0);
  const Matrix draws = gaussian_draws(2000, 1, 0.3, rng);
  double prev_lo = std::numeric_limits<double>::infinity();
  double prev_hi = -std::numeric_limits<double>::infinity();
  for (double alpha : {0.5, 0.2, 0.1, 0.05, 0.01}) {
    const InferenceReport rep = summarize(draws, inputs_for(100, 0.4, 100, alpha));
    CHECK(rep.ci_lower[0] <= prev_lo);
    CHECK(rep.ci_upper[0] >= prev_hi);
    CHECK(rep.ci_lower[0] < rep.theta_bar[0]);
    CHECK(rep.ci_upper[0] > rep.theta_bar[0]);
    prev_lo = rep.ci_lower[0];
    prev_hi = rep.ci_upper[0];
  }
}

TEST_CASE("wald statistic: null value, hand value, scale invariance") {
  Vector theta(1), null(1);
  theta << 0.4;
  null << 0.4;
  Matrix V = Matrix::Identity(1, 1);
  const WaldTest at_null = wald(theta, null, V, 100);
  CHECK(at_null.statistic == doctest::Approx(0.0));
  CHECK(at_null.p_value == doctest::Approx(1.0));

  theta << 0.5;
  const WaldTest one = wald(theta, null, V, 100);
  CHECK(one.statistic == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(one.p_value == doctest::Approx(0.3173105).epsilon(1e-5));

  // joint rescaling of units: theta -> c theta, V -> c^2 V
  const double c = 37.0;
  Vector theta_s = c * theta, null_s = c * null;
  const WaldTest scaled = wald(theta_s, null_s, Matrix(c * c * V), 100);
  CHECK(scaled.statistic == doctest::Approx(one.statistic).epsilon(1e-12));

  CHECK_THROWS_AS(wald(theta, null, Matrix::Zero(1, 1), 100), ConditioningError);
}

TEST_CASE("AR(1) diagnostic recovers persistence and rejects white noise the target") {
  RngStream rng(4, 0);
  const long B = 4000;
  Matrix draws(B, 1);
  double x = 0.0;
  for (long b = 0; b < B; ++b) {
    x = 0.7 * x + rng.normal();
    draws(b, 0) = x;
  }
  const AR1Diag persistent = ar1_diagnostic(draws, 0.3);  // target 0.7
  CHECK(std::abs(persistent.coefficient[0] - 0.7) <= 3.0 * persistent.se[0]);
  CHECK(persistent.pass[0]);

  Matrix noise = gaussian_draws(B, 1, 1.0, rng);
  const AR1Diag iid_at_one = ar1_diagnostic(noise, 1.0);  // target 0
  CHECK(std::abs(iid_at_one.coefficient[0]) <= 3.0 * iid_at_one.se[0]);
  CHECK(iid_at_one.pass[0]);

  const AR1Diag mismatched = ar1_diagnostic(noise, 0.3);  // target 0.7 fails
  CHECK_FALSE(mismatched.pass[0]);

  CHECK_THROWS_AS(ar1_diagnostic(Matrix::Zero(10, 1), 0.3), ConfigError);
}

TEST_CASE("sandwich variance matches the hand formula on least squares") {
  RngStream rng(5, 0);
  const DataSet data = testsupport::random_ols_data(80, 2, rng);
  const ModelPtr model = make_ols(data);
  const Vector theta_hat = testsupport::ols_solve(data.design(), data.response());
  const Matrix V = sandwich_variance(*model, theta_hat);

  const Matrix X = data.design();
  const Vector resid = data.response() - X * theta_hat;
  const Matrix H = X.transpose() * X / 80.0;
  Matrix S = Matrix::Zero(2, 2);
  for (long i = 0; i < 80; ++i)
    S += resid[i] * resid[i] * X.row(i).transpose() * X.row(i);
  S /= 80.0;
  const Matrix expected = H.inverse() * S * H.inverse();
  CHECK((V - expected).norm() <= 1e-8 * expected.norm());
}

TEST_CASE("free-lunch slope standard errors agree across learning rates") {
  ModelSpec spec;
  spec.kind = "ols_t6";
  spec.n = 200;
  const DataSet data = load_or_generate(spec, 404, 0);
  const ModelPtr model = build_model(spec, data);
  const Vector theta_hat = testsupport::ols_solve(data.design(), data.response());
  const Vector ase = ase_standard_errors(spec, *model, theta_hat);
  const BootstrapDraws boot = m_of_n_bootstrap(*model, ResamplePlan::iid(200, 200), theta_hat, {},
                                               1500, 404, 90000);
  const BootstrapReport brep = bootstrap_report(boot, 0.05);
  for (double gamma : {0.1, 0.3, 1.0}) {
    ChainConfig cc;
    cc.gamma = gamma;
    cc.B = 1500;
    cc.theta0 = Vector::Zero(2);
    cc.plan = ResamplePlan::iid(200, 200);
    cc.seed = 404;
    cc.stream = 100 + static_cast<std::uint64_t>(1000 * gamma);
    auto [history, report] = run_free_lunch(*model, cc);
    CHECK(std::abs(report.se[1] - ase[1]) <= 0.25 * ase[1]);
    CHECK(std::abs(report.se[1] - brep.se[1]) <= 0.25 * brep.se[1]);
  }
}

TEST_CASE("wald size under the null across replications") {
  // t(6) least-squares design; test theta0 = (1,1) with the adjusted variance
  ModelSpec spec;
  spec.kind = "ols_t6";
  spec.n = 200;
  long rejections = 0;
  const long R = 1000;
  for (long r = 0; r < R; ++r) {
    Vector truth;
    const DataSet data = load_or_generate(spec, 314, (r + 1) * 1000, &truth);
    const ModelPtr model = build_model(spec, data);
    ChainConfig cc;
    cc.gamma = 0.1;
    cc.B = 1000;
    cc.theta0 = Vector::Zero(2);
    cc.plan = ResamplePlan::iid(200, 200);
    cc.seed = 314;
    cc.stream = (r + 1) * 1000 + 100;
    auto [history, report] = run_free_lunch(*model, cc);
    const WaldTest w = wald(report.theta_bar, truth, report.V, report.n);
    if (w.p_value < 0.05) ++rejections;
  }
  const double rate = static_cast<double>(rejections) / R;
  CHECK(rate >= 0.03);
  CHECK(rate <= 0.08);
}

// ---------------------------------------------------------------------------
// coupling

TEST_CASE("coupling distance vanishes on an exactly quadratic objective") {
  ModelSpec spec;
  spec.kind = "ols_t6";
  spec.n = 150;
  const DataSet data = load_or_generate(spec, 21, 0);
  const ModelPtr model = build_model(spec, data);
  const Vector theta_hat = testsupport::ols_solve(data.design(), data.response());
  for (double gamma : {0.1, 0.5, 1.0}) {
    ChainConfig cc;
    cc.gamma = gamma;
    cc.B = 150;
    cc.theta0 = Vector::Ones(2);
    cc.plan = ResamplePlan::iid(150, 50);
    cc.seed = 22;
    const DrawHistory history = run_resampled_chain(*model, cc);
    const CouplingReport rep = coupling_sequence(*model, theta_hat, history);
    CHECK(rep.distance.maxCoeff() <= 1e-10);
  }
}

TEST_CASE("at gamma = 1 the companion sequence is the one-step batch estimate") {
  ModelSpec spec;
  spec.kind = "ols_t6";
  spec.n = 80;
  const DataSet data = load_or_generate(spec, 23, 0);
  const ModelPtr model = build_model(spec, data);
  const Matrix X = data.design();
  const Vector y = data.response();
  const Vector theta_hat = testsupport::ols_solve(X, y);
  ChainConfig cc;
  cc.gamma = 1.0;
  cc.B = 40;
  cc.theta0 = Vector::Zero(2);
  cc.plan = ResamplePlan::iid(80, 40);
  cc.seed = 24;
  const DrawHistory history = run_resampled_chain(*model, cc);
  const CouplingReport rep = coupling_sequence(*model, theta_hat, history);
  for (long t = 0; t < rep.linearized.rows(); ++t) {
    RngStream rng(cc.seed, history.batch_stream_ids[static_cast<size_t>(t)]);
    const auto idx = draw_batch(cc.plan, rng).index_list();
    Matrix Xb(idx.size(), 2);
    Vector yb(idx.size());
    for (size_t k = 0; k < idx.size(); ++k) {
      Xb.row(static_cast<long>(k)) = X.row(idx[k]);
      yb[static_cast<long>(k)] = y[idx[k]];
    }
    const Vector theta_m = testsupport::ols_solve(Xb, yb);
    CHECK((rep.linearized.row(t).transpose() - theta_m).norm() <= 1e-10 * (1.0 + theta_m.norm()));
  }
}

TEST_CASE("coupling replay requires the stored metadata") {
  ModelSpec spec;
  spec.kind = "ols_t6";
  spec.n = 60;
  const DataSet data = load_or_generate(spec, 25, 0);
  const ModelPtr model = build_model(spec, data);
  ChainConfig cc;
  cc.gamma = 0.3;
  cc.B = 30;
  cc.theta0 = Vector::Zero(2);
  cc.plan = ResamplePlan::iid(60, 60);
  cc.seed = 26;
  DrawHistory history = run_resampled_chain(*model, cc);
  history.batch_stream_ids.pop_back();
  CHECK_THROWS_AS(coupling_sequence(*model, Vector::Zero(2), history), ConfigError);
}
