#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "freelunch/model.hpp"

namespace freelunch {

/// Variance inflation factor of the AR(1) draw process,
/// phi(gamma) = gamma^2 / (1 - (1-gamma)^2), undone when forming the
/// adjusted variance. phi(1) = 1.
double phi(double gamma);

struct WaldTest {
  double statistic = 0.0;
  long dof = 0;
  double p_value = 1.0;
};

/// Per-coordinate AR(1) fit of the post-burn-in draws. The draws of an
/// inverse-Hessian-conditioned chain should show persistence 1 - gamma in
/// every coordinate; `pass` is |coefficient - target| <= 3 se.
struct AR1Diag {
  Vector coefficient;
  Vector se;
  double target = 0.0;
  std::vector<bool> pass;
};

/// Everything the draws of one run yield: the averaged point estimate, the
/// adjusted variance of the sqrt(n)-scaled estimator, per-coordinate standard
/// errors and percentile intervals, and optional test/diagnostic blocks.
struct InferenceReport {
  Vector theta_bar;
  Matrix V;             // (m / phi(gamma)) * var(draws)
  Vector se;            // sqrt(V_jj / n)
  double alpha = 0.05;
  Vector ci_lower;
  Vector ci_upper;
  std::vector<bool> degenerate;  // zero-variance coordinates (CI collapsed)
  std::optional<WaldTest> wald;
  std::optional<AR1Diag> ar1;

  // config echo
  std::string method;
  double gamma = 1.0;
  long m = 0;
  long n = 0;
  long B = 0;
  std::uint64_t seed = 0;
};

struct SummarizeInputs {
  long m = 0;
  double gamma = 1.0;
  long n = 0;
  double alpha = 0.05;
  std::string method;
  std::uint64_t seed = 0;
};

/// Algorithm outputs from a B x d matrix of post-burn-in draws:
/// theta_bar = draw mean, V = (m/phi(gamma)) * draw covariance (divisor B),
/// se_j = sqrt(V_jj/n), and percentile intervals from the empirical
/// (alpha/2, 1-alpha/2) quantiles of
///   theta_bar + sqrt(m/(n phi(gamma))) (theta_b - theta_bar).
InferenceReport summarize(const Matrix& draws, const SummarizeInputs& inputs);

/// wald = n (theta_bar - theta_null)' V^{-1} (theta_bar - theta_null),
/// chi-squared with d degrees of freedom under the null. Throws
/// ConditioningError (with the spectrum) when V is singular.
WaldTest wald(const Vector& theta_bar, const Vector& theta_null, const Matrix& V, long n);

/// Least-squares AR(1) coefficient (with intercept) per coordinate of the
/// post-burn-in draws; requires at least 30 draws.
AR1Diag ar1_diagnostic(const Matrix& draws, double gamma);

/// H_n^{-1} cov(scores) H_n^{-1} at theta_hat: the sandwich estimate of the
/// sqrt(n)-asymptotic variance, from per-observation scores.
Matrix sandwich_variance(const ObjectiveModel& model, const Vector& theta_hat);

}  // namespace freelunch
