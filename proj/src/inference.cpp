#include "freelunch/inference.hpp"

#include <algorithm>
#include <cmath>

#include "freelunch/errors.hpp"
#include "freelunch/stats.hpp"

namespace freelunch {

double phi(double gamma) {
  if (gamma <= 0.0 || gamma > 1.0) throw ConfigError("phi requires gamma in (0,1]");
  const double r = 1.0 - gamma;
  return gamma * gamma / (1.0 - r * r);
}

InferenceReport summarize(const Matrix& draws, const SummarizeInputs& inputs) {
  const long B = draws.rows();
  const long d = draws.cols();
  if (B < 2) throw ConfigError("summarize needs at least two draws");
  if (inputs.n < 1 || inputs.m < 1) throw ConfigError("summarize needs m >= 1 and n >= 1");

  InferenceReport rep;
  rep.method = inputs.method;
  rep.gamma = inputs.gamma;
  rep.m = inputs.m;
  rep.n = inputs.n;
  rep.B = B;
  rep.alpha = inputs.alpha;
  rep.seed = inputs.seed;

  rep.theta_bar = stats::col_mean(draws);
  const double adjustment = static_cast<double>(inputs.m) / phi(inputs.gamma);
  rep.V = adjustment * stats::covariance(draws);

  rep.se = Vector(d);
  rep.degenerate.assign(static_cast<size_t>(d), false);
  for (long j = 0; j < d; ++j) {
    const double vjj = std::max(rep.V(j, j), 0.0);
    rep.se[j] = std::sqrt(vjj / static_cast<double>(inputs.n));
    if (vjj == 0.0) rep.degenerate[static_cast<size_t>(j)] = true;
  }

  // Percentile interval on the rescaled draws theta_bar + scale*(theta_b - theta_bar).
  const double scale = std::sqrt(static_cast<double>(inputs.m) /
                                 (static_cast<double>(inputs.n) * phi(inputs.gamma)));
  rep.ci_lower = Vector(d);
  rep.ci_upper = Vector(d);
  std::vector<double> column(static_cast<size_t>(B));
  for (long j = 0; j < d; ++j) {
    for (long b = 0; b < B; ++b)
      column[static_cast<size_t>(b)] = rep.theta_bar[j] + scale * (draws(b, j) - rep.theta_bar[j]);
    std::sort(column.begin(), column.end());
    rep.ci_lower[j] = stats::quantile_sorted(column, inputs.alpha / 2.0);
    rep.ci_upper[j] = stats::quantile_sorted(column, 1.0 - inputs.alpha / 2.0);
  }
  return rep;
}

WaldTest wald(const Vector& theta_bar, const Vector& theta_null, const Matrix& V, long n) {
  const long d = theta_bar.size();
  if (theta_null.size() != d || V.rows() != d || V.cols() != d)
    throw ConfigError("wald: dimension mismatch");
  Eigen::SelfAdjointEigenSolver<Matrix> es(V);
  const Vector& lambda = es.eigenvalues();
  const double lmax = lambda.cwiseAbs().maxCoeff();
  if (lmax <= 0.0 || lambda.minCoeff() <= 1e-14 * lmax)
    throw ConditioningError("wald: singular variance matrix",
                            std::vector<double>(lambda.data(), lambda.data() + lambda.size()));
  const Vector diff = theta_bar - theta_null;
  const Vector z = es.eigenvectors().transpose() * diff;
  double quad = 0.0;
  for (long j = 0; j < d; ++j) quad += z[j] * z[j] / lambda[j];
  WaldTest w;
  w.statistic = static_cast<double>(n) * quad;
  w.dof = d;
  w.p_value = stats::chi2_tail(w.statistic, static_cast<double>(d));
  return w;
}

AR1Diag ar1_diagnostic(const Matrix& draws, double gamma) {
  const long B = draws.rows();
  const long d = draws.cols();
  if (B < 30) throw ConfigError("AR(1) diagnostic needs at least 30 draws");
  AR1Diag diag;
  diag.coefficient = Vector(d);
  diag.se = Vector(d);
  diag.target = 1.0 - gamma;
  diag.pass.assign(static_cast<size_t>(d), false);
  const long T = B - 1;
  for (long j = 0; j < d; ++j) {
    // OLS of theta_b on (1, theta_{b-1}).
    double mx = 0.0, my = 0.0;
    for (long b = 0; b < T; ++b) {
      mx += draws(b, j);
      my += draws(b + 1, j);
    }
    mx /= static_cast<double>(T);
    my /= static_cast<double>(T);
    double sxx = 0.0, sxy = 0.0;
    for (long b = 0; b < T; ++b) {
      const double xc = draws(b, j) - mx;
      sxx += xc * xc;
      sxy += xc * (draws(b + 1, j) - my);
    }
    if (sxx <= 0.0) {
      diag.coefficient[j] = 0.0;
      diag.se[j] = 0.0;
      continue;
    }
    const double beta = sxy / sxx;
    double ssr = 0.0;
    for (long b = 0; b < T; ++b) {
      const double resid = (draws(b + 1, j) - my) - beta * (draws(b, j) - mx);
      ssr += resid * resid;
    }
    const double sigma2 = ssr / static_cast<double>(T - 2);
    diag.coefficient[j] = beta;
    diag.se[j] = std::sqrt(sigma2 / sxx);
    diag.pass[static_cast<size_t>(j)] =
        std::abs(beta - diag.target) <= 3.0 * diag.se[j];
  }
  return diag;
}

Matrix sandwich_variance(const ObjectiveModel& model, const Vector& theta_hat) {
  const Matrix scores = model.observation_scores(theta_hat);  // d x n
  const long n = scores.cols();
  const Vector mean = scores.rowwise().mean();
  const Matrix centered = scores.colwise() - mean;
  const Matrix S = centered * centered.transpose() / static_cast<double>(n);
  const Matrix H = model.evaluate_full(theta_hat, false, true).hessian;
  const Eigen::LDLT<Matrix> ldlt(H);
  const Matrix Hinv_S = ldlt.solve(S);
  return ldlt.solve(Hinv_S.transpose()).transpose();
}

}  // namespace freelunch
