#include "freelunch/baselines.hpp"

#include <algorithm>
#include <cmath>

#include "freelunch/errors.hpp"
#include "freelunch/stats.hpp"

namespace freelunch {

const char* to_string(BootstrapMethod method) {
  switch (method) {
    case BootstrapMethod::MofN: return "mofn";
    case BootstrapMethod::DMK: return "dmk";
    case BootstrapMethod::KS: return "ks";
    case BootstrapMethod::StateSpaceMA1: return "ssb";
  }
  return "unknown";
}

namespace {

// Newton on one resampled objective. An iterate that leaves the evaluable
// region counts as a non-convergent replication, not a fatal error.
bool batch_newton(const ObjectiveModel& model, const BatchSelector& batch,
                  const OptimizerConfig& optimizer, Vector& theta) {
  try {
    const ClassicalResult result = minimize_batch(model, batch, theta, optimizer);
    theta = result.theta;
    return result.converged;
  } catch (const EvaluationError&) {
    return false;
  } catch (const ConditioningError&) {
    return false;
  }
}

void check_failures(long failures, long B) {
  if (failures * 20 > B)
    throw Error("more than 5% of bootstrap replications failed to converge (" +
                std::to_string(failures) + " of " + std::to_string(B) + ")");
}

}  // namespace

BootstrapDraws m_of_n_bootstrap(const ObjectiveModel& model, const ResamplePlan& plan,
                                const Vector& theta_hat, const OptimizerConfig& optimizer, long B,
                                std::uint64_t seed, std::uint64_t stream) {
  if (B < 1) throw ConfigError("bootstrap needs B >= 1");
  plan.validate();
  BootstrapDraws out;
  out.method = BootstrapMethod::MofN;
  out.center = theta_hat;
  out.m = plan.effective_m();
  out.n = model.sample_size();
  out.seed = seed;
  out.stream = stream;
  std::vector<Vector> kept;
  kept.reserve(static_cast<size_t>(B));
  for (long b = 1; b <= B; ++b) {
    RngStream rng(seed, stream + static_cast<std::uint64_t>(b));
    const BatchSelector batch = draw_batch(plan, rng);
    Vector theta = theta_hat;  // warm start at the sample estimate
    if (batch_newton(model, batch, optimizer, theta))
      kept.push_back(std::move(theta));
    else
      ++out.failures;
  }
  check_failures(out.failures, B);
  out.draws.resize(static_cast<long>(kept.size()), model.dimension());
  for (size_t i = 0; i < kept.size(); ++i) out.draws.row(static_cast<long>(i)) = kept[i];
  return out;
}

BootstrapDraws dmk_draws(const ObjectiveModel& model, const Vector& theta_hat, long k, long B,
                         const ResamplePlan& plan, std::uint64_t seed, std::uint64_t stream,
                         const ConditioningOptions& options) {
  if (k < 1) throw ConfigError("dmk needs k >= 1 Newton steps");
  if (B < 1) throw ConfigError("bootstrap needs B >= 1");
  plan.validate();
  BootstrapDraws out;
  out.method = BootstrapMethod::DMK;
  out.center = theta_hat;
  out.m = plan.effective_m();
  out.n = model.sample_size();
  out.seed = seed;
  out.stream = stream;
  out.draws.resize(B, model.dimension());
  for (long b = 1; b <= B; ++b) {
    RngStream rng(seed, stream + static_cast<std::uint64_t>(b));
    const BatchSelector batch = draw_batch(plan, rng);
    Vector theta = theta_hat;
    bool repaired = false;
    for (long j = 0; j < k; ++j) {
      const Evaluation eval = model.evaluate(theta, batch, true, true);
      Eigen::SelfAdjointEigenSolver<Matrix> es(eval.hessian, Eigen::EigenvaluesOnly);
      repaired = repaired || es.eigenvalues().minCoeff() <=
                                 1e-10 * es.eigenvalues().cwiseAbs().maxCoeff();
      theta -= direction(ConditioningKind::InverseHessian, eval.hessian, eval.gradient, options);
    }
    if (repaired) ++out.pd_repairs;
    out.draws.row(b - 1) = theta;
  }
  return out;
}

BootstrapDraws ks_score_bootstrap(const ObjectiveModel& model, const Vector& theta_hat, long B,
                                  std::uint64_t seed, std::uint64_t stream) {
  if (!model.has_observation_scores())
    throw CapabilityError("score bootstrap requires per-observation scores (M-estimator)");
  if (B < 1) throw ConfigError("bootstrap needs B >= 1");
  const long n = model.sample_size();
  const Matrix scores = model.observation_scores(theta_hat);  // d x n
  const Matrix H = model.evaluate_full(theta_hat, false, true).hessian;
  const Eigen::LDLT<Matrix> ldlt(H);
  if (ldlt.info() != Eigen::Success)
    throw ConditioningError("score bootstrap: Hessian factorization failed", {});
  const Matrix solved = ldlt.solve(scores);  // H^{-1} G_i, column per observation

  BootstrapDraws out;
  out.method = BootstrapMethod::KS;
  out.center = theta_hat;
  out.m = n;  // n-out-of-n weighting
  out.n = n;
  out.seed = seed;
  out.stream = stream;
  out.draws.resize(B, model.dimension());
  Vector omega(n);
  for (long b = 1; b <= B; ++b) {
    RngStream rng(seed, stream + static_cast<std::uint64_t>(b));
    for (long i = 0; i < n; ++i) omega[i] = rng.rademacher();
    out.draws.row(b - 1) = (theta_hat + (solved * omega) / static_cast<double>(n)).transpose();
  }
  return out;
}

BootstrapDraws state_space_ma1_bootstrap(const Ma1Model& model, const Vector& theta_hat, long B,
                                         const OptimizerConfig& optimizer, std::uint64_t seed,
                                         std::uint64_t stream) {
  if (B < 1) throw ConfigError("bootstrap needs B >= 1");
  const long n = model.sample_size();
  const Vector residuals = model.filtered_residuals(theta_hat);
  const double mu = theta_hat[0];
  const double psi = theta_hat[1];

  BootstrapDraws out;
  out.method = BootstrapMethod::StateSpaceMA1;
  out.center = theta_hat;
  out.m = n;
  out.n = n;
  out.seed = seed;
  out.stream = stream;
  std::vector<Vector> kept;
  kept.reserve(static_cast<size_t>(B));
  Vector series(n);
  for (long b = 1; b <= B; ++b) {
    RngStream rng(seed, stream + static_cast<std::uint64_t>(b));
    // iid residual draws e*_0, ..., e*_n from the filtered residuals
    double e_prev = residuals[static_cast<long>(rng.uniform_index(static_cast<std::uint64_t>(n)))];
    for (long t = 0; t < n; ++t) {
      const double e_t = residuals[static_cast<long>(rng.uniform_index(static_cast<std::uint64_t>(n)))];
      series[t] = mu + e_t + psi * e_prev;
      e_prev = e_t;
    }
    Ma1Model refit(series);
    Vector theta = theta_hat;
    if (batch_newton(refit, BatchSelector::full_sample(n), optimizer, theta))
      kept.push_back(std::move(theta));
    else
      ++out.failures;
  }
  check_failures(out.failures, B);
  out.draws.resize(static_cast<long>(kept.size()), 2);
  for (size_t i = 0; i < kept.size(); ++i) out.draws.row(static_cast<long>(i)) = kept[i];
  return out;
}

BootstrapReport bootstrap_report(const BootstrapDraws& draws, double alpha,
                                 const Vector* recenter_at) {
  const long B = draws.draws.rows();
  const long d = draws.draws.cols();
  if (B < 2) throw ConfigError("bootstrap report needs at least two draws");
  BootstrapReport rep;
  const double scale = std::sqrt(static_cast<double>(draws.m) / static_cast<double>(draws.n));
  rep.se = scale * stats::col_sd(draws.draws);
  rep.ci_lower.resize(d);
  rep.ci_upper.resize(d);
  const Vector mean = stats::col_mean(draws.draws);
  std::vector<double> column(static_cast<size_t>(B));
  for (long j = 0; j < d; ++j) {
    for (long b = 0; b < B; ++b) {
      // Recentered draws: point estimate plus mean-zero draw deviations.
      column[static_cast<size_t>(b)] =
          recenter_at ? (*recenter_at)[j] + (draws.draws(b, j) - mean[j])
                      : draws.center[j] + scale * (draws.draws(b, j) - draws.center[j]);
    }
    std::sort(column.begin(), column.end());
    rep.ci_lower[j] = stats::quantile_sorted(column, alpha / 2.0);
    rep.ci_upper[j] = stats::quantile_sorted(column, 1.0 - alpha / 2.0);
  }
  return rep;
}

}  // namespace freelunch
