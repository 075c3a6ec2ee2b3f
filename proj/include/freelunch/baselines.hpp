#pragma once

#include <string>

#include "freelunch/chains.hpp"
#include "freelunch/models.hpp"

namespace freelunch {

enum class BootstrapMethod { MofN, DMK, KS, StateSpaceMA1 };

const char* to_string(BootstrapMethod method);

/// Draws produced by one of the comparison bootstraps. SEs and intervals are
/// built by `bootstrap_report`: se_j = sqrt(m/n) sd(draws_j), interval from
/// the quantiles of center + sqrt(m/n) (draw - center).
struct BootstrapDraws {
  Matrix draws;  // B x d
  BootstrapMethod method = BootstrapMethod::MofN;
  Vector center;  // theta_hat_n
  long m = 0;
  long n = 0;
  long failures = 0;    // non-convergent replications, excluded from draws
  long pd_repairs = 0;  // replications whose resampled Hessian needed repair
  std::uint64_t seed = 0;
  std::uint64_t stream = 0;
};

/// Full m-of-n bootstrap: B independent resampled objectives, each minimized
/// by damped Newton warm-started at theta_hat. Replications that fail to
/// converge are dropped and counted; the run errors when more than 5% fail.
BootstrapDraws m_of_n_bootstrap(const ObjectiveModel& model, const ResamplePlan& plan,
                                const Vector& theta_hat, const OptimizerConfig& optimizer, long B,
                                std::uint64_t seed, std::uint64_t stream = 0);

/// Approximate bootstrap: k full Newton steps (gamma = 1) on each resampled
/// objective, started at theta_hat. k = 1 by default. A non-PD resampled
/// Hessian is ridge-repaired and the replication proceeds.
BootstrapDraws dmk_draws(const ObjectiveModel& model, const Vector& theta_hat, long k, long B,
                         const ResamplePlan& plan, std::uint64_t seed, std::uint64_t stream = 0,
                         const ConditioningOptions& options = {});

/// Score bootstrap: perturb the per-observation scores at theta_hat with iid
/// Rademacher weights while holding the Hessian at the sample estimate:
///   draw_b = theta_hat + H_n(theta_hat)^{-1} (1/n) sum_i w_i G_i(theta_hat).
/// Requires per-observation scores (M-estimators); n-out-of-n weighting, so
/// downstream reports apply no m/n rescaling.
BootstrapDraws ks_score_bootstrap(const ObjectiveModel& model, const Vector& theta_hat, long B,
                                  std::uint64_t seed, std::uint64_t stream = 0);

/// State-space resampling for the MA(1): draw innovations iid with
/// replacement from the filtered residuals at theta_hat, regenerate
///   y_t = mu_hat + e_t + psi_hat e_{t-1},
/// and re-fit the nonlinear least squares per replication.
BootstrapDraws state_space_ma1_bootstrap(const Ma1Model& model, const Vector& theta_hat, long B,
                                         const OptimizerConfig& optimizer, std::uint64_t seed,
                                         std::uint64_t stream = 0);

struct BootstrapReport {
  Vector se;
  Vector ci_lower;
  Vector ci_upper;
};

/// SE and percentile interval at level alpha. `recenter_at` replaces the
/// stored center in the interval construction (simulation-based estimates
/// recenter at the point estimate, with the draw mean removed).
BootstrapReport bootstrap_report(const BootstrapDraws& draws, double alpha,
                                 const Vector* recenter_at = nullptr);

}  // namespace freelunch
