#pragma once

#include "freelunch/chains.hpp"

namespace freelunch {

struct CouplingReport {
  Matrix linearized;   // (burn + B) x d companion sequence theta*_t
  Vector distance;     // per-iteration ||theta_t - theta*_t||
  double mean_post_burn_distance = 0.0;
  double mean_post_burn_deviation = 0.0;  // mean ||theta_b - theta_hat|| over retained draws
};

/// Replays the chain's batches (from the stored stream ids) through the
/// linear AR(1) companion process
///   theta*_{t+1} - theta_hat = Psi (theta*_t - theta_hat) - gamma P G_t(theta_hat)
/// started at theta*_0 = theta_0, with Psi = (1-gamma) I and P the
/// batch-Hessian inverse at theta_hat for inverse-Hessian chains, and
/// Psi = I - gamma H_n(theta_hat), P = I for identity chains. For an exactly
/// quadratic objective the inverse-Hessian chain reproduces this sequence
/// term for term, so the distance is zero up to roundoff; for non-quadratic
/// objectives the distance scales like 1/m.
///
/// Defined for identity and inverse-Hessian conditioning; requires the
/// replay metadata recorded in the history.
CouplingReport coupling_sequence(const ObjectiveModel& model, const Vector& theta_hat,
                                 const DrawHistory& history);

}  // namespace freelunch
