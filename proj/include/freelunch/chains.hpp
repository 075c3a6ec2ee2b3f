#pragma once

#include <limits>
#include <utility>

#include "freelunch/conditioning.hpp"
#include "freelunch/inference.hpp"
#include "freelunch/model.hpp"
#include "freelunch/resampling.hpp"

namespace freelunch {

/// Burn-in so the initialization bias is about 1% of the starting error:
/// 1 + round(log(0.01) / log(1 - gamma)); one step suffices at gamma = 1.
long default_burn(double gamma);

struct ChainConfig {
  double gamma = 0.1;           // fixed learning rate in (0, 1]
  long B = 1000;                // retained draws
  long burn = -1;               // -1: default_burn(gamma)
  Vector theta0;
  ConditioningKind conditioning = ConditioningKind::InverseHessian;
  ConditioningOptions conditioning_options;
  ResamplePlan plan;
  double rejection_factor = 6.0;  // infinity disables the safeguard
  long hessian_every_k = 1;       // refresh cadence of the conditioning Hessian
  std::uint64_t seed = 0;
  std::uint64_t stream = 0;       // iteration t draws its batch from stream + t

  long resolved_burn() const { return burn >= 0 ? burn : default_burn(gamma); }
  void validate(const ObjectiveModel& model) const;
};

/// The draws of one chain run. Retained draws are re-indexed 1..B after the
/// burn-in; burn draws are kept for diagnostics. batch_stream_ids has one
/// entry per iteration (burn first), enabling exact batch replay.
struct DrawHistory {
  Matrix draws;        // B x d
  Matrix burn_draws;   // burn x d
  long rejection_count = 0;
  std::vector<std::uint64_t> batch_stream_ids;  // burn + B entries
  ChainConfig config;
  long n = 0;          // sample size
  long m = 0;          // effective batch size for the variance adjustment

  Matrix all_draws() const;  // burn draws stacked over retained draws
};

/// One pass of the resampling chain: per iteration, draw a batch, evaluate
/// the batch gradient (and Hessian when the conditioning needs it) at the
/// current draw, and update theta <- theta - gamma * P g. A proposal whose
/// full-sample objective exceeds rejection_factor times the current one is
/// discarded (the chain stays put, the draw repeats, the event is counted,
/// and a BFGS approximation is reset to the full-sample Hessian). More than
/// 50 rejections in a 100-iteration window raises DivergenceError.
DrawHistory run_resampled_chain(const ObjectiveModel& model, const ChainConfig& config);

/// The chain above with inverse-Hessian conditioning (the inference-valid
/// choice; the symmetrized-sqrt and BFGS forms are allowed when explicitly
/// configured), followed by the adjusted-variance summary of the retained
/// draws.
std::pair<DrawHistory, InferenceReport> run_free_lunch(const ObjectiveModel& model,
                                                       const ChainConfig& config,
                                                       double alpha = 0.05);

struct ClassicalResult {
  Vector theta;
  long iterations = 0;
  bool converged = false;
};

/// Options for the classical (full-sample or per-replication) optimizers.
struct OptimizerConfig {
  double gamma = 1.0;
  long max_iter = 200;
  double tol = 1e-10;
  ConditioningOptions conditioning_options;
};

/// Damped Newton (or gradient) minimization of one batch objective, shared
/// by the classical fits and the bootstrap refits: base rate gamma with
/// monotone step halving, and a symmetrized-sqrt fallback when the repaired
/// Newton direction is not a descent direction. Stops when
/// ||G|| <= tol (1 + ||theta||).
ClassicalResult minimize_batch(const ObjectiveModel& model, const BatchSelector& batch,
                               const Vector& theta0, const OptimizerConfig& optimizer,
                               ConditioningKind kind = ConditioningKind::InverseHessian);

/// Full-sample damped Newton; stops when ||G|| <= tol (1 + ||theta||).
ClassicalResult classical_newton(const ObjectiveModel& model, const Vector& theta0, double gamma,
                                 long max_iter, double tol,
                                 const ConditioningOptions& options = {});

/// Full-sample gradient descent with the same stopping rule.
ClassicalResult classical_gd(const ObjectiveModel& model, const Vector& theta0, double gamma,
                             long max_iter, double tol);

struct SgdResult {
  Vector theta_bar;  // Polyak-Ruppert average of the iterates
  Matrix trace;      // K x d iterates
};

/// Stochastic gradient descent with vanishing rate gamma_k = gamma k^{-delta},
/// delta in (1/2, 1], on iid batches of size m, with Polyak-Ruppert averaging.
SgdResult sgd_polyak(const ObjectiveModel& model, const Vector& theta0, double gamma, double delta,
                     long m, long K, std::uint64_t seed, std::uint64_t stream = 0);

struct ContractionReport {
  double A = 1.0;            // 1 - 2 gamma p_min + gamma^2 p_max^2
  double rate = 1.0;         // sqrt(A) when A >= 0
  bool contraction = false;  // A in [0, 1)
  double lambda_min_H = 0.0, lambda_max_H = 0.0;  // Hessian range over the grid
  double product_min = 0.0, product_max = 0.0;    // eigenvalue bounds of P H
};

/// Contraction factor of the deterministic iteration, with eigenvalue bounds
/// of the full-sample Hessian estimated over a user-supplied grid of points.
/// Identity conditioning bounds eig(H) directly; inverse-Hessian conditioning
/// bounds eig(H(a)^{-1} H(b)) over grid pairs, which collapses to 1 (and
/// A = (1-gamma)^2) when the Hessian is constant.
ContractionReport contraction_factor(const ObjectiveModel& model, const std::vector<Vector>& grid,
                                     double gamma, ConditioningKind kind);

}  // namespace freelunch
