#pragma once

#include "freelunch/dataset.hpp"

namespace freelunch {

enum class ConditioningKind {
  Identity,                 // gradient descent
  InverseHessian,           // Newton-Raphson
  InverseSqrtSymmetrized,   // (H'H)^{-1/2}, positive definite by construction
  BFGSApprox,               // (H'H)^{-1/2} applied to a BFGS approximation
};

const char* to_string(ConditioningKind kind);
ConditioningKind conditioning_from_string(const std::string& name);

/// Ridge added to a Hessian whose smallest eigenvalue fails the PD check
/// (lambda_min <= 1e-10 * ||H||). A value of 0 requests the default
/// 1e-6 * trace(H)/d at the point of use.
struct ConditioningOptions {
  double pd_repair_c = 0.0;
};

/// The step P g for the given conditioning. InverseHessian solves
/// (H + cI) x = g with a pivoted symmetric factorization (no explicit
/// inverse), c = 0 unless the PD check fails. InverseSqrtSymmetrized forms
/// (H'H)^{-1/2} g through the eigendecomposition of H'H. Throws
/// ConditioningError (with the spectrum) when the system stays singular
/// after repair.
Vector direction(ConditioningKind kind, const Matrix& H, const Vector& g,
                 const ConditioningOptions& options = {});

/// BFGS approximation of the Hessian, updated from successive
/// (theta, gradient) pairs. Owned by exactly one chain.
struct BFGSState {
  Matrix approximation;  // symmetric d x d
  Vector theta;
  Vector gradient;

  static BFGSState initialize(const Matrix& hessian, const Vector& theta, const Vector& gradient);
};

/// Secant update with s = theta_new - theta_old, y = g_new - g_old. The
/// update is skipped (state advances, approximation kept) when
/// s'y <= 1e-10 ||s|| ||y||; skipping is the degenerate-curvature contract.
BFGSState bfgs_update(const BFGSState& state, const Vector& theta_new, const Vector& g_new);

}  // namespace freelunch
