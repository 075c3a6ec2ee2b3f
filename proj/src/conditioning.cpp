#include "freelunch/conditioning.hpp"

#include <cmath>

#include "freelunch/errors.hpp"

namespace freelunch {

const char* to_string(ConditioningKind kind) {
  switch (kind) {
    case ConditioningKind::Identity: return "identity";
    case ConditioningKind::InverseHessian: return "inverse_hessian";
    case ConditioningKind::InverseSqrtSymmetrized: return "inverse_sqrt_symmetrized";
    case ConditioningKind::BFGSApprox: return "bfgs";
  }
  return "unknown";
}

ConditioningKind conditioning_from_string(const std::string& name) {
  if (name == "identity") return ConditioningKind::Identity;
  if (name == "inverse_hessian") return ConditioningKind::InverseHessian;
  if (name == "inverse_sqrt_symmetrized") return ConditioningKind::InverseSqrtSymmetrized;
  if (name == "bfgs") return ConditioningKind::BFGSApprox;
  throw ConfigError("unknown conditioning kind: " + name);
}

namespace {

double repair_constant(const Matrix& H, const ConditioningOptions& options) {
  if (options.pd_repair_c > 0.0) return options.pd_repair_c;
  const double trace = H.trace();
  return 1e-6 * std::abs(trace) / static_cast<double>(H.rows());
}

std::vector<double> spectrum_of(const Vector& eigenvalues) {
  return std::vector<double>(eigenvalues.data(), eigenvalues.data() + eigenvalues.size());
}

Vector solve_spd(const Matrix& A, const Vector& g, const Vector& eigenvalues) {
  Eigen::LDLT<Matrix> ldlt(A);
  if (ldlt.info() != Eigen::Success)
    throw ConditioningError("conditioning solve failed", spectrum_of(eigenvalues));
  Vector x = ldlt.solve(g);
  // Pivoting fallback for matrices LDLT mishandles.
  if (!x.allFinite() || (A * x - g).norm() > 1e-8 * (1.0 + g.norm())) {
    x = Eigen::FullPivLU<Matrix>(A).solve(g);
    if (!x.allFinite() || (A * x - g).norm() > 1e-6 * (1.0 + g.norm()))
      throw ConditioningError("conditioning system singular after repair", spectrum_of(eigenvalues));
  }
  return x;
}

Vector inverse_sqrt_direction(const Matrix& H, const Vector& g, const ConditioningOptions& options) {
  const Matrix HtH = H.transpose() * H;
  Eigen::SelfAdjointEigenSolver<Matrix> es(HtH);
  Vector lambda = es.eigenvalues();
  const double lmax = lambda.cwiseAbs().maxCoeff();
  if (lambda.minCoeff() <= 1e-10 * lmax) {
    const double c = repair_constant(HtH, options);
    lambda.array() += c;
    if (lambda.minCoeff() <= 0.0)
      throw ConditioningError("H'H singular after repair", spectrum_of(es.eigenvalues()));
  }
  const Vector inv_sqrt = lambda.cwiseSqrt().cwiseInverse();
  return es.eigenvectors() * (inv_sqrt.asDiagonal() * (es.eigenvectors().transpose() * g));
}

}  // namespace

Vector direction(ConditioningKind kind, const Matrix& H, const Vector& g,
                 const ConditioningOptions& options) {
  switch (kind) {
    case ConditioningKind::Identity:
      return g;
    case ConditioningKind::InverseHessian: {
      Eigen::SelfAdjointEigenSolver<Matrix> es(H, Eigen::EigenvaluesOnly);
      const Vector& lambda = es.eigenvalues();
      const double norm = lambda.cwiseAbs().maxCoeff();
      double c = 0.0;
      if (lambda.minCoeff() <= 1e-10 * norm) c = repair_constant(H, options);
      const Matrix A = (c == 0.0) ? H : Matrix(H + c * Matrix::Identity(H.rows(), H.cols()));
      return solve_spd(A, g, lambda);
    }
    case ConditioningKind::InverseSqrtSymmetrized:
    case ConditioningKind::BFGSApprox:
      return inverse_sqrt_direction(H, g, options);
  }
  throw Error("unreachable conditioning kind");
}

BFGSState BFGSState::initialize(const Matrix& hessian, const Vector& theta, const Vector& gradient) {
  BFGSState s;
  s.approximation = 0.5 * (hessian + hessian.transpose());
  s.theta = theta;
  s.gradient = gradient;
  return s;
}

BFGSState bfgs_update(const BFGSState& state, const Vector& theta_new, const Vector& g_new) {
  const Vector s = theta_new - state.theta;
  const Vector y = g_new - state.gradient;
  BFGSState next = state;
  next.theta = theta_new;
  next.gradient = g_new;

  const double sy = s.dot(y);
  if (sy <= 1e-10 * s.norm() * y.norm()) return next;  // degenerate curvature: keep approximation

  const Matrix& B = state.approximation;
  const Vector Bs = B * s;
  const double sBs = s.dot(Bs);
  if (sBs <= 0.0) return next;
  next.approximation = B - (Bs * Bs.transpose()) / sBs + (y * y.transpose()) / sy;
  next.approximation = 0.5 * (next.approximation + next.approximation.transpose().eval());
  return next;
}

}  // namespace freelunch
