#pragma once

#include <functional>

#include "freelunch/model.hpp"

namespace freelunch {

/// Least squares: Q = (y - X theta)'(y - X theta) / (2m) on a batch, so
/// G = -X'(y - X theta)/m and H = X'X/m. Requires X of full column rank on
/// the full sample.
class OlsModel : public ObjectiveModel {
 public:
  OlsModel(Matrix X, Vector y);

  const Matrix& X() const { return X_; }
  const Vector& y() const { return y_; }

  Matrix observation_scores(const Vector& theta) const override;

 protected:
  Evaluation evaluate_impl(const Vector& theta, const BatchSelector& batch,
                           bool want_gradient, bool want_hessian) const override;

 private:
  Matrix X_;
  Vector y_;
};

/// Probit negative average log-likelihood (we minimize -loglik/m).
/// Underflowing probabilities are clamped to [1e-12, 1 - 1e-12] by default so
/// chains survive wild burn-in draws; strict mode raises instead.
class ProbitModel : public ObjectiveModel {
 public:
  ProbitModel(Matrix X, Vector y, bool strict = false);

  const Matrix& X() const { return X_; }
  const Vector& y() const { return y_; }

  Matrix observation_scores(const Vector& theta) const override;

 protected:
  Evaluation evaluate_impl(const Vector& theta, const BatchSelector& batch,
                           bool want_gradient, bool want_hessian) const override;

 private:
  Matrix X_;
  Vector y_;
  bool strict_;
};

/// MA(1) nonlinear least squares on filtered residuals
///   e_t(theta) = y_t - mu - psi e_{t-1}(theta),  e_0 = 0,
/// with Q the batch average of e_t^2 and exact recursive derivatives of the
/// one-step predictor x_t = mu + psi e_{t-1}.
///
/// Batch semantics for a time series: a contiguous index block is refiltered
/// from e = 0 at the block start (a moving-block draw); any other index set
/// or a weight vector selects per-observation terms from the full-series
/// recursion. Indices (1..n) therefore coincide with the full sample.
class Ma1Model : public ObjectiveModel {
 public:
  explicit Ma1Model(Vector series);

  const Vector& series() const { return series_; }

  /// Full-series filtered residuals e_1..e_n at theta.
  Vector filtered_residuals(const Vector& theta) const;

  Matrix observation_scores(const Vector& theta) const override;

 protected:
  Evaluation evaluate_impl(const Vector& theta, const BatchSelector& batch,
                           bool want_gradient, bool want_hessian) const override;

 private:
  Vector series_;
};

/// Per-observation moment function: theta, row -> q-vector.
using MomentFn = std::function<Vector(const Vector&, const Eigen::Ref<const Eigen::RowVectorXd>&)>;
/// Optional analytic per-observation moment Jacobian: theta, row -> q x d.
using MomentJacobianFn =
    std::function<Matrix(const Vector&, const Eigen::Ref<const Eigen::RowVectorXd>&)>;

/// Quadratic-form GMM: Q = gbar' W gbar with gbar the batch-averaged moment,
/// gradient 2 (d gbar/d theta)' W gbar. The moment Jacobian is recomputed
/// per batch (finite differences when no analytic one is supplied); the
/// Hessian always comes from central differences of the gradient.
class GmmModel : public ObjectiveModel {
 public:
  GmmModel(Matrix data_rows, long theta_dim, long moment_dim, Matrix W, MomentFn moments,
           MomentJacobianFn jacobian = nullptr);

  long moment_dim() const { return moment_dim_; }

  /// Batch-averaged moment vector at theta.
  Vector mean_moment(const Vector& theta, const BatchSelector& batch) const;

 protected:
  Evaluation evaluate_impl(const Vector& theta, const BatchSelector& batch,
                           bool want_gradient, bool want_hessian) const override;

 private:
  Vector gradient_at(const Vector& theta, const BatchSelector& batch) const;

  Matrix data_;
  long moment_dim_;
  Matrix W_;
  MomentFn moments_;
  MomentJacobianFn jacobian_;
};

ModelPtr make_ols(const DataSet& data);
ModelPtr make_probit(const DataSet& data, bool strict = false);
ModelPtr make_ma1(const Vector& series);
ModelPtr make_gmm(const DataSet& data, long theta_dim, long moment_dim, const Matrix& W,
                  MomentFn moments, MomentJacobianFn jacobian = nullptr);

}  // namespace freelunch
