#pragma once

// Shared test utilities: finite-difference oracles (independent of the
// library's derivative code paths), a per-observation quadratic model with a
// closed-form batch minimizer, and small data generators.

#include <cmath>
#include <vector>

#include "freelunch/chains.hpp"
#include "freelunch/models.hpp"

namespace testsupport {

using freelunch::BatchSelector;
using freelunch::Matrix;
using freelunch::ObjectiveModel;
using freelunch::RngStream;
using freelunch::Vector;

// Central differences of the objective value, step h_j = max(1e-6, 1e-7 |theta_j|).
inline Vector fd_gradient(const ObjectiveModel& model, const Vector& theta,
                          const BatchSelector& batch) {
  Vector g(theta.size());
  for (long j = 0; j < theta.size(); ++j) {
    const double h = std::max(1e-6, 1e-7 * std::abs(theta[j]));
    Vector tp = theta, tm = theta;
    tp[j] += h;
    tm[j] -= h;
    const double qp = model.evaluate(tp, batch, false, false).value;
    const double qm = model.evaluate(tm, batch, false, false).value;
    g[j] = (qp - qm) / (tp[j] - tm[j]);
  }
  return g;
}

// Central-difference Jacobian of the analytic gradient (Hessian oracle).
inline Matrix fd_hessian(const ObjectiveModel& model, const Vector& theta,
                         const BatchSelector& batch) {
  const long d = theta.size();
  Matrix H(d, d);
  for (long j = 0; j < d; ++j) {
    const double h = std::max(1e-6, 1e-7 * std::abs(theta[j]));
    Vector tp = theta, tm = theta;
    tp[j] += h;
    tm[j] -= h;
    const Vector gp = model.evaluate(tp, batch, true, false).gradient;
    const Vector gm = model.evaluate(tm, batch, true, false).gradient;
    H.col(j) = (gp - gm) / (tp[j] - tm[j]);
  }
  return 0.5 * (H + H.transpose());
}

// Average of per-observation quadratics q_i = (theta-a_i)' A_i (theta-a_i)/2
// with A_i positive definite; the batch minimizer is available in closed form.
class QuadraticModel : public ObjectiveModel {
 public:
  QuadraticModel(std::vector<Matrix> A, std::vector<Vector> a)
      : ObjectiveModel(a.front().size(), static_cast<long>(a.size())),
        A_(std::move(A)),
        a_(std::move(a)) {
    set_capabilities(true, true, true);
  }

  static QuadraticModel random(long n, long d, RngStream& rng) {
    std::vector<Matrix> A;
    std::vector<Vector> a;
    for (long i = 0; i < n; ++i) {
      Matrix M(d, d);
      for (long r = 0; r < d; ++r)
        for (long c = 0; c < d; ++c) M(r, c) = rng.normal();
      A.push_back(M * M.transpose() + Matrix::Identity(d, d));
      Vector v(d);
      for (long r = 0; r < d; ++r) v[r] = rng.normal();
      a.push_back(v);
    }
    return QuadraticModel(std::move(A), std::move(a));
  }

  // Closed-form minimizer of the batch average (the oracle).
  Vector batch_minimizer(const BatchSelector& batch) const {
    const long d = dimension();
    Matrix S = Matrix::Zero(d, d);
    Vector r = Vector::Zero(d);
    for (long i : batch.index_list()) {
      S += A_[static_cast<size_t>(i)];
      r += A_[static_cast<size_t>(i)] * a_[static_cast<size_t>(i)];
    }
    return S.ldlt().solve(r);
  }

  Matrix observation_scores(const Vector& theta) const override {
    Matrix scores(dimension(), sample_size());
    for (long i = 0; i < sample_size(); ++i)
      scores.col(i) = A_[static_cast<size_t>(i)] * (theta - a_[static_cast<size_t>(i)]);
    return scores;
  }

 protected:
  freelunch::Evaluation evaluate_impl(const Vector& theta, const BatchSelector& batch, bool,
                                      bool) const override {
    const long d = dimension();
    freelunch::Evaluation out;
    out.gradient = Vector::Zero(d);
    out.hessian = Matrix::Zero(d, d);
    double value = 0.0;
    double total = 0.0;
    const auto add = [&](long i, double w) {
      const Vector diff = theta - a_[static_cast<size_t>(i)];
      const Vector Ad = A_[static_cast<size_t>(i)] * diff;
      value += w * 0.5 * diff.dot(Ad);
      out.gradient += w * Ad;
      out.hessian += w * A_[static_cast<size_t>(i)];
      total += w;
    };
    if (batch.is_weighted()) {
      for (long i = 0; i < sample_size(); ++i) add(i, batch.weight_vector()[i]);
    } else {
      for (long i : batch.index_list()) add(i, 1.0);
    }
    out.value = value / total;
    out.gradient /= total;
    out.hessian /= total;
    return out;
  }

 private:
  std::vector<Matrix> A_;
  std::vector<Vector> a_;
};

// A fixed-Hessian quadratic (all observations share A): the textbook case.
inline QuadraticModel shared_quadratic(long n, const Matrix& A, RngStream& rng) {
  std::vector<Matrix> As(static_cast<size_t>(n), A);
  std::vector<Vector> as;
  for (long i = 0; i < n; ++i) {
    Vector v(A.rows());
    for (long r = 0; r < A.rows(); ++r) v[r] = rng.normal();
    as.push_back(v);
  }
  return QuadraticModel(std::move(As), std::move(as));
}

// Random OLS data: y = X theta + noise with an intercept column.
inline freelunch::DataSet random_ols_data(long n, long d, RngStream& rng) {
  freelunch::DataSet data;
  data.rows.resize(n, d + 1);
  for (long i = 0; i < n; ++i) {
    data.rows(i, 1) = 1.0;
    double y = 1.0;
    for (long j = 2; j <= d; ++j) {
      const double x = rng.normal();
      data.rows(i, j) = x;
      y += 0.5 * x;
    }
    data.rows(i, 0) = y + rng.normal();
  }
  data.columns.push_back("y");
  data.columns.push_back("const");
  for (long j = 2; j <= d; ++j) data.columns.push_back("x" + std::to_string(j - 1));
  data.response_col = 0;
  return data;
}

// Closed-form least squares (normal equations oracle).
inline Vector ols_solve(const Matrix& X, const Vector& y) {
  return (X.transpose() * X).ldlt().solve(X.transpose() * y);
}

}  // namespace testsupport
