#include "freelunch/models.hpp"

#include <cmath>

#include "freelunch/errors.hpp"
#include "freelunch/stats.hpp"

namespace freelunch {

namespace {

std::vector<double> to_std(const Vector& v) {
  return std::vector<double>(v.data(), v.data() + v.size());
}

void require_finite_theta(const Vector& theta) {
  for (long j = 0; j < theta.size(); ++j)
    if (!std::isfinite(theta[j]))
      throw EvaluationError("non-finite parameter vector", to_std(theta));
}

// Accumulates per-observation terms either over an index list (unit weight,
// divisor m) or over all rows with weights (divisor = total weight). The two
// paths apply the same operations in the same row order, so unit weights and
// the identity index list agree bit for bit.
template <typename AddTerm>
double accumulate_batch(const BatchSelector& batch, long n, AddTerm&& add) {
  if (batch.is_weighted()) {
    const Vector& w = batch.weight_vector();
    double total = 0.0;
    for (long i = 0; i < n; ++i) {
      add(i, w[i]);
      total += w[i];
    }
    return total;
  }
  for (long i : batch.index_list()) add(i, 1.0);
  return static_cast<double>(batch.index_list().size());
}

}  // namespace

Evaluation ObjectiveModel::evaluate(const Vector& theta, const BatchSelector& batch,
                                    bool want_gradient, bool want_hessian) const {
  if (theta.size() != dimension_)
    throw ConfigError("parameter vector has wrong dimension");
  require_finite_theta(theta);
  batch.validate(sample_size_);
  return evaluate_impl(theta, batch, want_gradient || want_hessian, want_hessian);
}

Evaluation ObjectiveModel::evaluate_full(const Vector& theta, bool want_gradient,
                                         bool want_hessian) const {
  return evaluate(theta, BatchSelector::full_sample(sample_size_), want_gradient, want_hessian);
}

double ObjectiveModel::value_full(const Vector& theta) const {
  return evaluate(theta, BatchSelector::full_sample(sample_size_), false, false).value;
}

Matrix ObjectiveModel::observation_scores(const Vector&) const {
  throw CapabilityError("model does not expose per-observation scores");
}

// ---------------------------------------------------------------------------
// OLS

OlsModel::OlsModel(Matrix X, Vector y)
    : ObjectiveModel(X.cols(), X.rows()), X_(std::move(X)), y_(std::move(y)) {
  if (X_.rows() != y_.size()) throw ConfigError("response length must match the design matrix");
  Eigen::ColPivHouseholderQR<Matrix> qr(X_);
  if (qr.rank() < X_.cols())
    throw ConfigError("design matrix is rank deficient on the full sample");
  set_capabilities(true, true, true);
}

Evaluation OlsModel::evaluate_impl(const Vector& theta, const BatchSelector& batch,
                                   bool want_gradient, bool want_hessian) const {
  const long d = dimension();
  Evaluation out;
  out.gradient = Vector::Zero(d);
  Matrix hess = Matrix::Zero(d, d);
  double value = 0.0;
  const double total = accumulate_batch(batch, sample_size(), [&](long i, double w) {
    const double r = y_[i] - X_.row(i).dot(theta);
    value += w * (0.5 * r * r);
    if (want_gradient) out.gradient.noalias() -= (w * r) * X_.row(i).transpose();
    if (want_hessian) hess.selfadjointView<Eigen::Lower>().rankUpdate(X_.row(i).transpose(), w);
  });
  out.value = value / total;
  if (want_gradient) out.gradient /= total;
  if (want_hessian) out.hessian = Matrix(hess.selfadjointView<Eigen::Lower>()) / total;
  if (!std::isfinite(out.value))
    throw EvaluationError("non-finite least-squares objective", to_std(theta));
  return out;
}

Matrix OlsModel::observation_scores(const Vector& theta) const {
  Matrix scores(dimension(), sample_size());
  for (long i = 0; i < sample_size(); ++i) {
    const double r = y_[i] - X_.row(i).dot(theta);
    scores.col(i) = -r * X_.row(i).transpose();
  }
  return scores;
}

// ---------------------------------------------------------------------------
// Probit

namespace {

constexpr double kProbitClamp = 1e-12;

struct ProbitTerms {
  double nll;     // -loglik contribution
  double lambda;  // d loglik / d score (generalized residual)
  double wgt;     // -d2 loglik / d score2
  bool clamped;
};

ProbitTerms probit_terms(double s, double y, bool strict, const Vector& theta, long obs) {
  double Phi = stats::norm_cdf(s);
  bool clamped = false;
  if (Phi < kProbitClamp || Phi > 1.0 - kProbitClamp) {
    if (strict)
      throw EvaluationError("probit probability underflow in strict mode",
                            std::vector<double>(theta.data(), theta.data() + theta.size()), obs);
    Phi = std::min(std::max(Phi, kProbitClamp), 1.0 - kProbitClamp);
    clamped = true;
  }
  const double phi = stats::norm_pdf(s);
  const double lambda = y * phi / Phi - (1.0 - y) * phi / (1.0 - Phi);
  ProbitTerms t;
  t.nll = -(y * std::log(Phi) + (1.0 - y) * std::log(1.0 - Phi));
  t.lambda = lambda;
  t.wgt = lambda * (s + lambda);
  t.clamped = clamped;
  return t;
}

}  // namespace

ProbitModel::ProbitModel(Matrix X, Vector y, bool strict)
    : ObjectiveModel(X.cols(), X.rows()), X_(std::move(X)), y_(std::move(y)), strict_(strict) {
  if (X_.rows() != y_.size()) throw ConfigError("response length must match the design matrix");
  for (long i = 0; i < y_.size(); ++i)
    if (y_[i] != 0.0 && y_[i] != 1.0)
      throw ConfigError("probit response must be binary in {0,1}");
  set_capabilities(true, true, true);
}

Evaluation ProbitModel::evaluate_impl(const Vector& theta, const BatchSelector& batch,
                                      bool want_gradient, bool want_hessian) const {
  const long d = dimension();
  Evaluation out;
  out.gradient = Vector::Zero(d);
  Matrix hess = Matrix::Zero(d, d);
  double value = 0.0;
  long clamps = 0;
  const double total = accumulate_batch(batch, sample_size(), [&](long i, double w) {
    const double s = X_.row(i).dot(theta);
    if (!std::isfinite(s)) throw EvaluationError("non-finite probit index", to_std(theta), i);
    const ProbitTerms t = probit_terms(s, y_[i], strict_, theta, i);
    if (t.clamped) ++clamps;
    value += w * t.nll;
    if (want_gradient) out.gradient.noalias() -= (w * t.lambda) * X_.row(i).transpose();
    if (want_hessian)
      hess.selfadjointView<Eigen::Lower>().rankUpdate(X_.row(i).transpose(), w * t.wgt);
  });
  out.value = value / total;
  if (want_gradient) out.gradient /= total;
  if (want_hessian) out.hessian = Matrix(hess.selfadjointView<Eigen::Lower>()) / total;
  out.clamp_events = clamps;
  return out;
}

Matrix ProbitModel::observation_scores(const Vector& theta) const {
  Matrix scores(dimension(), sample_size());
  for (long i = 0; i < sample_size(); ++i) {
    const double s = X_.row(i).dot(theta);
    const ProbitTerms t = probit_terms(s, y_[i], strict_, theta, i);
    scores.col(i) = -t.lambda * X_.row(i).transpose();
  }
  return scores;
}

// ---------------------------------------------------------------------------
// MA(1)

namespace {

// Exact derivative recursions of the filtered residual
//   e_t = y_t - mu - psi e_{t-1}
// with zero initial state. d2e/dmu2 is identically zero and is omitted.
struct Ma1State {
  double e = 0.0;
  double de_mu = 0.0;
  double de_psi = 0.0;
  double d2e_mupsi = 0.0;
  double d2e_psipsi = 0.0;

  void step(double y, double mu, double psi) {
    const double e_prev = e;
    const double de_mu_prev = de_mu;
    const double de_psi_prev = de_psi;
    e = y - mu - psi * e_prev;
    de_mu = -1.0 - psi * de_mu_prev;
    de_psi = -e_prev - psi * de_psi_prev;
    d2e_mupsi = -de_mu_prev - psi * d2e_mupsi;
    d2e_psipsi = -2.0 * de_psi_prev - psi * d2e_psipsi;
  }
};

struct Ma1Contribution {
  double q;
  double g0, g1;
  double h00, h01, h11;
};

Ma1Contribution ma1_contribution(const Ma1State& s) {
  Ma1Contribution c;
  c.q = s.e * s.e;
  c.g0 = 2.0 * s.e * s.de_mu;
  c.g1 = 2.0 * s.e * s.de_psi;
  c.h00 = 2.0 * s.de_mu * s.de_mu;  // d2e/dmu2 == 0
  c.h01 = 2.0 * (s.de_mu * s.de_psi + s.e * s.d2e_mupsi);
  c.h11 = 2.0 * (s.de_psi * s.de_psi + s.e * s.d2e_psipsi);
  return c;
}

}  // namespace

Ma1Model::Ma1Model(Vector series) : ObjectiveModel(2, series.size()), series_(std::move(series)) {
  if (series_.size() < 2) throw ConfigError("MA(1) series needs at least two observations");
}

Vector Ma1Model::filtered_residuals(const Vector& theta) const {
  Ma1State s;
  Vector e(series_.size());
  for (long t = 0; t < series_.size(); ++t) {
    s.step(series_[t], theta[0], theta[1]);
    e[t] = s.e;
  }
  return e;
}

Evaluation Ma1Model::evaluate_impl(const Vector& theta, const BatchSelector& batch, bool,
                                   bool) const {
  const double mu = theta[0];
  const double psi = theta[1];
  const long n = sample_size();

  double q = 0.0;
  double g0 = 0.0, g1 = 0.0, h00 = 0.0, h01 = 0.0, h11 = 0.0;
  double total = 0.0;
  const auto add = [&](const Ma1Contribution& c, double w) {
    q += w * c.q;
    g0 += w * c.g0;
    g1 += w * c.g1;
    h00 += w * c.h00;
    h01 += w * c.h01;
    h11 += w * c.h11;
    total += w;
  };
  const auto check_overflow = [&](const Ma1State& s, long t) {
    if (!(std::abs(s.e) < 1e150))
      throw EvaluationError("MA(1) residual recursion overflow (|psi| too large)", to_std(theta), t);
  };

  if (!batch.is_weighted() && batch.is_contiguous_block()) {
    // Moving-block draw: refilter from zero state at the block start.
    Ma1State s;
    for (long t : batch.index_list()) {
      s.step(series_[t], mu, psi);
      check_overflow(s, t);
      add(ma1_contribution(s), 1.0);
    }
  } else {
    // Full-series recursion; the batch picks per-observation terms.
    std::vector<Ma1Contribution> contrib(static_cast<size_t>(n));
    Ma1State s;
    for (long t = 0; t < n; ++t) {
      s.step(series_[t], mu, psi);
      check_overflow(s, t);
      contrib[static_cast<size_t>(t)] = ma1_contribution(s);
    }
    if (batch.is_weighted()) {
      const Vector& w = batch.weight_vector();
      for (long t = 0; t < n; ++t) add(contrib[static_cast<size_t>(t)], w[t]);
    } else {
      for (long t : batch.index_list()) add(contrib[static_cast<size_t>(t)], 1.0);
    }
  }

  Evaluation out;
  out.value = q / total;
  out.gradient = Vector(2);
  out.gradient << g0 / total, g1 / total;
  out.hessian = Matrix(2, 2);
  out.hessian << h00 / total, h01 / total, h01 / total, h11 / total;
  return out;
}

Matrix Ma1Model::observation_scores(const Vector& theta) const {
  const long n = sample_size();
  Matrix scores(2, n);
  Ma1State s;
  for (long t = 0; t < n; ++t) {
    s.step(series_[t], theta[0], theta[1]);
    const Ma1Contribution c = ma1_contribution(s);
    scores(0, t) = c.g0;
    scores(1, t) = c.g1;
  }
  return scores;
}

// ---------------------------------------------------------------------------
// GMM

GmmModel::GmmModel(Matrix data_rows, long theta_dim, long moment_dim, Matrix W, MomentFn moments,
                   MomentJacobianFn jacobian)
    : ObjectiveModel(theta_dim, data_rows.rows()),
      data_(std::move(data_rows)),
      moment_dim_(moment_dim),
      W_(std::move(W)),
      moments_(std::move(moments)),
      jacobian_(std::move(jacobian)) {
  if (moment_dim_ < theta_dim) throw ConfigError("GMM needs at least as many moments as parameters");
  if (W_.rows() != moment_dim_ || W_.cols() != moment_dim_)
    throw ConfigError("weight matrix dimension must match the moment dimension");
  if ((W_ - W_.transpose()).cwiseAbs().maxCoeff() > 1e-10 * (1.0 + W_.cwiseAbs().maxCoeff()))
    throw ConfigError("weight matrix must be symmetric");
  Eigen::SelfAdjointEigenSolver<Matrix> es(W_);
  if (es.eigenvalues().minCoeff() < -1e-10 * std::max(1.0, es.eigenvalues().cwiseAbs().maxCoeff()))
    throw ConfigError("weight matrix must be positive semi-definite");
  set_capabilities(static_cast<bool>(jacobian_), false, false);
}

Vector GmmModel::mean_moment(const Vector& theta, const BatchSelector& batch) const {
  Vector g = Vector::Zero(moment_dim_);
  const double total = accumulate_batch(batch, sample_size(), [&](long i, double w) {
    const Vector gi = moments_(theta, data_.row(i));
    if (gi.size() != moment_dim_) throw ConfigError("moment function returned wrong dimension");
    for (long k = 0; k < gi.size(); ++k)
      if (!std::isfinite(gi[k]))
        throw EvaluationError("non-finite moment value", to_std(theta), i);
    g.noalias() += w * gi;
  });
  return g / total;
}

Vector GmmModel::gradient_at(const Vector& theta, const BatchSelector& batch) const {
  const Vector gbar = mean_moment(theta, batch);
  Matrix J(moment_dim_, dimension());
  if (jacobian_) {
    J.setZero();
    const double total = accumulate_batch(batch, sample_size(), [&](long i, double w) {
      J.noalias() += w * jacobian_(theta, data_.row(i));
    });
    J /= total;
  } else {
    for (long j = 0; j < dimension(); ++j) {
      const double h = 1e-6 * std::max(1.0, std::abs(theta[j]));
      Vector tp = theta, tm = theta;
      tp[j] += h;
      tm[j] -= h;
      J.col(j) = (mean_moment(tp, batch) - mean_moment(tm, batch)) / (2.0 * h);
    }
  }
  return 2.0 * J.transpose() * W_ * gbar;
}

Evaluation GmmModel::evaluate_impl(const Vector& theta, const BatchSelector& batch,
                                   bool want_gradient, bool want_hessian) const {
  Evaluation out;
  const Vector gbar = mean_moment(theta, batch);
  out.value = gbar.dot(W_ * gbar);
  if (want_gradient) out.gradient = gradient_at(theta, batch);
  if (want_hessian) {
    Matrix H(dimension(), dimension());
    for (long j = 0; j < dimension(); ++j) {
      const double h = 1e-4 * std::max(1.0, std::abs(theta[j]));
      Vector tp = theta, tm = theta;
      tp[j] += h;
      tm[j] -= h;
      H.col(j) = (gradient_at(tp, batch) - gradient_at(tm, batch)) / (2.0 * h);
    }
    out.hessian = 0.5 * (H + H.transpose());
  }
  return out;
}

// ---------------------------------------------------------------------------
// Factories

ModelPtr make_ols(const DataSet& data) {
  data.validate();
  return std::make_shared<OlsModel>(data.design(), data.response());
}

ModelPtr make_probit(const DataSet& data, bool strict) {
  data.validate();
  return std::make_shared<ProbitModel>(data.design(), data.response(), strict);
}

ModelPtr make_ma1(const Vector& series) { return std::make_shared<Ma1Model>(series); }

ModelPtr make_gmm(const DataSet& data, long theta_dim, long moment_dim, const Matrix& W,
                  MomentFn moments, MomentJacobianFn jacobian) {
  data.validate();
  return std::make_shared<GmmModel>(data.rows, theta_dim, moment_dim, W, std::move(moments),
                                    std::move(jacobian));
}

}  // namespace freelunch
