#include "freelunch/smd.hpp"

#include <cmath>

#include "freelunch/errors.hpp"
#include "freelunch/stats.hpp"

namespace freelunch {

Matrix gather_rows(const Matrix& data, const std::vector<long>& indices) {
  Matrix out(static_cast<long>(indices.size()), data.cols());
  for (size_t k = 0; k < indices.size(); ++k) out.row(static_cast<long>(k)) = data.row(indices[k]);
  return out;
}

Vector simulated_aux_mean(const SimulatorModel& simulator, const AuxStatistic& aux,
                          const Vector& theta, const Matrix& rows, const ShockSet& shocks) {
  Vector sum = Vector::Zero(aux.dim());
  for (const Matrix& e : shocks.samples) sum += aux.psi(simulator.simulate(theta, rows, e));
  return sum / static_cast<double>(shocks.samples.size());
}

namespace {

void require_finite(const Vector& v, const char* what) {
  if (!v.allFinite()) throw Error(std::string(what) + " is non-finite");
}

// Forward-difference Jacobian of the simulated aux mean with common shocks.
Matrix aux_jacobian(const SimulatorModel& simulator, const AuxStatistic& aux, const Vector& theta,
                    const Matrix& rows, const ShockSet& shocks, const Vector& psi_at_theta,
                    double step) {
  const long d = theta.size();
  Matrix J(aux.dim(), d);
  for (long j = 0; j < d; ++j) {
    Vector tp = theta;
    const double h = step * (1.0 + std::abs(theta[j]));
    tp[j] += h;
    const double h_eff = tp[j] - theta[j];  // exactly representable step
    J.col(j) = (simulated_aux_mean(simulator, aux, tp, rows, shocks) - psi_at_theta) / h_eff;
  }
  return J;
}

}  // namespace

std::pair<SMDChainPair, InferenceReport> run_smd_pair(const SimulatorModel& simulator,
                                                      const AuxStatistic& aux, const Matrix& data,
                                                      const Matrix& W, const SmdConfig& config,
                                                      double alpha) {
  const long d = simulator.theta_dim();
  const long q = aux.dim();
  if (q < d) throw ConfigError("smd needs at least as many auxiliary statistics as parameters");
  if (W.rows() != q || W.cols() != q) throw ConfigError("weight matrix dimension mismatch");
  if (config.theta0.size() != d) throw ConfigError("theta0 has wrong dimension");
  if (config.gamma <= 0.0 || config.gamma > 1.0) throw ConfigError("gamma must lie in (0,1]");
  if (config.S < 1) throw ConfigError("smd needs S >= 1 simulated samples");
  if (config.plan.n != data.rows()) throw ConfigError("plan does not match the data");
  if (config.plan.scheme == ResampleScheme::ExponentialWeights)
    throw ConfigError("smd resampling needs an index scheme");
  config.plan.validate();

  const long burn = config.resolved_burn();
  const long total = burn + config.B;
  const double gamma = config.gamma;

  SMDChainPair pair;
  pair.config = config;
  pair.config.burn = burn;
  pair.W = W;
  pair.n = data.rows();
  pair.m = config.plan.effective_m();
  pair.psi_n = aux.psi(data);
  require_finite(pair.psi_n, "sample auxiliary statistic");
  pair.chain1.resize(config.B, d);
  pair.chain2.resize(config.B, d);
  pair.chain1_burn.resize(burn, d);
  pair.chain2_burn.resize(burn, d);

  Vector theta1 = config.theta0;
  Vector theta2 = Vector::Zero(d);
  long consecutive_rejections = 0;

  for (long t = 1; t <= total; ++t) {
    const std::uint64_t batch_id = config.stream + 2 * static_cast<std::uint64_t>(t);
    const std::uint64_t shock_id = config.stream + 2 * static_cast<std::uint64_t>(t) + 1;
    pair.batch_stream_ids.push_back(batch_id);
    pair.shock_stream_ids.push_back(shock_id);

    RngStream batch_rng(config.seed, batch_id);
    const BatchSelector batch = draw_batch(config.plan, batch_rng);
    const Matrix rows = gather_rows(data, batch.index_list());

    RngStream shock_rng(config.seed, shock_id);
    const ShockSet shocks = simulator.draw_shocks(rows.rows(), config.S, shock_rng);

    bool rejected = false;
    Vector next1 = theta1;
    Vector next2;
    try {
      const Vector psi_m = aux.psi(rows);
      require_finite(psi_m, "batch auxiliary statistic");
      const Vector psi_sim = simulated_aux_mean(simulator, aux, theta1, rows, shocks);
      require_finite(psi_sim, "simulated auxiliary statistic");
      const Matrix J =
          aux_jacobian(simulator, aux, theta1, rows, shocks, psi_sim, config.jacobian_step);
      const Matrix JtW = J.transpose() * W;
      const Matrix hess = 2.0 * JtW * J;  // Gauss-Newton, PD for full-rank J
      const Vector g1 = -2.0 * JtW * (psi_m - psi_sim);
      const Vector g2 = -2.0 * JtW * (psi_m - pair.psi_n);
      next1 = theta1 - gamma * direction(ConditioningKind::InverseHessian, hess, g1,
                                         config.conditioning_options);
      next2 = (1.0 - gamma) * theta2 - gamma * direction(ConditioningKind::InverseHessian, hess,
                                                         g2, config.conditioning_options);
      if (!next1.allFinite() || !next2.allFinite()) rejected = true;
    } catch (const Error&) {
      rejected = true;
    }

    if (rejected) {
      ++pair.rejection_count;
      ++consecutive_rejections;
      if (consecutive_rejections > 100)
        throw DivergenceError("smd chain rejected 100 consecutive proposals; decrease gamma");
    } else {
      consecutive_rejections = 0;
      theta1 = std::move(next1);
      theta2 = std::move(next2);
    }

    if (t <= burn) {
      pair.chain1_burn.row(t - 1) = theta1;
      pair.chain2_burn.row(t - 1) = theta2;
    } else {
      pair.chain1.row(t - burn - 1) = theta1;
      pair.chain2.row(t - burn - 1) = theta2;
    }
  }

  // Point estimate from chain 1, variance from chain 2, intervals from the
  // rescaled chain-2 draws around the chain-1 mean.
  InferenceReport report;
  report.method = "smd_rnr";
  report.gamma = gamma;
  report.m = pair.m;
  report.n = pair.n;
  report.B = config.B;
  report.alpha = alpha;
  report.seed = config.seed;
  report.theta_bar = stats::col_mean(pair.chain1);
  report.V = (static_cast<double>(pair.m) / phi(gamma)) * stats::covariance(pair.chain2);
  report.se = Vector(d);
  report.degenerate.assign(static_cast<size_t>(d), false);
  for (long j = 0; j < d; ++j) {
    const double vjj = std::max(report.V(j, j), 0.0);
    report.se[j] = std::sqrt(vjj / static_cast<double>(pair.n));
    if (vjj == 0.0) report.degenerate[static_cast<size_t>(j)] = true;
  }
  const double scale =
      std::sqrt(static_cast<double>(pair.m) / (static_cast<double>(pair.n) * phi(gamma)));
  report.ci_lower = Vector(d);
  report.ci_upper = Vector(d);
  std::vector<double> column(static_cast<size_t>(config.B));
  for (long j = 0; j < d; ++j) {
    for (long b = 0; b < config.B; ++b)
      column[static_cast<size_t>(b)] = report.theta_bar[j] + scale * pair.chain2(b, j);
    std::sort(column.begin(), column.end());
    report.ci_lower[j] = stats::quantile_sorted(column, alpha / 2.0);
    report.ci_upper[j] = stats::quantile_sorted(column, 1.0 - alpha / 2.0);
  }
  if (config.B >= 30) report.ar1 = ar1_diagnostic(pair.chain1, gamma);
  return {std::move(pair), std::move(report)};
}

ClassicalResult smd_point_estimator(const SimulatorModel& simulator, const AuxStatistic& aux,
                                    const Matrix& data, const Matrix& W, long S,
                                    const Vector& theta0, const OptimizerConfig& optimizer,
                                    std::uint64_t seed, std::uint64_t stream) {
  if (S < 1) throw ConfigError("smd needs S >= 1 simulated samples");
  RngStream rng(seed, stream);
  const ShockSet shocks = simulator.draw_shocks(data.rows(), S, rng);  // fixed across iterations
  const Vector psi_n = aux.psi(data);

  ClassicalResult result;
  result.theta = theta0;
  for (long k = 0; k < optimizer.max_iter; ++k) {
    const Vector psi_sim = simulated_aux_mean(simulator, aux, result.theta, data, shocks);
    const Matrix J = aux_jacobian(simulator, aux, result.theta, data, shocks, psi_sim, 1e-4);
    const Matrix JtW = J.transpose() * W;
    const Vector g = -2.0 * JtW * (psi_n - psi_sim);
    if (g.norm() <= optimizer.tol * (1.0 + result.theta.norm())) {
      result.converged = true;
      return result;
    }
    const Matrix hess = 2.0 * JtW * J;
    result.theta -= optimizer.gamma * direction(ConditioningKind::InverseHessian, hess, g,
                                                optimizer.conditioning_options);
    ++result.iterations;
    if (!result.theta.allFinite()) throw DivergenceError("smd optimization diverged");
  }
  const Vector psi_sim = simulated_aux_mean(simulator, aux, result.theta, data, shocks);
  const Matrix J = aux_jacobian(simulator, aux, result.theta, data, shocks, psi_sim, 1e-4);
  const Vector g = -2.0 * J.transpose() * W * (psi_n - psi_sim);
  result.converged = g.norm() <= optimizer.tol * (1.0 + result.theta.norm());
  return result;
}

// ---------------------------------------------------------------------------
// Dynamic panel

namespace {

// Row layout: [y_0, y_1..y_T, x_1..x_T].
class DynamicPanelSimulator final : public SimulatorModel {
 public:
  explicit DynamicPanelSimulator(long T) : T_(T) {}

  long theta_dim() const override { return 3; }

  ShockSet draw_shocks(long rows, long S, RngStream& rng) const override {
    ShockSet shocks;
    shocks.samples.reserve(static_cast<size_t>(S));
    for (long s = 0; s < S; ++s) {
      Matrix e(rows, T_);
      for (long i = 0; i < rows; ++i)
        for (long t = 0; t < T_; ++t) e(i, t) = rng.normal();
      shocks.samples.push_back(std::move(e));
    }
    return shocks;
  }

  Matrix simulate(const Vector& theta, const Matrix& rows, const Matrix& shocks) const override {
    const double rho = theta[0];
    const double beta = theta[1];
    const double sigma = theta[2];
    Matrix sim = rows;
    for (long i = 0; i < rows.rows(); ++i) {
      double y_prev = rows(i, 0);  // condition on the observed initial level
      for (long t = 1; t <= T_; ++t) {
        const double x = rows(i, T_ + t);
        const double y = rho * y_prev + beta * x + sigma * shocks(i, t - 1);
        sim(i, t) = y;
        y_prev = y;
      }
    }
    return sim;
  }

 private:
  long T_;
};

class LsdvAux final : public AuxStatistic {
 public:
  explicit LsdvAux(long T) : T_(T) {}
  long dim() const override { return 3; }
  Vector psi(const Matrix& rows) const override { return lsdv_statistic(rows, T_); }

 private:
  long T_;
};

}  // namespace

Vector lsdv_statistic(const Matrix& rows, long T) {
  const long n = rows.rows();
  const long span = T - 1;  // regression window t = 2..T
  if (n < 2 || T < 2) throw ConfigError("LSDV needs n >= 2 individuals and T >= 2 periods");

  // Within-transformation per individual over the estimation window, then
  // pooled OLS of demeaned y_t on demeaned (y_{t-1}, x_t).
  Matrix Z(n * span, 2);
  Vector v(n * span);
  long r = 0;
  for (long i = 0; i < n; ++i) {
    double my = 0.0, mylag = 0.0, mx = 0.0;
    for (long t = 2; t <= T; ++t) {
      my += rows(i, t);
      mylag += rows(i, t - 1);
      mx += rows(i, T + t);
    }
    my /= static_cast<double>(span);
    mylag /= static_cast<double>(span);
    mx /= static_cast<double>(span);
    for (long t = 2; t <= T; ++t) {
      v[r] = rows(i, t) - my;
      Z(r, 0) = rows(i, t - 1) - mylag;
      Z(r, 1) = rows(i, T + t) - mx;
      ++r;
    }
  }
  const Matrix ZtZ = Z.transpose() * Z;
  const Vector Ztv = Z.transpose() * v;
  const Vector coef = ZtZ.ldlt().solve(Ztv);
  const double ssr = (v - Z * coef).squaredNorm();
  Vector out(3);
  out << coef[0], coef[1], std::sqrt(ssr / static_cast<double>(n * span));
  return out;
}

DynamicPanelProblem make_dynamic_panel(long T) {
  if (T < 2) throw ConfigError("dynamic panel needs T >= 2");
  DynamicPanelProblem p;
  p.simulator = std::make_shared<DynamicPanelSimulator>(T);
  p.aux = std::make_shared<LsdvAux>(T);
  p.T = T;
  return p;
}

Matrix dynamic_panel_dgp(long n, long T, double rho, double beta, double sigma_e, RngStream& rng) {
  if (std::abs(rho) >= 1.0) throw ConfigError("dynamic panel dgp needs |rho| < 1");
  Matrix rows(n, 1 + 2 * T);
  const double sd0 = std::sqrt((beta * beta + sigma_e * sigma_e) / (1.0 - rho * rho));
  for (long i = 0; i < n; ++i) {
    double y = sd0 * rng.normal();  // stationary start
    rows(i, 0) = y;
    for (long t = 1; t <= T; ++t) {
      const double x = rng.normal();
      rows(i, T + t) = x;
      y = rho * y + beta * x + sigma_e * rng.normal();
      rows(i, t) = y;
    }
  }
  return rows;
}

// ---------------------------------------------------------------------------
// Sample-mean location model

namespace {

class SampleMeanSimulator final : public SimulatorModel {
 public:
  long theta_dim() const override { return 1; }

  ShockSet draw_shocks(long rows, long S, RngStream& rng) const override {
    ShockSet shocks;
    shocks.samples.reserve(static_cast<size_t>(S));
    for (long s = 0; s < S; ++s) {
      Matrix e(rows, 1);
      for (long i = 0; i < rows; ++i) e(i, 0) = rng.normal();
      shocks.samples.push_back(std::move(e));
    }
    return shocks;
  }

  Matrix simulate(const Vector& theta, const Matrix& rows, const Matrix& shocks) const override {
    Matrix sim(rows.rows(), 1);
    for (long i = 0; i < rows.rows(); ++i) sim(i, 0) = theta[0] + shocks(i, 0);
    return sim;
  }
};

class MeanAux final : public AuxStatistic {
 public:
  long dim() const override { return 1; }
  Vector psi(const Matrix& rows) const override {
    Vector out(1);
    out[0] = stats::kahan_mean(rows.col(0).eval());
    return out;
  }
};

}  // namespace

SampleMeanProblem make_sample_mean() {
  SampleMeanProblem p;
  p.simulator = std::make_shared<SampleMeanSimulator>();
  p.aux = std::make_shared<MeanAux>();
  return p;
}

}  // namespace freelunch
