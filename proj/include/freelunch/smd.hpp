#pragma once

#include <memory>
#include <utility>

#include "freelunch/chains.hpp"

namespace freelunch {

/// Shocks for S simulated samples, redrawn every chain iteration and reused
/// across the Jacobian evaluations within the iteration (common random
/// numbers).
struct ShockSet {
  std::vector<Matrix> samples;  // one entry per s = 1..S
};

/// Simulates data at theta, conditioning on the resampled rows (initial
/// conditions, covariates). simulate() must be deterministic given
/// (theta, rows, shocks).
class SimulatorModel {
 public:
  virtual ~SimulatorModel() = default;
  virtual long theta_dim() const = 0;
  virtual ShockSet draw_shocks(long rows, long S, RngStream& rng) const = 0;
  virtual Matrix simulate(const Vector& theta, const Matrix& conditioning_rows,
                          const Matrix& shocks) const = 0;
};

/// Auxiliary statistic psi: dataset rows -> q-vector, q >= theta dim.
class AuxStatistic {
 public:
  virtual ~AuxStatistic() = default;
  virtual long dim() const = 0;
  virtual Vector psi(const Matrix& data_rows) const = 0;
};

using SimulatorPtr = std::shared_ptr<const SimulatorModel>;
using AuxPtr = std::shared_ptr<const AuxStatistic>;

Matrix gather_rows(const Matrix& data, const std::vector<long>& indices);

/// (1/S) sum_s psi(simulate(theta, rows, shocks_s)).
Vector simulated_aux_mean(const SimulatorModel& simulator, const AuxStatistic& aux,
                          const Vector& theta, const Matrix& rows, const ShockSet& shocks);

struct SmdConfig {
  double gamma = 0.3;
  long B = 1000;
  long burn = -1;  // -1: default_burn(gamma)
  Vector theta0;   // chain 1 start; chain 2 always starts at zero
  long S = 1;
  ResamplePlan plan;  // index scheme over data rows
  ConditioningOptions conditioning_options;
  std::uint64_t seed = 0;
  std::uint64_t stream = 0;
  double jacobian_step = 1e-4;  // forward difference: h = step * (1 + |theta_j|)

  long resolved_burn() const { return burn >= 0 ? burn : default_burn(gamma); }
};

/// Both chains of the simulation-based run. At every iteration the two
/// chains consumed the identical batch, shocks, Jacobian and conditioning
/// matrix; only the gradient residual differs (simulated aux vs sample aux).
struct SMDChainPair {
  Matrix chain1;  // B x d, point-estimate chain
  Matrix chain2;  // B x d, variance chain
  Matrix chain1_burn;
  Matrix chain2_burn;
  long rejection_count = 0;
  std::vector<std::uint64_t> batch_stream_ids;  // burn + B entries
  std::vector<std::uint64_t> shock_stream_ids;  // burn + B entries
  SmdConfig config;
  Matrix W;
  long n = 0;
  long m = 0;
  Vector psi_n;  // sample auxiliary statistic
};

/// Two-chain simulated-minimum-distance run. Per iteration: resample a batch
/// and compute its auxiliary statistic; redraw shocks and simulate S samples
/// at the current chain-1 draw; build the forward-difference Jacobian J with
/// common shocks and the Gauss-Newton matrix 2 J'WJ (PD-repaired) as
/// conditioning. Chain 1 moves on the simulated residual
/// psi_m - psi_{m,S}(theta); chain 2 follows
///   theta2 <- (1-gamma) theta2 - gamma P G~,  G~ = -2 J'W (psi_m - psi_n),
/// which strips the simulation noise from the innovation. The report takes
/// the point estimate from chain 1 and the adjusted variance from chain 2;
/// intervals come from the quantiles of
///   theta_bar + sqrt(m/(n phi(gamma))) theta2_b.
/// A simulation failure at a proposed draw discards the draw and is counted.
std::pair<SMDChainPair, InferenceReport> run_smd_pair(const SimulatorModel& simulator,
                                                      const AuxStatistic& aux, const Matrix& data,
                                                      const Matrix& W, const SmdConfig& config,
                                                      double alpha = 0.05);

/// Classical simulated-minimum-distance point estimate: Gauss-Newton
/// minimization of ||psi_n - psi_{n,S}(theta)||^2_W with the shocks drawn
/// once and held fixed across the optimization.
ClassicalResult smd_point_estimator(const SimulatorModel& simulator, const AuxStatistic& aux,
                                    const Matrix& data, const Matrix& W, long S,
                                    const Vector& theta0, const OptimizerConfig& optimizer,
                                    std::uint64_t seed, std::uint64_t stream = 0);

// ---------------------------------------------------------------------------
// Concrete problems

/// Dynamic panel y_it = rho y_it-1 + x_it' beta + sigma_e e_it with
/// individual rows laid out as [y_0, y_1..y_T, x_1..x_T]. The auxiliary
/// statistic is the within (LSDV) regression of demeaned y_2:T on demeaned
/// y_1:T-1 and x_2:T plus the residual standard deviation; the simulator
/// regenerates y_1..y_T from the row's own y_0 and covariates with fresh
/// shocks. theta = (rho, beta, sigma_e).
struct DynamicPanelProblem {
  SimulatorPtr simulator;
  AuxPtr aux;
  long T = 0;
};

DynamicPanelProblem make_dynamic_panel(long T);

/// Generates a panel from the same design: stationary y_0, x iid standard
/// normal. Rows match the simulator layout.
Matrix dynamic_panel_dgp(long n, long T, double rho, double beta, double sigma_e, RngStream& rng);

/// LSDV (within) estimate on panel rows: (rho, beta, residual sd).
Vector lsdv_statistic(const Matrix& rows, long T);

/// Location model y_i = theta + e_i with psi the sample mean; the minimum
/// distance estimate is the mean itself, which makes every step of the
/// two-chain run available in closed form.
struct SampleMeanProblem {
  SimulatorPtr simulator;
  AuxPtr aux;
};

SampleMeanProblem make_sample_mean();

}  // namespace freelunch
