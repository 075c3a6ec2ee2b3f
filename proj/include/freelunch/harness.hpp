#pragma once

#include <functional>
#include <optional>

#include "freelunch/baselines.hpp"
#include "freelunch/coupling.hpp"
#include "freelunch/errors.hpp"
#include "freelunch/io.hpp"
#include "freelunch/smd.hpp"

namespace freelunch {

/// Model block of an experiment config: a synthetic design or a CSV file.
struct ModelSpec {
  std::string kind;  // ols_t6 | probit8 | ma1 | dynamic_panel | sample_mean | csv

  // synthetic designs
  long n = 200;
  long T = 5;
  double rho = 0.6, beta = 1.0, sigma_e = 1.0;  // dynamic_panel
  double mu = 0.0, psi = 0.8;                   // ma1
  double location = 1.0;                        // sample_mean

  // csv
  std::string path;
  std::string response;
  std::string cluster;
  std::string objective;  // ols | probit | ma1
  bool time_series = false;

  static ModelSpec from_json(const io::json& j);
  io::json to_json() const;
  bool is_synthetic() const { return kind != "csv"; }
  bool is_smd() const { return kind == "dynamic_panel" || kind == "sample_mean"; }
};

struct ExperimentConfig {
  ModelSpec model;
  std::vector<std::string> methods;  // classical, rnr, rgd, rqn, mofn, dmk, ks, ssb, smd
  double gamma = 0.1;
  long m = -1;  // -1: m = n
  long B = 1000;
  long burn = -1;
  long S = 1;
  long k = 1;  // DMK Newton steps
  double alpha = 0.05;
  long replications = 1;
  std::uint64_t seed = 0;
  std::string output_dir = ".";
  std::string plan = "iid";
  double rejection_factor = 6.0;
  std::string conditioning = "inverse_hessian";
  double pd_repair_c = 0.0;
  long hessian_every_k = 1;
  long threads = 0;  // 0: hardware concurrency
  std::optional<std::vector<double>> wald_null;
  std::string group_column;  // sensitivity runs

  static ExperimentConfig from_json(const io::json& j);
  void validate() const;
};

/// One synthetic sample plus the truth that generated it.
struct GeneratedSample {
  DataSet data;
  Vector theta_true;
};

/// Deterministic sample for (spec, seed, stream).
GeneratedSample generate_sample(const ModelSpec& spec, std::uint64_t seed, std::uint64_t stream);

/// Objective model for the spec over the given data (csv specs load the file).
ModelPtr build_model(const ModelSpec& spec, const DataSet& data);
DataSet load_or_generate(const ModelSpec& spec, std::uint64_t seed, std::uint64_t stream,
                         Vector* theta_true = nullptr);

/// Model-specific asymptotic standard errors at theta_hat: homoskedastic with
/// dof adjustment for least squares, inverse average Hessian for the probit
/// likelihood, 2 sigma^2 H^{-1} for the MA(1) least squares.
Vector ase_standard_errors(const ModelSpec& spec, const ObjectiveModel& model,
                           const Vector& theta_hat);

/// Runs fn(0..count-1) on a small worker pool; results must be written to
/// pre-sized slots so the reduction order never depends on scheduling.
void parallel_for(long count, long threads, const std::function<void(long)>& fn);

struct MethodStatus {
  std::string method;
  bool ok = true;
  std::string message;
};

struct FitResult {
  std::vector<io::TableRow> table;
  std::vector<MethodStatus> status;
  bool any_failed = false;
  std::string notes;  // learning-rate diagnostics for the CLI to print
};

/// Fit the configured methods on one sample and write report.json, draws.csv
/// (+ sidecar) and table.csv into output_dir. Method failures are isolated.
FitResult cmd_fit(const ExperimentConfig& config);

struct CoverageResult {
  std::vector<io::CoverageRow> rows;
  long failed_replications = 0;
};

/// Monte Carlo size of the nominal-alpha tests of theta_true, per method and
/// coordinate, over config.replications independent samples. Writes
/// coverage.csv. Aborts when more than 5% of replications fail.
CoverageResult cmd_coverage(const ExperimentConfig& config);

struct SensitivityGroupResult {
  int group = 0;
  bool skipped = false;
  Vector theta_bar;
  Vector shift_in_se;  // (theta_bar_g - theta_bar_full) / se_full
};

struct SensitivityResult {
  Vector theta_bar_full;
  Vector se_full;
  std::vector<SensitivityGroupResult> groups;
};

/// Leave-one-group-out chains: for every cluster level, rerun the chain on
/// the sample without that group (same stream) and report the shift of the
/// draw mean in full-sample standard-error units. Writes per-group traces.
SensitivityResult cmd_sensitivity(const ExperimentConfig& config);

struct DiagnoseResult {
  io::json summary;
  bool degenerate = false;
};

/// Diagnostics over a stored draws file: per-coordinate AR(1) against
/// 1 - gamma, trace summaries, burn-in adequacy, and the coupling report
/// when the sidecar carries replay metadata for a synthetic model.
DiagnoseResult cmd_diagnose(const std::string& draws_csv, const std::string& sidecar_json);

}  // namespace freelunch
