#pragma once

#include <string>

#include <json.hpp>

#include "freelunch/baselines.hpp"
#include "freelunch/chains.hpp"
#include "freelunch/smd.hpp"

namespace freelunch::io {

using json = nlohmann::ordered_json;

/// Shortest round-trippable decimal representation.
std::string format_double(double x);

json chain_config_to_json(const ChainConfig& config);

/// draws.csv: header `iter,theta_1..theta_d,batch_stream_id`, one row per
/// retained draw, full precision.
void write_draws_csv(const std::string& path, const Matrix& draws,
                     const std::vector<std::uint64_t>& stream_ids);

/// JSON sidecar of a chain run: config echo, rejection count, sample sizes,
/// burn draws, and an optional caller-supplied model block for replay.
json history_sidecar(const DrawHistory& history, const json& model_block = json());
void write_history(const std::string& csv_path, const std::string& sidecar_path,
                   const DrawHistory& history, const json& model_block = json());

/// Bootstrap draws share the draws.csv schema, tagged by method in the sidecar.
void write_bootstrap(const std::string& csv_path, const std::string& sidecar_path,
                     const BootstrapDraws& draws);

/// Both SMD chains in one CSV (`iter,chain1_*,chain2_*,batch_stream_id,
/// shock_stream_id`) plus a shared metadata sidecar.
void write_smd_pair(const std::string& csv_path, const std::string& sidecar_path,
                    const SMDChainPair& pair);

json report_to_json(const InferenceReport& report);
InferenceReport report_from_json(const json& j);

/// One comparison-table row per (method, parameter): estimate, se, interval,
/// and the (method, gamma, m, B, seed) provenance columns.
struct TableRow {
  std::string method;
  std::string param;
  double estimate = 0.0;
  double se = 0.0;
  double ci_lower = 0.0;
  double ci_upper = 0.0;
  double gamma = 0.0;
  long m = 0;
  long B = 0;
  std::uint64_t seed = 0;
};

void write_table_csv(const std::string& path, const std::vector<TableRow>& rows);

struct CoverageRow {
  std::string method;
  std::string param;
  double rate = 0.0;
  double mc_se = 0.0;
  long R = 0;
  double gamma = 0.0;
  long m = 0;
  long B = 0;
  std::uint64_t seed = 0;
};

void write_coverage_csv(const std::string& path, const std::vector<CoverageRow>& rows);

json load_json(const std::string& path);
void write_json(const std::string& path, const json& j);

/// Reads a draws.csv written by write_draws_csv.
Matrix read_draws_csv(const std::string& path, std::vector<std::uint64_t>* stream_ids = nullptr);

}  // namespace freelunch::io
