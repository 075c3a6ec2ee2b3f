#include "freelunch/io.hpp"

#include <cstdio>
#include <fstream>

#include "freelunch/errors.hpp"

namespace freelunch::io {

std::string format_double(double x) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", x);
  return buf;
}

namespace {

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path);
  return out;
}

json matrix_to_json(const Matrix& m) {
  json rows = json::array();
  for (long r = 0; r < m.rows(); ++r) {
    json row = json::array();
    for (long c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(std::move(row));
  }
  return rows;
}

Matrix matrix_from_json(const json& j) {
  const long rows = static_cast<long>(j.size());
  if (rows == 0) return Matrix(0, 0);
  const long cols = static_cast<long>(j.front().size());
  Matrix m(rows, cols);
  for (long r = 0; r < rows; ++r)
    for (long c = 0; c < cols; ++c) m(r, c) = j[static_cast<size_t>(r)][static_cast<size_t>(c)].get<double>();
  return m;
}

json vector_to_json(const Vector& v) {
  json out = json::array();
  for (long i = 0; i < v.size(); ++i) out.push_back(v[i]);
  return out;
}

Vector vector_from_json(const json& j) {
  Vector v(static_cast<long>(j.size()));
  for (long i = 0; i < v.size(); ++i) v[i] = j[static_cast<size_t>(i)].get<double>();
  return v;
}

}  // namespace

json chain_config_to_json(const ChainConfig& config) {
  json j;
  j["gamma"] = config.gamma;
  j["B"] = config.B;
  j["burn"] = config.resolved_burn();
  j["theta0"] = vector_to_json(config.theta0);
  j["conditioning"] = to_string(config.conditioning);
  j["pd_repair_c"] = config.conditioning_options.pd_repair_c;
  j["plan"] = {{"scheme", to_string(config.plan.scheme)}, {"n", config.plan.n}, {"m", config.plan.m}};
  j["rejection_factor"] = config.rejection_factor;
  j["hessian_every_k"] = config.hessian_every_k;
  j["seed"] = config.seed;
  j["stream"] = config.stream;
  return j;
}

void write_draws_csv(const std::string& path, const Matrix& draws,
                     const std::vector<std::uint64_t>& stream_ids) {
  if (static_cast<long>(stream_ids.size()) != draws.rows())
    throw Error("stream id count does not match draw count");
  auto out = open_out(path);
  out << "iter";
  for (long j = 0; j < draws.cols(); ++j) out << ",theta_" << (j + 1);
  out << ",batch_stream_id\n";
  for (long b = 0; b < draws.rows(); ++b) {
    out << (b + 1);
    for (long j = 0; j < draws.cols(); ++j) out << ',' << format_double(draws(b, j));
    out << ',' << stream_ids[static_cast<size_t>(b)] << '\n';
  }
}

json history_sidecar(const DrawHistory& history, const json& model_block) {
  json j;
  j["config"] = chain_config_to_json(history.config);
  j["n"] = history.n;
  j["m"] = history.m;
  j["rejection_count"] = history.rejection_count;
  j["burn_draws"] = matrix_to_json(history.burn_draws);
  json ids = json::array();
  for (auto id : history.batch_stream_ids) ids.push_back(id);
  j["batch_stream_ids"] = std::move(ids);
  if (!model_block.is_null()) j["model"] = model_block;
  return j;
}

void write_history(const std::string& csv_path, const std::string& sidecar_path,
                   const DrawHistory& history, const json& model_block) {
  const long burn = history.burn_draws.rows();
  std::vector<std::uint64_t> retained_ids(history.batch_stream_ids.begin() + burn,
                                          history.batch_stream_ids.end());
  write_draws_csv(csv_path, history.draws, retained_ids);
  write_json(sidecar_path, history_sidecar(history, model_block));
}

void write_bootstrap(const std::string& csv_path, const std::string& sidecar_path,
                     const BootstrapDraws& draws) {
  std::vector<std::uint64_t> ids;
  ids.reserve(static_cast<size_t>(draws.draws.rows()));
  for (long b = 1; b <= draws.draws.rows(); ++b)
    ids.push_back(draws.stream + static_cast<std::uint64_t>(b));
  write_draws_csv(csv_path, draws.draws, ids);
  json j;
  j["method"] = to_string(draws.method);
  j["center"] = vector_to_json(draws.center);
  j["m"] = draws.m;
  j["n"] = draws.n;
  j["failures"] = draws.failures;
  j["pd_repairs"] = draws.pd_repairs;
  j["seed"] = draws.seed;
  j["stream"] = draws.stream;
  write_json(sidecar_path, j);
}

void write_smd_pair(const std::string& csv_path, const std::string& sidecar_path,
                    const SMDChainPair& pair) {
  auto out = open_out(csv_path);
  const long d = pair.chain1.cols();
  out << "iter";
  for (long j = 0; j < d; ++j) out << ",chain1_theta_" << (j + 1);
  for (long j = 0; j < d; ++j) out << ",chain2_theta_" << (j + 1);
  out << ",batch_stream_id,shock_stream_id\n";
  const long burn = pair.chain1_burn.rows();
  for (long b = 0; b < pair.chain1.rows(); ++b) {
    out << (b + 1);
    for (long j = 0; j < d; ++j) out << ',' << format_double(pair.chain1(b, j));
    for (long j = 0; j < d; ++j) out << ',' << format_double(pair.chain2(b, j));
    out << ',' << pair.batch_stream_ids[static_cast<size_t>(burn + b)] << ','
        << pair.shock_stream_ids[static_cast<size_t>(burn + b)] << '\n';
  }

  json j;
  j["gamma"] = pair.config.gamma;
  j["B"] = pair.config.B;
  j["burn"] = pair.config.resolved_burn();
  j["S"] = pair.config.S;
  j["theta0"] = vector_to_json(pair.config.theta0);
  j["plan"] = {{"scheme", to_string(pair.config.plan.scheme)},
               {"n", pair.config.plan.n},
               {"m", pair.config.plan.m}};
  j["seed"] = pair.config.seed;
  j["stream"] = pair.config.stream;
  j["n"] = pair.n;
  j["m"] = pair.m;
  j["W"] = matrix_to_json(pair.W);
  j["psi_n"] = vector_to_json(pair.psi_n);
  j["rejection_count"] = pair.rejection_count;
  j["chain1_burn"] = matrix_to_json(pair.chain1_burn);
  j["chain2_burn"] = matrix_to_json(pair.chain2_burn);
  write_json(sidecar_path, j);
}

json report_to_json(const InferenceReport& report) {
  json j;
  j["method"] = report.method;
  j["theta_bar"] = vector_to_json(report.theta_bar);
  j["V"] = matrix_to_json(report.V);
  j["se"] = vector_to_json(report.se);
  j["alpha"] = report.alpha;
  j["ci_lower"] = vector_to_json(report.ci_lower);
  j["ci_upper"] = vector_to_json(report.ci_upper);
  j["degenerate"] = report.degenerate;
  if (report.wald) {
    j["wald"] = {{"statistic", report.wald->statistic},
                 {"dof", report.wald->dof},
                 {"p_value", report.wald->p_value}};
  }
  if (report.ar1) {
    j["ar1"] = {{"coefficient", vector_to_json(report.ar1->coefficient)},
                {"se", vector_to_json(report.ar1->se)},
                {"target", report.ar1->target},
                {"pass", report.ar1->pass}};
  }
  j["gamma"] = report.gamma;
  j["m"] = report.m;
  j["n"] = report.n;
  j["B"] = report.B;
  j["seed"] = report.seed;
  return j;
}

InferenceReport report_from_json(const json& j) {
  InferenceReport r;
  r.method = j.at("method").get<std::string>();
  r.theta_bar = vector_from_json(j.at("theta_bar"));
  r.V = matrix_from_json(j.at("V"));
  r.se = vector_from_json(j.at("se"));
  r.alpha = j.at("alpha").get<double>();
  r.ci_lower = vector_from_json(j.at("ci_lower"));
  r.ci_upper = vector_from_json(j.at("ci_upper"));
  r.degenerate = j.at("degenerate").get<std::vector<bool>>();
  if (j.contains("wald")) {
    WaldTest w;
    w.statistic = j["wald"].at("statistic").get<double>();
    w.dof = j["wald"].at("dof").get<long>();
    w.p_value = j["wald"].at("p_value").get<double>();
    r.wald = w;
  }
  if (j.contains("ar1")) {
    AR1Diag a;
    a.coefficient = vector_from_json(j["ar1"].at("coefficient"));
    a.se = vector_from_json(j["ar1"].at("se"));
    a.target = j["ar1"].at("target").get<double>();
    a.pass = j["ar1"].at("pass").get<std::vector<bool>>();
    r.ar1 = a;
  }
  r.gamma = j.at("gamma").get<double>();
  r.m = j.at("m").get<long>();
  r.n = j.at("n").get<long>();
  r.B = j.at("B").get<long>();
  r.seed = j.at("seed").get<std::uint64_t>();
  return r;
}

void write_table_csv(const std::string& path, const std::vector<TableRow>& rows) {
  auto out = open_out(path);
  out << "method,param,estimate,se,ci_lower,ci_upper,gamma,m,B,seed\n";
  for (const auto& r : rows) {
    out << r.method << ',' << r.param << ',' << format_double(r.estimate) << ','
        << format_double(r.se) << ',' << format_double(r.ci_lower) << ','
        << format_double(r.ci_upper) << ',' << format_double(r.gamma) << ',' << r.m << ',' << r.B
        << ',' << r.seed << '\n';
  }
}

void write_coverage_csv(const std::string& path, const std::vector<CoverageRow>& rows) {
  auto out = open_out(path);
  out << "method,param,rejection_rate,mc_se,R,gamma,m,B,seed\n";
  for (const auto& r : rows) {
    out << r.method << ',' << r.param << ',' << format_double(r.rate) << ','
        << format_double(r.mc_se) << ',' << r.R << ',' << format_double(r.gamma) << ',' << r.m
        << ',' << r.B << ',' << r.seed << '\n';
  }
}

json load_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open " + path);
  json j;
  try {
    in >> j;
  } catch (const std::exception& err) {
    throw ParseError(path + ": " + err.what());
  }
  return j;
}

void write_json(const std::string& path, const json& j) {
  auto out = open_out(path);
  out << j.dump(2) << '\n';
}

Matrix read_draws_csv(const std::string& path, std::vector<std::uint64_t>* stream_ids) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open " + path);
  std::string line;
  if (!std::getline(in, line)) throw ParseError(path + ": empty file");
  long cols = 0;
  for (char c : line)
    if (c == ',') ++cols;
  const long d = cols - 1;  // minus iter and stream id columns
  if (d < 1) throw ParseError(path + ": not a draws file");
  std::vector<std::vector<double>> thetas;
  std::vector<std::uint64_t> ids;
  long line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::vector<double> row;
    std::uint64_t id = 0;
    size_t start = 0;
    long field = 0;
    for (size_t i = 0; i <= line.size(); ++i) {
      if (i == line.size() || line[i] == ',') {
        const std::string tok = line.substr(start, i - start);
        if (field > 0 && field <= d)
          row.push_back(std::stod(tok));
        else if (field == d + 1)
          id = std::stoull(tok);
        start = i + 1;
        ++field;
      }
    }
    if (static_cast<long>(row.size()) != d)
      throw ParseError(path + ": line " + std::to_string(line_no) + " malformed");
    thetas.push_back(std::move(row));
    ids.push_back(id);
  }
  Matrix draws(static_cast<long>(thetas.size()), d);
  for (size_t r = 0; r < thetas.size(); ++r)
    for (long c = 0; c < d; ++c) draws(static_cast<long>(r), c) = thetas[r][static_cast<size_t>(c)];
  if (stream_ids) *stream_ids = std::move(ids);
  return draws;
}

}  // namespace freelunch::io
