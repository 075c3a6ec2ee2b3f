// Command-line front end: fit one sample, run a coverage study, probe
// group sensitivity, or diagnose a stored draws file.
//
// Exit codes: 0 success, 2 configuration error, 3 numerical failure,
// 4 partial success (some methods failed).

#include <CLI11.hpp>
#include <iostream>

#include "freelunch/harness.hpp"

namespace {

using freelunch::ExperimentConfig;

ExperimentConfig load_config(const std::string& path, long seed_override, bool has_seed) {
  ExperimentConfig config = ExperimentConfig::from_json(freelunch::io::load_json(path));
  if (has_seed) config.seed = static_cast<std::uint64_t>(seed_override);
  return config;
}

void print_table(const std::vector<freelunch::io::TableRow>& rows) {
  std::printf("%-14s %-12s %12s %12s %12s %12s\n", "method", "param", "estimate", "se", "ci_lo",
              "ci_hi");
  for (const auto& r : rows)
    std::printf("%-14s %-12s %12.4f %12.4f %12.4f %12.4f\n", r.method.c_str(), r.param.c_str(),
                r.estimate, r.se, r.ci_lower, r.ci_upper);
}

int run_fit(const ExperimentConfig& config) {
  const freelunch::FitResult result = freelunch::cmd_fit(config);
  print_table(result.table);
  for (const auto& s : result.status)
    if (!s.ok) std::fprintf(stderr, "method %s failed: %s\n", s.method.c_str(), s.message.c_str());
  if (!result.notes.empty()) std::printf("%s\n", result.notes.c_str());
  return result.any_failed ? 4 : 0;
}

int run_coverage(const ExperimentConfig& config) {
  const freelunch::CoverageResult result = freelunch::cmd_coverage(config);
  std::printf("%-14s %-12s %10s %10s %8s\n", "method", "param", "size", "mc_se", "R");
  for (const auto& r : result.rows)
    std::printf("%-14s %-12s %10.4f %10.4f %8ld\n", r.method.c_str(), r.param.c_str(), r.rate,
                r.mc_se, r.R);
  if (result.failed_replications > 0)
    std::fprintf(stderr, "%ld replications failed and were excluded\n", result.failed_replications);
  return 0;
}

int run_sensitivity(const ExperimentConfig& config) {
  const freelunch::SensitivityResult result = freelunch::cmd_sensitivity(config);
  std::printf("%-10s %-12s %12s %14s\n", "group", "param", "theta_bar", "shift(se)");
  for (const auto& g : result.groups) {
    if (g.skipped) {
      std::printf("%-10d skipped (too little data after exclusion)\n", g.group);
      continue;
    }
    for (long j = 0; j < g.theta_bar.size(); ++j)
      std::printf("%-10d theta_%-6ld %12.4f %14.3f\n", g.group, j + 1, g.theta_bar[j],
                  g.shift_in_se[j]);
  }
  return 0;
}

int run_diagnose(const std::string& draws, const std::string& sidecar) {
  const freelunch::DiagnoseResult result = freelunch::cmd_diagnose(draws, sidecar);
  std::cout << result.summary.dump(2) << std::endl;
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Resampled Newton-Raphson estimation and single-run bootstrap inference"};
  app.require_subcommand(1);

  std::string config_path;
  std::string draws_path;
  std::string sidecar_path;
  long seed_override = 0;
  bool has_seed = false;

  auto add_config_flags = [&](CLI::App* cmd) {
    cmd->add_option("--config", config_path, "experiment config (JSON)")->required();
    cmd->add_option("--seed", seed_override, "override the config seed")
        ->each([&](const std::string&) { has_seed = true; });
  };

  CLI::App* fit = app.add_subcommand("fit", "fit one sample with the configured methods");
  add_config_flags(fit);
  CLI::App* coverage = app.add_subcommand("coverage", "Monte Carlo size of the nominal tests");
  add_config_flags(coverage);
  CLI::App* sensitivity =
      app.add_subcommand("sensitivity", "leave-one-group-out chains and shifts");
  add_config_flags(sensitivity);
  CLI::App* diagnose = app.add_subcommand("diagnose", "diagnostics over a stored draws file");
  diagnose->add_option("--draws", draws_path, "draws.csv path")->required();
  diagnose->add_option("--sidecar", sidecar_path, "sidecar JSON path")->required();

  try {
    app.parse(argc, argv);
    if (fit->parsed()) return run_fit(load_config(config_path, seed_override, has_seed));
    if (coverage->parsed()) return run_coverage(load_config(config_path, seed_override, has_seed));
    if (sensitivity->parsed())
      return run_sensitivity(load_config(config_path, seed_override, has_seed));
    if (diagnose->parsed()) return run_diagnose(draws_path, sidecar_path);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  } catch (const freelunch::ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 2;
  } catch (const freelunch::ParseError& e) {
    std::fprintf(stderr, "parse error: %s\n", e.what());
    return 2;
  } catch (const freelunch::Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 3;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 3;
  }
  return 0;
}
