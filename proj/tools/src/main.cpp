#include <cmath>
#include <cstdio>
#include <iomanip>
#include <iostream>
#include <optional>
#include <set>
#include <string>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "twotime/audit.hpp"
#include "twotime/harness/experiment.hpp"
#include "twotime/oracle.hpp"

using nlohmann::json;
using namespace twotime;
using namespace twotime::harness;

namespace {

struct Overrides {
  std::string config;
  std::string out;
  std::string seeds;
  std::int64_t horizon = 0;
  std::int64_t thinning = 0;
};

void add_common(CLI::App* cmd, Overrides& o, bool run_flags) {
  cmd->add_option("--config", o.config, "Config file or bundled preset (chain3, random5, bad_schedule)")->required();
  cmd->add_option("--out", o.out, "Output directory (overrides the config)");
  if (run_flags) {
    cmd->add_option("--seeds", o.seeds, "Seed count N (seeds 1..N) or a comma-separated list");
    cmd->add_option("--horizon", o.horizon, "Number of iterations per seed")->check(CLI::PositiveNumber);
    cmd->add_option("--thinning", o.thinning, "Keep every N-th iterate in the CSV")->check(CLI::PositiveNumber);
  }
}

ExperimentConfig resolve(const Overrides& o) {
  ExperimentConfig config = load_config(o.config);
  if (!o.out.empty()) {
    config.output_dir = o.out;
  }
  if (!o.seeds.empty()) {
    config.seeds = parse_seeds(o.seeds);
  }
  if (o.horizon > 0) {
    config.horizon = o.horizon;
  }
  if (o.thinning > 0) {
    config.thinning = o.thinning;
  }
  return config;
}

int fail(const std::string& kind, const std::string& message, int code) {
  std::cerr << error_record(kind, message, code).dump() << '\n';
  return code;
}

void print_checks(const json& summary) {
  if (!summary.contains("checks")) {
    return;
  }
  for (const auto& c : summary.at("checks")) {
    std::printf("%-4s %-55s value=%.6g threshold=%.6g\n", c.at("passed").get<bool>() ? "PASS" : "FAIL",
                c.at("check").get<std::string>().c_str(), c.at("value").get<double>(),
                c.at("threshold").get<double>());
  }
}

int cmd_validate(const Overrides& o) {
  const ExperimentConfig config = resolve(o);
  const ValidationReport report = validate_config(config);
  for (const auto& f : report.findings) {
    std::printf("%-4s %-22s %s\n", f.passed ? "ok" : "FAIL", f.clause.c_str(), f.passed ? "" : f.detail.c_str());
  }
  if (!report.ok()) {
    return fail("validation", report.to_string(), kValidationFailure);
  }
  return kOk;
}

int cmd_oracle(const Overrides& o) {
  const ExperimentConfig config = resolve(o);
  const ValidationReport report = validate_config(config);
  if (!report.ok()) {
    return fail("validation", report.to_string(), kValidationFailure);
  }
  const OracleSolution s = solve_oracle(*config.mdp, *config.target, *config.behavior, *config.features);
  const Eigen::IOFormat row(Eigen::FullPrecision, Eigen::DontAlignCols, ", ", "; ", "", "", "[", "]");
  std::cout << "theta*            " << s.theta_star.transpose().format(row) << '\n'
            << "lambda gain C^-1A " << (-s.lambda.linear).format(row) << '\n'
            << "lambda intercept  " << s.lambda.offset.transpose().format(row) << '\n'
            << "stationary nu     " << s.nu.transpose().format(row) << '\n'
            << "cond(A)           " << s.conditions.cond_A << '\n'
            << "cond(C)           " << s.conditions.cond_C << '\n'
            << "max Re eig(-C)    " << s.conditions.max_real_eig_fast << '\n'
            << "max Re eig(slow)  " << s.conditions.max_real_eig_slow << '\n';
  if (!o.out.empty()) {
    std::filesystem::create_directories(config.output_dir);
    write_json(config.output_dir / "oracle.json", oracle_pipeline(config, s));
  }
  return kOk;
}

int cmd_pipeline(const Overrides& o, std::optional<std::set<std::string>> pipelines) {
  ExperimentConfig config = resolve(o);
  if (pipelines) {
    config.pipelines = *pipelines;
  }
  const RunResult result = run_experiment(config, std::cout);
  if (result.exit_code == kValidationFailure) {
    std::cerr << result.summary.dump() << '\n';
    return result.exit_code;
  }
  print_checks(result.summary);
  std::cout << "summary: " << (config.output_dir / "summary.json").string() << '\n';
  if (result.exit_code != kOk) {
    std::cerr << result.summary.at("error").dump() << '\n';
  }
  return result.exit_code;
}

int cmd_walk(double p, std::int64_t horizon, const std::string& seeds_text) {
  const auto seeds = parse_seeds(seeds_text);
  std::int64_t worst = 0;
  std::printf("%8s %12s %12s %14s %12s\n", "seed", "min_pos", "max_pos", "final_pos", "sup_L");
  for (const auto seed : seeds) {
    const WalkSummary w = transient_walk(p, horizon, seed);
    worst = std::min(worst, w.min_position);
    std::printf("%8llu %12lld %12lld %14lld %12.6g\n", static_cast<unsigned long long>(seed),
                static_cast<long long>(w.min_position), static_cast<long long>(w.max_position),
                static_cast<long long>(w.final_position), w.sup_L);
  }
  const double ratio = (1.0 - p) / p;
  std::printf("lowest min position %lld over %zu runs; P(reach -20) <= %.3g per run\n",
              static_cast<long long>(worst), seeds.size(), std::pow(ratio, 20.0));
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Two-timescale stochastic approximation experiments (TDC on finite MDPs)"};
  app.require_subcommand(1);

  Overrides o;
  auto* validate = app.add_subcommand("validate", "Check the schedule pair and the MDP/policy pair");
  add_common(validate, o, false);
  auto* oracle = app.add_subcommand("oracle", "Print theta*, the lambda map and condition numbers");
  add_common(oracle, o, false);
  auto* run_tdc = app.add_subcommand("run-tdc", "Run the TDC seed sweep and write trajectory CSVs");
  add_common(run_tdc, o, true);
  auto* ode = app.add_subcommand("ode", "Integrate the limiting ODEs and the tracking diagnostic");
  add_common(ode, o, true);
  auto* audit = app.add_subcommand("audit", "Martingale, Lipschitz and schedule checks");
  add_common(audit, o, true);
  auto* run = app.add_subcommand("run", "Run every pipeline listed in the config");
  add_common(run, o, true);

  double p = 0.9;
  std::int64_t walk_horizon = 100000;
  std::string walk_seeds = "100";
  auto* walk = app.add_subcommand("walk-demo", "Transient random walk with state-dependent Lipschitz constant");
  walk->add_option("--p", p, "Up probability in (0.5, 1)")->check(CLI::Range(0.5, 1.0));
  walk->add_option("--horizon", walk_horizon, "Steps per walk")->check(CLI::NonNegativeNumber);
  walk->add_option("--seeds", walk_seeds, "Seed count N or comma-separated list");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kOk : kUsage;
  }

  try {
    if (*validate) {
      return cmd_validate(o);
    }
    if (*oracle) {
      return cmd_oracle(o);
    }
    if (*run_tdc) {
      return cmd_pipeline(o, std::set<std::string>{"oracle", "tdc"});
    }
    if (*ode) {
      return cmd_pipeline(o, std::set<std::string>{"oracle", "ode"});
    }
    if (*audit) {
      return cmd_pipeline(o, std::set<std::string>{"oracle", "audit"});
    }
    if (*run) {
      return cmd_pipeline(o, std::nullopt);
    }
    if (*walk) {
      return cmd_walk(p, walk_horizon, walk_seeds);
    }
  } catch (const ConfigError& e) {
    return fail("validation", e.what(), kValidationFailure);
  } catch (const ValidationError& e) {
    return fail("validation", e.report().to_string(), kValidationFailure);
  } catch (const NotIrreducibleError& e) {
    return fail("validation", e.what(), kValidationFailure);
  } catch (const SingularSystemError& e) {
    return fail("validation", e.what(), kValidationFailure);
  } catch (const IoError& e) {
    return fail("io", e.what(), kIoError);
  } catch (const std::filesystem::filesystem_error& e) {
    return fail("io", e.what(), kIoError);
  } catch (const std::invalid_argument& e) {
    return fail("validation", e.what(), kValidationFailure);
  }
  return kUsage;
}
