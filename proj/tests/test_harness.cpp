#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "twotime/harness/experiment.hpp"
#include "twotime/json_eigen.hpp"

using namespace twotime;
using namespace twotime::harness;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

fs::path scratch_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("twotime_harness_" + name);
  fs::remove_all(dir);
  return dir;
}

ExperimentConfig small_config(const std::string& preset, const fs::path& out) {
  ExperimentConfig c = load_config(preset);
  c.horizon = 20000;
  c.thinning = 100;
  c.seeds = {1, 2, 3, 4, 5};
  c.output_dir = out;
  c.pipelines = {"oracle", "tdc"};
  return c;
}

std::string slurp(const fs::path& path) {
  std::ifstream in(path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<std::vector<double>> read_csv_rows(const fs::path& path, std::string& header) {
  std::ifstream in(path);
  std::getline(in, header);
  std::vector<std::vector<double>> rows;
  std::string line;
  while (std::getline(in, line)) {
    std::vector<double> row;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      row.push_back(std::strtod(cell.c_str(), nullptr));
    }
    rows.push_back(row);
  }
  return rows;
}

int run_cli(const std::string& args) {
  const std::string command = std::string(TWOTIME_CLI_PATH) + " " + args + " > /dev/null 2>&1";
  const int status = std::system(command.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST(Config, PresetsParseAndRoundTrip) {
  for (const auto& name : builtin_preset_names()) {
    const auto doc = builtin_preset(name);
    ASSERT_TRUE(doc.has_value()) << name;
    const json resolved = to_json(parse_config(*doc));
    // Every default is materialized in the resolved document.
    for (const char* key : {"schedule", "horizon", "seeds", "thinning", "divergence_bound", "output_dir", "pipelines",
                            "aux_seed", "ode", "audit", "mdp", "target", "behavior", "features"}) {
      EXPECT_TRUE(resolved.contains(key)) << name << " " << key;
    }
  }
  EXPECT_FALSE(builtin_preset("no-such-preset").has_value());
  EXPECT_TRUE(validate_config(load_config("chain3")).ok());
  EXPECT_TRUE(validate_config(load_config("random5")).ok());
  EXPECT_TRUE(validate_config(load_config("bad_schedule")).has_violation("a(n)/b(n) -> 0"));
}

TEST(Config, BundledFilesMatchPresets) {
  for (const auto& name : builtin_preset_names()) {
    const fs::path file = fs::path(TWOTIME_SOURCE_DIR) / "configs" / (name + ".json");
    ASSERT_TRUE(fs::exists(file)) << file;
    EXPECT_EQ(to_json(load_config(file.string())), to_json(parse_config(*builtin_preset(name)))) << name;
  }
}

TEST(Config, RejectsMalformedDocuments) {
  json doc = *builtin_preset("chain3");
  doc["unexpected"] = 1;
  EXPECT_THROW(parse_config(doc), ConfigError);
  doc = *builtin_preset("chain3");
  doc["mdp"] = json{{"preset", "nope"}};
  EXPECT_THROW(parse_config(doc), ConfigError);
  doc = *builtin_preset("chain3");
  doc["target"] = "greedy-on-action-7";
  EXPECT_ANY_THROW(validate_config(parse_config(doc)));
  EXPECT_THROW(load_config("definitely-not-a-file-or-preset"), IoError);
}

TEST(Config, MdpSources) {
  // Inline and file sources describe the same chain as the preset.
  json inline_doc = *builtin_preset("chain3");
  json mdp_json;
  twotime::to_json(mdp_json, chain3_mdp());
  inline_doc["mdp"] = json{{"inline", mdp_json}};
  const ExperimentConfig from_inline = parse_config(inline_doc);
  EXPECT_EQ(from_inline.mdp->p_data(), chain3_mdp().p_data());

  const fs::path dir = scratch_dir("mdp_file");
  fs::create_directories(dir);
  {
    std::ofstream out(dir / "chain.json");
    out << mdp_json.dump();
  }
  json file_doc = *builtin_preset("chain3");
  file_doc["mdp"] = json{{"file", "chain.json"}};
  const ExperimentConfig from_file = parse_config(file_doc, dir);
  EXPECT_EQ(from_file.mdp->r_data(), chain3_mdp().r_data());

  const ExperimentConfig generated = load_config("random5");
  EXPECT_EQ(generated.mdp->p_data(), random_mdp(5, 2, 0.0, 7).p_data());
  EXPECT_EQ(generated.features->dim(), 3);
}

TEST(Config, ParseSeeds) {
  EXPECT_EQ(parse_seeds("3"), (std::vector<std::uint64_t>{1, 2, 3}));
  EXPECT_EQ(parse_seeds("3,7,11"), (std::vector<std::uint64_t>{3, 7, 11}));
  EXPECT_THROW(parse_seeds(""), ConfigError);
  EXPECT_THROW(parse_seeds("0"), ConfigError);
  EXPECT_THROW(parse_seeds("a,b"), ConfigError);
}

TEST(Run, InvalidScheduleWritesNothing) {
  const fs::path out = scratch_dir("bad_schedule");
  ExperimentConfig c = load_config("bad_schedule");
  c.output_dir = out;
  std::ostringstream log;
  const RunResult result = run_experiment(c, log);
  EXPECT_EQ(result.exit_code, kValidationFailure);
  EXPECT_EQ(result.summary.at("error"), "validation");
  EXPECT_NE(result.summary.at("message").get<std::string>().find("a(n)/b(n) -> 0"), std::string::npos);
  EXPECT_FALSE(fs::exists(out));
}

TEST(Run, SeedSweepWritesReproducibleArtifacts) {
  const fs::path out = scratch_dir("sweep");
  std::ostringstream log;
  const RunResult result = run_experiment(small_config("chain3", out), log);
  ASSERT_EQ(result.exit_code, kOk);
  EXPECT_TRUE(fs::exists(out / "oracle.json"));
  EXPECT_TRUE(fs::exists(out / "summary.json"));
  int csvs = 0;
  for (const auto& entry : fs::directory_iterator(out)) {
    csvs += entry.path().extension() == ".csv" ? 1 : 0;
  }
  EXPECT_EQ(csvs, 5);

  // The summary can be recomputed from the CSV artifacts alone.
  const json summary = json::parse(slurp(out / "summary.json"));
  const json oracle = json::parse(slurp(out / "oracle.json"));
  const Vector theta_star = vector_from_json(oracle.at("theta_star"));
  const auto& seeds = summary.at("tdc").at("seeds");
  ASSERT_EQ(seeds.size(), 5u);
  for (std::size_t i = 0; i < 5; ++i) {
    std::string header;
    const auto rows = read_csv_rows(out / ("trajectory_seed_" + std::to_string(i + 1) + ".csv"), header);
    EXPECT_EQ(header, "n,t,theta_0,theta_1,theta_2,w_0,w_1,w_2,coupling_err");
    const auto& last = rows.back();
    EXPECT_EQ(static_cast<std::int64_t>(last[0]), 20000);
    Vector theta(3);
    theta << last[2], last[3], last[4];
    EXPECT_NEAR(seeds[i].at("final_relative_error").get<double>(), (theta - theta_star).norm() / theta_star.norm(),
                1e-12);
    EXPECT_NEAR(seeds[i].at("final_coupling_error").get<double>(), last[8], 1e-12);
    EXPECT_EQ(seeds[i].at("seed"), i + 1);
  }

  // Same config and seeds give byte-identical trajectories.
  const fs::path again = scratch_dir("sweep_again");
  ASSERT_EQ(run_experiment(small_config("chain3", again), log).exit_code, kOk);
  for (std::size_t s = 1; s <= 5; ++s) {
    const std::string name = "trajectory_seed_" + std::to_string(s) + ".csv";
    EXPECT_EQ(slurp(out / name), slurp(again / name)) << name;
  }
}

TEST(Run, FullPipelineProducesChecks) {
  const fs::path out = scratch_dir("full");
  ExperimentConfig c = small_config("chain3", out);
  c.seeds = {1};
  c.pipelines = {"oracle", "tdc", "ode", "audit"};
  c.ode.starts = 2;
  c.ode.tracking_points = {100, 1000};
  c.audit.points = 2;
  c.audit.draws = 2000;
  c.audit.lipschitz_pairs = 50;
  std::ostringstream log;
  const RunResult result = run_experiment(c, log);
  ASSERT_EQ(result.exit_code, kOk);
  EXPECT_TRUE(fs::exists(out / "ode.json"));
  EXPECT_TRUE(fs::exists(out / "audit.json"));
  EXPECT_EQ(result.summary.at("tracking_errors").size(), 2u);
  EXPECT_FALSE(result.summary.at("checks").empty());
  EXPECT_TRUE(result.summary.contains("all_checks_passed"));
}

TEST(Run, DivergenceIsReported) {
  const fs::path out = scratch_dir("diverge");
  ExperimentConfig c = small_config("chain3", out);
  c.seeds = {1};
  c.divergence_bound = 1e-3;
  std::ostringstream log;
  const RunResult result = run_experiment(c, log);
  EXPECT_EQ(result.exit_code, kDivergence);
  EXPECT_EQ(result.summary.at("error").at("error"), "divergence");
  EXPECT_TRUE(fs::exists(out / "summary.json"));
}

TEST(Run, UnwritableOutputIsIoError) {
  const fs::path dir = scratch_dir("io");
  fs::create_directories(dir);
  {
    std::ofstream blocker(dir / "file");
    blocker << "x";
  }
  ExperimentConfig c = small_config("chain3", dir / "file" / "out");
  c.seeds = {1};
  std::ostringstream log;
  EXPECT_THROW(run_experiment(c, log), IoError);
}

TEST(Cli, ExitCodes) {
  const fs::path out = scratch_dir("cli");
  EXPECT_EQ(run_cli("validate --config chain3"), kOk);
  EXPECT_EQ(run_cli("validate --config bad_schedule"), kValidationFailure);
  EXPECT_EQ(run_cli("oracle --config chain3 --out " + out.string()), kOk);
  EXPECT_TRUE(fs::exists(out / "oracle.json"));
  EXPECT_EQ(run_cli("run-tdc --config chain3 --seeds 2 --horizon 5000 --out " + out.string()), kOk);
  EXPECT_TRUE(fs::exists(out / "trajectory_seed_2.csv"));
  EXPECT_EQ(run_cli("run --config bad_schedule --out " + (out / "bad").string()), kValidationFailure);
  EXPECT_FALSE(fs::exists(out / "bad"));
  EXPECT_EQ(run_cli("walk-demo --p 0.9 --horizon 1000 --seeds 5"), kOk);
  EXPECT_EQ(run_cli("walk-demo --p 0.3"), kUsage);
  EXPECT_EQ(run_cli(""), kUsage);
  EXPECT_EQ(run_cli("no-such-command"), kUsage);
  EXPECT_NE(run_cli("validate --config no-such-preset"), kOk);
}
