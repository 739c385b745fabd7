#include "twotime/harness/experiment.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <mutex>
#include <sstream>
#include <thread>

#include "twotime/audit.hpp"
#include "twotime/json_eigen.hpp"
#include "twotime/ode.hpp"
#include "twotime/tdc.hpp"

namespace twotime::harness {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const char* const kChain3 = R"({
  "name": "chain3",
  "mdp": {"preset": "chain3", "gamma": 0.9},
  "target": "greedy-on-action-1",
  "behavior": "uniform",
  "features": "tabular",
  "schedule": {
    "slow": {"initial": 0.5, "offset": 10000, "exponent": 1.0},
    "fast": {"initial": 0.5, "offset": 10000, "exponent": 0.6}
  },
  "horizon": 2000000,
  "seeds": 10,
  "thinning": 1000,
  "output_dir": "out/chain3"
})";

const char* const kRandom5 = R"({
  "name": "random5",
  "mdp": {"generator": {"n_states": 5, "n_actions": 2, "sparsity": 0.0, "seed": 7, "gamma": 0.9}},
  "target": "greedy-on-action-0",
  "behavior": "uniform",
  "features": {"random": {"dim": 3, "seed": 11}},
  "schedule": {
    "slow": {"initial": 0.5, "offset": 10000, "exponent": 1.0},
    "fast": {"initial": 0.5, "offset": 10000, "exponent": 0.6}
  },
  "horizon": 2000000,
  "seeds": 10,
  "thinning": 1000,
  "output_dir": "out/random5"
})";

// Equal step sizes on both timescales: a(n)/b(n) does not vanish.
const char* const kBadSchedule = R"({
  "name": "bad_schedule",
  "mdp": {"preset": "chain3", "gamma": 0.9},
  "target": "greedy-on-action-1",
  "behavior": "uniform",
  "features": "tabular",
  "schedule": {
    "slow": {"initial": 0.5, "offset": 10000, "exponent": 0.6},
    "fast": {"initial": 0.5, "offset": 10000, "exponent": 0.6}
  },
  "horizon": 100000,
  "seeds": 1,
  "output_dir": "out/bad_schedule"
})";

template <class T>
T get_or(const json& doc, const char* key, T fallback) {
  if (!doc.contains(key)) {
    return fallback;
  }
  try {
    return doc.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config field '") + key + "': " + e.what());
  }
}

void reject_unknown_keys(const json& doc, std::initializer_list<const char*> known, const std::string& where) {
  for (const auto& item : doc.items()) {
    const bool ok = std::any_of(known.begin(), known.end(), [&](const char* k) { return item.key() == k; });
    if (!ok) {
      throw ConfigError("unknown field '" + item.key() + "' in " + where);
    }
  }
}

json read_json_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw IoError("cannot open " + path.string());
  }
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("cannot parse " + path.string() + ": " + e.what());
  }
}

FiniteMdp build_mdp(const json& source, const fs::path& base_dir) {
  if (!source.is_object()) {
    throw ConfigError("mdp must be an object with one of: preset, file, inline, generator");
  }
  try {
    if (source.contains("preset")) {
      reject_unknown_keys(source, {"preset", "gamma"}, "mdp");
      const auto name = source.at("preset").get<std::string>();
      if (name != "chain3") {
        throw ConfigError("unknown MDP preset '" + name + "'");
      }
      return chain3_mdp(get_or(source, "gamma", 0.9));
    }
    if (source.contains("file")) {
      reject_unknown_keys(source, {"file"}, "mdp");
      fs::path path = source.at("file").get<std::string>();
      if (path.is_relative() && !base_dir.empty()) {
        path = base_dir / path;
      }
      return mdp_from_json(read_json_file(path));
    }
    if (source.contains("inline")) {
      reject_unknown_keys(source, {"inline"}, "mdp");
      return mdp_from_json(source.at("inline"));
    }
    if (source.contains("generator")) {
      reject_unknown_keys(source, {"generator"}, "mdp");
      const json& g = source.at("generator");
      reject_unknown_keys(g, {"n_states", "n_actions", "sparsity", "seed", "gamma"}, "mdp.generator");
      return random_mdp(g.at("n_states").get<int>(), g.at("n_actions").get<int>(), get_or(g, "sparsity", 0.0),
                        g.at("seed").get<std::uint64_t>(), get_or(g, "gamma", 0.9));
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("mdp: ") + e.what());
  } catch (const NotIrreducibleError& e) {
    throw ConfigError(std::string("mdp: ") + e.what());
  }
  throw ConfigError("mdp must contain one of: preset, file, inline, generator");
}

Policy build_policy(const json& source, const FiniteMdp& mdp, const char* which) {
  const int ns = mdp.n_states();
  const int na = mdp.n_actions();
  try {
    if (source.is_string()) {
      const auto name = source.get<std::string>();
      if (name == "uniform") {
        return Policy::uniform(ns, na);
      }
      const std::string prefix = "greedy-on-action-";
      if (name.rfind(prefix, 0) == 0) {
        std::size_t used = 0;
        const std::string digits = name.substr(prefix.size());
        const int action = digits.empty() ? -1 : std::stoi(digits, &used);
        if (used != digits.size() || action < 0 || action >= na) {
          throw ConfigError(std::string(which) + ": action out of range in '" + name + "'");
        }
        return Policy::greedy_on_action(ns, na, action);
      }
      throw ConfigError(std::string(which) + ": unknown policy preset '" + name + "'");
    }
    if (source.is_object() && source.contains("random")) {
      return random_policy(ns, na, source.at("random").get<std::uint64_t>());
    }
    const json& table = source.is_object() && source.contains("table") ? source.at("table") : source;
    Policy policy = policy_from_json(table);
    if (policy.n_states() != ns || policy.n_actions() != na) {
      throw ConfigError(std::string(which) + ": policy table must be " + std::to_string(ns) + "x" +
                        std::to_string(na));
    }
    return policy;
  } catch (const json::exception& e) {
    throw ConfigError(std::string(which) + ": " + e.what());
  } catch (const std::invalid_argument& e) {
    if (dynamic_cast<const ConfigError*>(&e) != nullptr) {
      throw;
    }
    throw ConfigError(std::string(which) + ": " + e.what());
  }
}

FeatureMap build_features(const json& source, const FiniteMdp& mdp) {
  try {
    if (source.is_string() && source.get<std::string>() == "tabular") {
      return tabular_features(mdp.n_states());
    }
    if (source.is_object() && source.contains("random")) {
      const json& r = source.at("random");
      return random_features(mdp.n_states(), r.at("dim").get<int>(), r.at("seed").get<std::uint64_t>());
    }
    if (source.is_object() && source.contains("table")) {
      Matrix phi = matrix_from_json(source.at("table"));
      if (phi.rows() != mdp.n_states()) {
        throw ConfigError("features: table needs one row per state");
      }
      return FeatureMap(std::move(phi));
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("features: ") + e.what());
  } catch (const std::invalid_argument& e) {
    if (dynamic_cast<const ConfigError*>(&e) != nullptr) {
      throw;
    }
    throw ConfigError(std::string("features: ") + e.what());
  }
  throw ConfigError("features must be \"tabular\", {\"random\": {dim, seed}} or {\"table\": [[...]]}");
}

StepSchedule build_schedule(const json& doc, const char* which) {
  reject_unknown_keys(doc, {"initial", "scale", "offset", "exponent"}, which);
  const double offset = get_or(doc, "offset", 1.0);
  const double exponent = get_or(doc, "exponent", 1.0);
  if (doc.contains("initial") && doc.contains("scale")) {
    throw ConfigError(std::string(which) + ": give either 'initial' or 'scale', not both");
  }
  if (doc.contains("initial")) {
    return StepSchedule::from_initial(get_or(doc, "initial", 1.0), offset, exponent);
  }
  return StepSchedule{get_or(doc, "scale", 1.0), offset, exponent};
}

json schedule_json(const StepSchedule& s) {
  return json{{"scale", s.scale}, {"offset", s.offset}, {"exponent", s.exponent}};
}

std::string timestamp() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm utc{};
  gmtime_r(&now, &utc);
  std::ostringstream os;
  os << std::put_time(&utc, "%Y-%m-%dT%H:%M:%SZ");
  return os.str();
}

std::shared_ptr<const TdcProblem> make_problem(const ExperimentConfig& config) {
  return std::make_shared<const TdcProblem>(*config.mdp, *config.target, *config.behavior, *config.features,
                                            config.reward_noise);
}

Vector random_in_ball(Index dim, double radius, Rng& rng) {
  std::normal_distribution<double> normal;
  std::uniform_real_distribution<double> uniform(0.0, 1.0);
  Vector v(dim);
  for (Index i = 0; i < dim; ++i) {
    v(i) = normal(rng);
  }
  const double r = radius * std::pow(uniform(rng), 1.0 / static_cast<double>(dim));
  return v.normalized() * r;
}

Vector random_in_box(Index dim, double radius, Rng& rng) {
  std::uniform_real_distribution<double> box(-radius, radius);
  Vector v(dim);
  for (Index i = 0; i < dim; ++i) {
    v(i) = box(rng);
  }
  return v;
}

double relative_error(const Vector& theta, const Vector& reference) {
  const double scale = reference.norm();
  return scale > 0.0 ? (theta - reference).norm() / scale : (theta - reference).norm();
}

json check(const std::string& name, bool passed, double value, double threshold) {
  return json{{"check", name}, {"passed", passed}, {"value", value}, {"threshold", threshold}};
}

/// Smallest n with t(n) >= target, where t(n) = sum_{k<n} a(k).
std::int64_t index_reaching_time(const StepSchedule& a, double target) {
  double t = 0.0;
  double compensation = 0.0;
  std::int64_t n = 0;
  while (t + compensation < target) {
    const double step = a(n);
    const double sum = t + step;
    compensation += std::abs(t) >= std::abs(step) ? (t - sum) + step : (step - sum) + t;
    t = sum;
    ++n;
  }
  return n;
}

double time_of_index(const StepSchedule& a, std::int64_t n) {
  double t = 0.0;
  double compensation = 0.0;
  for (std::int64_t k = 0; k < n; ++k) {
    const double step = a(k);
    const double sum = t + step;
    compensation += std::abs(t) >= std::abs(step) ? (t - sum) + step : (step - sum) + t;
    t = sum;
  }
  return t + compensation;
}

}  // namespace

std::optional<json> builtin_preset(const std::string& name) {
  if (name == "chain3") {
    return json::parse(kChain3);
  }
  if (name == "random5") {
    return json::parse(kRandom5);
  }
  if (name == "bad_schedule") {
    return json::parse(kBadSchedule);
  }
  return std::nullopt;
}

std::vector<std::string> builtin_preset_names() { return {"chain3", "random5", "bad_schedule"}; }

std::vector<std::uint64_t> parse_seeds(const std::string& text) {
  std::vector<std::uint64_t> out;
  if (text.find(',') == std::string::npos) {
    std::size_t used = 0;
    long long count = 0;
    try {
      count = std::stoll(text, &used);
    } catch (const std::exception&) {
      throw ConfigError("seeds: expected a count or a comma-separated list, got '" + text + "'");
    }
    if (used != text.size() || count < 1) {
      throw ConfigError("seeds: expected a positive count, got '" + text + "'");
    }
    for (long long s = 1; s <= count; ++s) {
      out.push_back(static_cast<std::uint64_t>(s));
    }
    return out;
  }
  std::stringstream stream(text);
  std::string item;
  while (std::getline(stream, item, ',')) {
    std::size_t used = 0;
    try {
      const unsigned long long seed = std::stoull(item, &used);
      if (used != item.size()) {
        throw ConfigError("seeds: bad entry '" + item + "'");
      }
      out.push_back(seed);
    } catch (const std::logic_error&) {
      throw ConfigError("seeds: bad entry '" + item + "'");
    }
  }
  if (out.empty()) {
    throw ConfigError("seeds: empty list");
  }
  return out;
}

ExperimentConfig parse_config(const json& doc, const fs::path& base_dir) {
  if (!doc.is_object()) {
    throw ConfigError("config must be a JSON object");
  }
  reject_unknown_keys(doc,
                      {"name", "mdp", "target", "behavior", "features", "reward_noise", "schedule", "horizon",
                       "seeds", "thinning", "divergence_bound", "output_dir", "pipelines", "aux_seed", "ode",
                       "audit"},
                      "config");
  ExperimentConfig config;
  config.name = get_or<std::string>(doc, "name", config.name);
  if (!doc.contains("mdp")) {
    throw ConfigError("config needs an 'mdp' field");
  }
  config.mdp_source = doc.at("mdp");
  config.mdp = build_mdp(config.mdp_source, base_dir);
  config.target_source = doc.value("target", json("uniform"));
  config.behavior_source = doc.value("behavior", json("uniform"));
  config.feature_source = doc.value("features", json("tabular"));
  config.target = build_policy(config.target_source, *config.mdp, "target");
  config.behavior = build_policy(config.behavior_source, *config.mdp, "behavior");
  config.features = build_features(config.feature_source, *config.mdp);
  config.reward_noise.half_width = get_or(doc, "reward_noise", 0.0);
  if (!(config.reward_noise.half_width >= 0.0)) {
    throw ConfigError("reward_noise must be a nonnegative half-width");
  }
  if (doc.contains("schedule")) {
    const json& s = doc.at("schedule");
    reject_unknown_keys(s, {"slow", "fast"}, "schedule");
    if (s.contains("slow")) {
      config.schedule.slow = build_schedule(s.at("slow"), "schedule.slow");
    }
    if (s.contains("fast")) {
      config.schedule.fast = build_schedule(s.at("fast"), "schedule.fast");
    }
  }
  config.horizon = get_or(doc, "horizon", config.horizon);
  if (config.horizon < 1) {
    throw ConfigError("horizon must be positive");
  }
  if (doc.contains("seeds")) {
    const json& s = doc.at("seeds");
    if (s.is_number_integer()) {
      config.seeds = parse_seeds(std::to_string(s.get<long long>()));
    } else if (s.is_array() && !s.empty()) {
      config.seeds = s.get<std::vector<std::uint64_t>>();
    } else {
      throw ConfigError("seeds must be a positive count or a non-empty list");
    }
  }
  config.thinning = get_or(doc, "thinning", config.thinning);
  if (config.thinning < 1) {
    throw ConfigError("thinning must be positive");
  }
  config.divergence_bound = get_or(doc, "divergence_bound", config.divergence_bound);
  config.output_dir = get_or<std::string>(doc, "output_dir", config.output_dir.string());
  if (doc.contains("pipelines")) {
    config.pipelines.clear();
    for (const auto& p : doc.at("pipelines")) {
      const auto name = p.get<std::string>();
      if (name != "oracle" && name != "tdc" && name != "ode" && name != "audit") {
        throw ConfigError("unknown pipeline '" + name + "'");
      }
      config.pipelines.insert(name);
    }
  }
  config.aux_seed = get_or(doc, "aux_seed", config.aux_seed);
  if (doc.contains("ode")) {
    const json& o = doc.at("ode");
    reject_unknown_keys(o, {"starts", "start_radius", "tracking_window", "tracking_points", "max_dt"}, "ode");
    config.ode.starts = get_or(o, "starts", config.ode.starts);
    config.ode.start_radius = get_or(o, "start_radius", config.ode.start_radius);
    config.ode.tracking_window = get_or(o, "tracking_window", config.ode.tracking_window);
    config.ode.tracking_points = get_or(o, "tracking_points", config.ode.tracking_points);
    config.ode.max_dt = get_or(o, "max_dt", config.ode.max_dt);
  }
  if (doc.contains("audit")) {
    const json& a = doc.at("audit");
    reject_unknown_keys(a, {"points", "draws", "lipschitz_pairs", "radius"}, "audit");
    config.audit.points = get_or(a, "points", config.audit.points);
    config.audit.draws = get_or(a, "draws", config.audit.draws);
    config.audit.lipschitz_pairs = get_or(a, "lipschitz_pairs", config.audit.lipschitz_pairs);
    config.audit.radius = get_or(a, "radius", config.audit.radius);
  }
  return config;
}

ExperimentConfig load_config(const std::string& path_or_preset) {
  const fs::path path(path_or_preset);
  if (fs::is_regular_file(path)) {
    return parse_config(read_json_file(path), path.parent_path());
  }
  if (auto preset = builtin_preset(path_or_preset)) {
    return parse_config(*preset);
  }
  throw IoError("no config file or bundled preset named '" + path_or_preset + "'");
}

json to_json(const ExperimentConfig& config) {
  json pipelines = json::array();
  for (const auto& p : config.pipelines) {
    pipelines.push_back(p);
  }
  json mdp;
  twotime::to_json(mdp, *config.mdp);
  json target;
  twotime::to_json(target, *config.target);
  json behavior;
  twotime::to_json(behavior, *config.behavior);
  return json{
      {"name", config.name},
      {"mdp_source", config.mdp_source},
      {"mdp", mdp},
      {"target_source", config.target_source},
      {"target", target},
      {"behavior_source", config.behavior_source},
      {"behavior", behavior},
      {"feature_source", config.feature_source},
      {"features", to_json_array(config.features->matrix())},
      {"reward_noise", config.reward_noise.half_width},
      {"schedule", {{"slow", schedule_json(config.schedule.slow)}, {"fast", schedule_json(config.schedule.fast)}}},
      {"horizon", config.horizon},
      {"seeds", config.seeds},
      {"thinning", config.thinning},
      {"divergence_bound", config.divergence_bound},
      {"output_dir", config.output_dir.string()},
      {"pipelines", pipelines},
      {"aux_seed", config.aux_seed},
      {"ode",
       {{"starts", config.ode.starts},
        {"start_radius", config.ode.start_radius},
        {"tracking_window", config.ode.tracking_window},
        {"tracking_points", config.ode.tracking_points},
        {"max_dt", config.ode.max_dt}}},
      {"audit",
       {{"points", config.audit.points},
        {"draws", config.audit.draws},
        {"lipschitz_pairs", config.audit.lipschitz_pairs},
        {"radius", config.audit.radius}}},
  };
}

ValidationReport validate_config(const ExperimentConfig& config) {
  ValidationReport report = validate_schedule_pair(config.schedule);
  const ValidationReport mdp_report = validate_mdp(*config.mdp, *config.target, *config.behavior);
  for (const auto& finding : mdp_report.findings) {
    report.findings.push_back(finding);
  }
  report.add("feature-rows", config.features->n_states() == config.mdp->n_states(),
             "features need one row per state");
  report.add("divergence-bound", config.divergence_bound > 0.0, "divergence bound must be positive");
  return report;
}

json oracle_pipeline(const ExperimentConfig& config, const OracleSolution& solution) {
  json doc;
  twotime::to_json(doc, solution);
  doc["experiment"] = config.name;
  return doc;
}

TdcSweep tdc_pipeline(const ExperimentConfig& config, const OracleSolution& solution) {
  const auto problem = make_problem(config);
  const TwoTimescaleProblem engine_problem = make_tdc_problem(problem);
  TdcSweep sweep;
  sweep.logs.resize(config.seeds.size());
  std::size_t next = 0;
  std::mutex mutex;
  auto worker = [&] {
    for (;;) {
      std::size_t index = 0;
      {
        std::lock_guard<std::mutex> lock(mutex);
        if (next >= config.seeds.size()) {
          return;
        }
        index = next++;
      }
      RunConfig run;
      run.horizon = config.horizon;
      run.seed = config.seeds[index];
      run.thinning = config.thinning;
      run.divergence_bound = config.divergence_bound;
      run.lambda = solution.lambda;
      run.theta_reference = solution.theta_star;
      sweep.logs[index] = run_two_timescale(engine_problem, config.schedule, run);
    }
  };
  const std::size_t workers =
      std::min<std::size_t>(config.seeds.size(), std::max(1u, std::thread::hardware_concurrency()));
  std::vector<std::thread> threads;
  for (std::size_t i = 1; i < workers; ++i) {
    threads.emplace_back(worker);
  }
  worker();
  for (auto& t : threads) {
    t.join();
  }

  json per_seed = json::array();
  std::vector<double> tails;
  std::vector<double> final_decade_medians;
  bool decades_monotone = true;
  for (const auto& log : sweep.logs) {
    const std::size_t last = log.size() - 1;
    const double final_rel = relative_error(Vector(log.theta_at(last)), solution.theta_star);
    json entry = trajectory_summary(log);
    entry["final_relative_error"] = final_rel;
    entry["final_coupling_error"] = log.coupling_error[last];
    per_seed.push_back(entry);
    sweep.any_diverged = sweep.any_diverged || log.diverged;
    tails.push_back(log.tail_median_relative_error.value_or(std::numeric_limits<double>::infinity()));
    double previous = std::numeric_limits<double>::infinity();
    for (const auto& d : log.coupling_decades) {
      if (d.decade < 3) {
        continue;
      }
      decades_monotone = decades_monotone && d.median <= previous;
      previous = d.median;
    }
    final_decade_medians.push_back(log.coupling_decades.empty() ? std::numeric_limits<double>::infinity()
                                                                 : log.coupling_decades.back().median);
  }
  const double median_tail = median(tails);
  const double worst_tail = *std::max_element(tails.begin(), tails.end());
  const double worst_final_decade = *std::max_element(final_decade_medians.begin(), final_decade_medians.end());
  sweep.summary = json{
      {"seeds", per_seed},
      {"median_tail_relative_error", median_tail},
      {"max_tail_relative_error", worst_tail},
      {"max_final_decade_coupling_median", worst_final_decade},
      {"diverged", sweep.any_diverged},
      {"checks",
       json::array({check("median tail relative error <= 0.05", median_tail <= 0.05, median_tail, 0.05),
                    check("every seed tail relative error <= 0.15", worst_tail <= 0.15, worst_tail, 0.15),
                    check("coupling decade medians non-increasing from 10^3", decades_monotone,
                          decades_monotone ? 1.0 : 0.0, 1.0),
                    check("final decade coupling median <= 0.1", worst_final_decade <= 0.1, worst_final_decade,
                          0.1)})},
  };
  return sweep;
}

json ode_pipeline(const ExperimentConfig& config, const OracleSolution& solution) {
  Rng rng(config.aux_seed);
  const double min_eig_c = solution.conditions.min_eig_C;
  const double horizon_fast = 50.0 / min_eig_c;

  // Faster field at the limit point and at one random theta.
  json fast_runs = json::array();
  double fast_worst = 0.0;
  const std::vector<Vector> thetas{solution.theta_star,
                                   random_in_box(solution.theta_star.size(), config.ode.start_radius, rng)};
  for (const auto& theta : thetas) {
    const OdeField field = faster_field(solution, theta);
    const double dt = std::max(default_step(field), horizon_fast / 1e6);
    const Vector target = lambda_map(solution, theta);
    for (int k = 0; k < config.ode.starts; ++k) {
      const Vector w0 = random_in_ball(field.dim, config.ode.start_radius, rng);
      const auto trajectory = integrate(field, w0, horizon_fast, dt);
      const double err = (trajectory.x.back() - target).norm();
      fast_worst = std::max(fast_worst, err);
      fast_runs.push_back(json{{"theta", to_json_array(theta)}, {"w0", to_json_array(w0)}, {"endpoint_error", err}});
    }
  }

  const OdeField slow = slower_field(solution);
  Eigen::EigenSolver<Matrix> eig(slow.affine->linear);
  const double slow_rate = -eig.eigenvalues().real().maxCoeff();
  const double horizon_slow = 50.0 / slow_rate;
  const double slow_dt = std::max(default_step(slow), horizon_slow / 1e6);
  json slow_runs = json::array();
  double slow_worst = 0.0;
  for (int k = 0; k < config.ode.starts; ++k) {
    const Vector theta0 = random_in_ball(slow.dim, config.ode.start_radius, rng);
    const auto trajectory = integrate(slow, theta0, horizon_slow, slow_dt);
    const double err = (trajectory.x.back() - solution.theta_star).norm();
    slow_worst = std::max(slow_worst, err);
    slow_runs.push_back(json{{"theta0", to_json_array(theta0)}, {"endpoint_error", err}});
  }

  // Tracking diagnostic on one unthinned run that covers the last requested window.
  const StepSchedule& a = config.schedule.slow;
  std::vector<std::int64_t> points;
  for (const auto n : config.ode.tracking_points) {
    if (n >= 0 && n <= config.horizon) {
      points.push_back(n);
    }
  }
  std::sort(points.begin(), points.end());
  json tracking = json::array();
  std::vector<double> errors;
  if (!points.empty()) {
    const double t_last = time_of_index(a, points.back()) + config.ode.tracking_window;
    const auto problem = make_problem(config);
    const TwoTimescaleProblem engine_problem = make_tdc_problem(problem);
    RunConfig run;
    run.horizon = index_reaching_time(a, t_last) + 1;
    run.seed = config.seeds.front();
    run.thinning = 1;
    run.divergence_bound = config.divergence_bound;
    const TrajectoryLog log = run_two_timescale(engine_problem, config.schedule, run);
    if (!log.diverged) {
      for (const auto n : points) {
        const double s = log.t[static_cast<std::size_t>(n)];
        const double err =
            tracking_error(log, engine_problem.mean_slow, solution.lambda, s, config.ode.tracking_window,
                           config.ode.max_dt);
        errors.push_back(err);
        tracking.push_back(json{{"n", n}, {"s", s}, {"error", err}});
      }
    }
  }
  bool decreasing = !errors.empty();
  for (std::size_t i = 1; i < errors.size(); ++i) {
    decreasing = decreasing && errors[i] < errors[i - 1];
  }
  const double final_tracking = errors.empty() ? std::numeric_limits<double>::infinity() : errors.back();

  json checks = json::array(
      {check("faster field endpoints within 1e-6 of lambda(theta)", fast_worst <= 1e-6, fast_worst, 1e-6),
       check("slower field endpoints within 1e-6 of theta*", slow_worst <= 1e-6, slow_worst, 1e-6),
       check("max real eigenvalue of -C < 0", solution.conditions.max_real_eig_fast < 0.0,
             solution.conditions.max_real_eig_fast, 0.0),
       check("max real eigenvalue of -A^T C^-1 A < 0", solution.conditions.max_real_eig_slow < 0.0,
             solution.conditions.max_real_eig_slow, 0.0)});
  if (!points.empty()) {
    checks.push_back(check("tracking errors strictly decrease", decreasing, decreasing ? 1.0 : 0.0, 1.0));
    checks.push_back(check("final tracking error <= 0.05", final_tracking <= 0.05, final_tracking, 0.05));
  }
  return json{{"faster_field",
               {{"T", horizon_fast}, {"runs", fast_runs}, {"max_endpoint_error", fast_worst}}},
              {"slower_field", {{"T", horizon_slow}, {"runs", slow_runs}, {"max_endpoint_error", slow_worst}}},
              {"tracking", {{"window", config.ode.tracking_window}, {"seed", config.seeds.front()}, {"points", tracking}}},
              {"checks", checks}};
}

json audit_pipeline(const ExperimentConfig& config, const OracleSolution& solution) {
  const auto problem = make_problem(config);
  const TwoTimescaleProblem engine_problem = make_tdc_problem(problem);
  Rng rng(config.aux_seed + 1);
  const double k_noise = analytic_noise_constant(*problem);
  json points = json::array();
  bool martingale_ok = true;
  double worst_ratio = 0.0;
  std::uniform_int_distribution<int> state(0, config.mdp->n_states() - 1);
  for (int i = 0; i < config.audit.points; ++i) {
    const Vector theta = random_in_box(problem->dim(), config.audit.radius, rng);
    const Vector w = random_in_box(problem->dim(), config.audit.radius, rng);
    const int z = state(rng);
    const MartingaleReport report =
        martingale_check(engine_problem, theta, w, z, config.audit.draws, config.aux_seed + 100 + i);
    martingale_ok = martingale_ok && report.passed();
    worst_ratio = std::max({worst_ratio, report.slow.second_moment_ratio, report.fast.second_moment_ratio});
    json entry = report;
    entry["theta"] = to_json_array(theta);
    entry["w"] = to_json_array(w);
    entry["z"] = z;
    points.push_back(entry);
  }
  const LipschitzEstimate lip =
      lipschitz_estimate(engine_problem, config.audit.lipschitz_pairs, config.audit.radius, config.aux_seed + 2);
  const double lip_bound = analytic_lipschitz_bound(*problem);
  const ValidationReport schedule = validate_schedule_pair(config.schedule);
  json clauses = json::array();
  for (const auto& f : schedule.findings) {
    clauses.push_back(json{{"clause", f.clause}, {"passed", f.passed}, {"detail", f.detail}});
  }
  (void)solution;
  return json{
      {"martingale", {{"points", points}, {"draws", config.audit.draws}}},
      {"noise_constant", {{"K", k_noise}, {"max_second_moment_ratio", worst_ratio}}},
      {"lipschitz", {{"h", lip.h}, {"g", lip.g}, {"analytic_bound", lip_bound}, {"pairs", config.audit.lipschitz_pairs}}},
      {"schedule", clauses},
      {"checks",
       json::array({check("martingale mean within 4 sigma at every point", martingale_ok, martingale_ok ? 1.0 : 0.0,
                          1.0),
                    check("second moment ratio <= K", worst_ratio <= k_noise, worst_ratio, k_noise),
                    check("lipschitz estimate of h <= analytic bound", lip.h <= lip_bound, lip.h, lip_bound),
                    check("lipschitz estimate of g <= analytic bound", lip.g <= lip_bound, lip.g, lip_bound),
                    check("schedule conditions hold", schedule.ok(), schedule.ok() ? 1.0 : 0.0, 1.0)})},
  };
}

void write_json(const fs::path& path, const json& doc) {
  std::ofstream out(path);
  if (!out) {
    throw IoError("cannot write " + path.string());
  }
  out << doc.dump(2) << '\n';
  if (!out) {
    throw IoError("failed writing " + path.string());
  }
}

json error_record(const std::string& kind, const std::string& message, int exit_code) {
  return json{{"error", kind}, {"message", message}, {"exit_code", exit_code}};
}

RunResult run_experiment(const ExperimentConfig& config, std::ostream& log) {
  RunResult result;
  const ValidationReport report = validate_config(config);
  if (!report.ok()) {
    result.exit_code = kValidationFailure;
    result.summary = error_record("validation", report.to_string(), kValidationFailure);
    return result;
  }
  OracleSolution solution;
  try {
    solution = solve_oracle(*config.mdp, *config.target, *config.behavior, *config.features);
  } catch (const ValidationError& e) {
    result.exit_code = kValidationFailure;
    result.summary = error_record("validation", e.report().to_string(), kValidationFailure);
    return result;
  } catch (const NotIrreducibleError& e) {
    result.exit_code = kValidationFailure;
    result.summary = error_record("validation", e.what(), kValidationFailure);
    return result;
  } catch (const SingularSystemError& e) {
    result.exit_code = kValidationFailure;
    result.summary = error_record("validation", e.what(), kValidationFailure);
    return result;
  }

  std::error_code ec;
  fs::create_directories(config.output_dir, ec);
  if (ec) {
    throw IoError("cannot create " + config.output_dir.string() + ": " + ec.message());
  }

  json summary{{"generated_at", timestamp()}, {"config", to_json(config)}};
  json checks = json::array();
  auto collect = [&](const json& part) {
    for (const auto& c : part.at("checks")) {
      checks.push_back(c);
    }
  };

  const json oracle = oracle_pipeline(config, solution);
  if (config.pipelines.count("oracle") != 0) {
    write_json(config.output_dir / "oracle.json", oracle);
    log << "oracle: theta* = " << solution.theta_star.transpose() << '\n';
  }
  summary["theta_star"] = to_json_array(solution.theta_star);

  bool diverged = false;
  if (config.pipelines.count("tdc") != 0) {
    TdcSweep sweep = tdc_pipeline(config, solution);
    for (std::size_t i = 0; i < sweep.logs.size(); ++i) {
      const fs::path path = config.output_dir / ("trajectory_seed_" + std::to_string(config.seeds[i]) + ".csv");
      std::ofstream out(path);
      if (!out) {
        throw IoError("cannot write " + path.string());
      }
      write_trajectory_csv(out, sweep.logs[i]);
      if (!out) {
        throw IoError("failed writing " + path.string());
      }
    }
    log << "tdc: " << sweep.logs.size() << " seeds, median tail relative error "
        << sweep.summary.at("median_tail_relative_error").get<double>() << '\n';
    diverged = sweep.any_diverged;
    collect(sweep.summary);
    summary["tdc"] = std::move(sweep.summary);
  }
  if (config.pipelines.count("ode") != 0 && !diverged) {
    json ode = ode_pipeline(config, solution);
    write_json(config.output_dir / "ode.json", ode);
    std::vector<double> sequence;
    for (const auto& p : ode.at("tracking").at("points")) {
      sequence.push_back(p.at("error").get<double>());
    }
    summary["tracking_errors"] = sequence;
    log << "ode: tracking errors";
    for (double e : sequence) {
      log << ' ' << e;
    }
    log << '\n';
    collect(ode);
  }
  if (config.pipelines.count("audit") != 0) {
    json audit = audit_pipeline(config, solution);
    write_json(config.output_dir / "audit.json", audit);
    log << "audit: lipschitz h " << audit.at("lipschitz").at("h").get<double>() << " <= "
        << audit.at("lipschitz").at("analytic_bound").get<double>() << '\n';
    collect(audit);
  }
  bool all_passed = true;
  for (const auto& c : checks) {
    all_passed = all_passed && c.at("passed").get<bool>();
  }
  summary["checks"] = checks;
  summary["all_checks_passed"] = all_passed;
  if (diverged) {
    summary["error"] = error_record("divergence", "at least one seed exceeded the divergence bound", kDivergence);
    result.exit_code = kDivergence;
  }
  write_json(config.output_dir / "summary.json", summary);
  result.summary = std::move(summary);
  return result;
}

}  // namespace twotime::harness
