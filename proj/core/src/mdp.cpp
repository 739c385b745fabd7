#include "twotime/mdp.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include <nlohmann/json.hpp>

namespace twotime {

namespace {

constexpr double kRowTolerance = 1e-9;
constexpr double kRankTolerance = 1e-8;
constexpr int kMaxRetries = 100;

std::string at(int s, int a) {
  std::ostringstream os;
  os << "s=" << s << ", a=" << a;
  return os.str();
}

double uniform01(Rng& rng) { return std::uniform_real_distribution<double>(0.0, 1.0)(rng); }

}  // namespace

FiniteMdp::FiniteMdp(int n_states, int n_actions, double gamma, std::vector<double> p,
                     std::vector<double> r)
    : n_states_(n_states), n_actions_(n_actions), gamma_(gamma), p_(std::move(p)), r_(std::move(r)) {
  if (n_states < 1 || n_actions < 1) {
    throw std::invalid_argument("FiniteMdp: n_states and n_actions must be positive");
  }
  const auto expected = static_cast<std::size_t>(n_states) * n_actions * n_states;
  if (p_.size() != expected || r_.size() != expected) {
    throw std::invalid_argument("FiniteMdp: p and r must have n_states*n_actions*n_states entries");
  }
}

FiniteMdp FiniteMdp::with_gamma(double gamma) const {
  return FiniteMdp(n_states_, n_actions_, gamma, p_, r_);
}

Policy::Policy(Matrix probs) : probs_(std::move(probs)) {
  if (probs_.rows() < 1 || probs_.cols() < 1) {
    throw std::invalid_argument("Policy: empty probability table");
  }
}

Policy Policy::uniform(int n_states, int n_actions) {
  return Policy(Matrix::Constant(n_states, n_actions, 1.0 / n_actions));
}

Policy Policy::greedy_on_action(int n_states, int n_actions, ActionId action) {
  if (action < 0 || action >= n_actions) {
    throw std::invalid_argument("Policy::greedy_on_action: action out of range");
  }
  Matrix probs = Matrix::Zero(n_states, n_actions);
  probs.col(action).setOnes();
  return Policy(std::move(probs));
}

Policy Policy::deterministic(int n_actions, const std::vector<ActionId>& actions) {
  Matrix probs = Matrix::Zero(static_cast<Index>(actions.size()), n_actions);
  for (std::size_t s = 0; s < actions.size(); ++s) {
    if (actions[s] < 0 || actions[s] >= n_actions) {
      throw std::invalid_argument("Policy::deterministic: action out of range");
    }
    probs(static_cast<Index>(s), actions[s]) = 1.0;
  }
  return Policy(std::move(probs));
}

double normalized_min_singular_value(const Matrix& phi) {
  Matrix scaled = phi;
  for (Index j = 0; j < scaled.cols(); ++j) {
    const double norm = scaled.col(j).norm();
    if (norm == 0.0) {
      return 0.0;
    }
    scaled.col(j) /= norm;
  }
  if (scaled.cols() > scaled.rows()) {
    return 0.0;
  }
  Eigen::JacobiSVD<Matrix> svd(scaled);
  return svd.singularValues().minCoeff();
}

FeatureMap::FeatureMap(Matrix phi) : phi_(std::move(phi)) {
  if (phi_.rows() < 1 || phi_.cols() < 1) {
    throw std::invalid_argument("FeatureMap: empty feature matrix");
  }
  if (!(normalized_min_singular_value(phi_) > kRankTolerance)) {
    throw std::invalid_argument("FeatureMap: features are not full column rank");
  }
}

double FeatureMap::max_row_norm() const { return phi_.rowwise().norm().maxCoeff(); }

ValidationReport validate_mdp(const FiniteMdp& mdp, const Policy& pi, const Policy& pi_b) {
  const int ns = mdp.n_states();
  const int na = mdp.n_actions();
  if (pi.n_states() != ns || pi_b.n_states() != ns || pi.n_actions() != na ||
      pi_b.n_actions() != na) {
    throw std::invalid_argument("validate_mdp: policy shapes do not match the MDP");
  }

  ValidationReport report;
  if (!(mdp.gamma() > 0.0 && mdp.gamma() < 1.0)) {
    std::ostringstream os;
    os << "gamma=" << mdp.gamma();
    report.add("gamma-range", false, os.str());
  }
  for (int s = 0; s < ns; ++s) {
    for (int a = 0; a < na; ++a) {
      double sum = 0.0;
      bool negative = false;
      for (int t = 0; t < ns; ++t) {
        const double v = mdp.p(s, a, t);
        negative = negative || v < 0.0 || !std::isfinite(v);
        sum += v;
      }
      if (negative) {
        report.add("nonnegative", false, at(s, a));
      }
      if (std::abs(sum - 1.0) > kRowTolerance) {
        std::ostringstream os;
        os << at(s, a) << ", sum=" << sum;
        report.add("row-stochastic", false, os.str());
      }
    }
  }
  for (const auto* policy : {&pi, &pi_b}) {
    const char* name = policy == &pi ? "target" : "behavior";
    for (int s = 0; s < ns; ++s) {
      const auto row = policy->probs().row(s);
      if ((row.array() < 0.0).any()) {
        report.add("policy-nonnegative", false, std::string(name) + " policy, s=" + std::to_string(s));
      }
      if (std::abs(row.sum() - 1.0) > kRowTolerance) {
        report.add("policy-row-stochastic", false,
                   std::string(name) + " policy, s=" + std::to_string(s));
      }
    }
  }
  for (int s = 0; s < ns; ++s) {
    for (int a = 0; a < na; ++a) {
      if (pi(s, a) > 0.0 && !(pi_b(s, a) > 0.0)) {
        report.add("coverage", false, at(s, a));
      }
    }
  }
  return report;
}

double importance_weight(const Policy& pi, const Policy& pi_b, StateId s, ActionId a) {
  const double denom = pi_b(s, a);
  if (!(denom > 0.0)) {
    throw std::domain_error("importance_weight: behavior probability is zero at " + at(s, a));
  }
  return pi(s, a) / denom;
}

int sample_categorical(const double* probs, int count, std::ptrdiff_t stride, Rng& rng) {
  const double u = uniform01(rng);
  double cumulative = 0.0;
  int last_positive = 0;
  for (int i = 0; i < count; ++i) {
    const double q = probs[i * stride];
    if (q > 0.0) {
      cumulative += q;
      last_positive = i;
      if (u < cumulative) {
        return i;
      }
    }
  }
  // Rounding left u above the accumulated mass.
  return last_positive;
}

Transition sample_step(const FiniteMdp& mdp, const Policy& pi_b, StateId s, Rng& rng,
                       RewardNoise noise) {
  const Matrix& probs = pi_b.probs();
  const int a = sample_categorical(probs.data() + s, mdp.n_actions(), probs.outerStride(), rng);
  const double* row = mdp.p_data().data() +
                      (static_cast<std::size_t>(s) * mdp.n_actions() + a) * mdp.n_states();
  const int s_next = sample_categorical(row, mdp.n_states(), 1, rng);
  double reward = mdp.r(s, a, s_next);
  if (noise.half_width > 0.0) {
    reward += noise.half_width * (2.0 * uniform01(rng) - 1.0);
  }
  return {s, a, reward, s_next};
}

bool is_strongly_connected(const Matrix& transition) {
  const Index n = transition.rows();
  if (n != transition.cols() || n == 0) {
    return false;
  }
  auto reaches_all = [&](bool forward) {
    std::vector<char> seen(static_cast<std::size_t>(n), 0);
    std::vector<Index> stack{0};
    seen[0] = 1;
    Index count = 1;
    while (!stack.empty()) {
      const Index u = stack.back();
      stack.pop_back();
      for (Index v = 0; v < n; ++v) {
        const double weight = forward ? transition(u, v) : transition(v, u);
        if (weight > 0.0 && !seen[static_cast<std::size_t>(v)]) {
          seen[static_cast<std::size_t>(v)] = 1;
          ++count;
          stack.push_back(v);
        }
      }
    }
    return count == n;
  };
  return reaches_all(true) && reaches_all(false);
}

FiniteMdp random_mdp(int n_states, int n_actions, double sparsity, std::uint64_t seed, double gamma) {
  if (n_states < 2 || n_actions < 1) {
    throw std::invalid_argument("random_mdp: requires n_states >= 2 and n_actions >= 1");
  }
  if (!(sparsity >= 0.0 && sparsity < 1.0)) {
    throw std::invalid_argument("random_mdp: sparsity must lie in [0, 1)");
  }
  const auto size = static_cast<std::size_t>(n_states) * n_actions * n_states;
  const int drop = std::min(n_states - 2, static_cast<int>(std::floor(sparsity * n_states)));

  for (int attempt = 0; attempt <= kMaxRetries; ++attempt) {
    Rng rng(seed + static_cast<std::uint64_t>(attempt));
    std::vector<double> p(size, 0.0);
    std::vector<double> r(size, 0.0);
    std::vector<int> order(static_cast<std::size_t>(n_states));
    for (int s = 0; s < n_states; ++s) {
      for (int a = 0; a < n_actions; ++a) {
        const std::size_t base = (static_cast<std::size_t>(s) * n_actions + a) * n_states;
        std::iota(order.begin(), order.end(), 0);
        std::shuffle(order.begin(), order.end(), rng);
        double total = 0.0;
        for (int k = drop; k < n_states; ++k) {
          // Bounded away from zero so no kept successor is negligible.
          const double weight = 0.05 + uniform01(rng);
          p[base + static_cast<std::size_t>(order[static_cast<std::size_t>(k)])] = weight;
          total += weight;
        }
        for (int t = 0; t < n_states; ++t) {
          p[base + static_cast<std::size_t>(t)] /= total;
          r[base + static_cast<std::size_t>(t)] = uniform01(rng);
        }
      }
    }
    FiniteMdp mdp(n_states, n_actions, gamma, std::move(p), std::move(r));
    Matrix behavior = Matrix::Zero(n_states, n_states);
    for (int s = 0; s < n_states; ++s) {
      for (int a = 0; a < n_actions; ++a) {
        for (int t = 0; t < n_states; ++t) {
          behavior(s, t) += mdp.p(s, a, t) / n_actions;
        }
      }
    }
    if (is_strongly_connected(behavior)) {
      return mdp;
    }
  }
  throw std::runtime_error("random_mdp: no irreducible instance after 100 retries");
}

FeatureMap tabular_features(int n_states) {
  if (n_states < 1) {
    throw std::invalid_argument("tabular_features: n_states must be positive");
  }
  return FeatureMap(Matrix::Identity(n_states, n_states));
}

FeatureMap random_features(int n_states, int dim, std::uint64_t seed) {
  if (dim < 1 || dim > n_states) {
    throw std::invalid_argument("random_features: requires 1 <= d <= n_states");
  }
  for (int attempt = 0; attempt <= kMaxRetries; ++attempt) {
    Rng rng(seed + static_cast<std::uint64_t>(attempt));
    std::normal_distribution<double> normal(0.0, 1.0);
    Matrix phi(n_states, dim);
    for (Index i = 0; i < phi.rows(); ++i) {
      for (Index j = 0; j < phi.cols(); ++j) {
        phi(i, j) = normal(rng);
      }
    }
    phi /= phi.rowwise().norm().maxCoeff();
    if (normalized_min_singular_value(phi) > kRankTolerance) {
      return FeatureMap(std::move(phi));
    }
  }
  throw std::runtime_error("random_features: no full-rank feature matrix after 100 retries");
}

Policy random_policy(int n_states, int n_actions, std::uint64_t seed) {
  Rng rng(seed);
  std::exponential_distribution<double> expo(1.0);
  Matrix probs(n_states, n_actions);
  for (Index s = 0; s < probs.rows(); ++s) {
    for (Index a = 0; a < probs.cols(); ++a) {
      probs(s, a) = expo(rng);
    }
    probs.row(s) /= probs.row(s).sum();
  }
  return Policy(std::move(probs));
}

FiniteMdp chain3_mdp(double gamma) {
  constexpr int n = 3;
  constexpr int na = 2;
  std::vector<double> p(n * na * n, 0.0);
  std::vector<double> r(n * na * n, 0.0);
  for (int s = 0; s < n; ++s) {
    const int targets[na] = {s, (s + 1) % n};
    for (int a = 0; a < na; ++a) {
      p[static_cast<std::size_t>((s * na + a) * n + targets[a])] = 1.0;
      r[static_cast<std::size_t>((s * na + a) * n + 0)] = 1.0;
    }
  }
  return FiniteMdp(n, na, gamma, std::move(p), std::move(r));
}

void to_json(nlohmann::json& j, const FiniteMdp& mdp) {
  const int ns = mdp.n_states();
  const int na = mdp.n_actions();
  auto tensor = [&](auto get) {
    nlohmann::json out = nlohmann::json::array();
    for (int s = 0; s < ns; ++s) {
      nlohmann::json per_action = nlohmann::json::array();
      for (int a = 0; a < na; ++a) {
        nlohmann::json row = nlohmann::json::array();
        for (int t = 0; t < ns; ++t) {
          row.push_back(get(s, a, t));
        }
        per_action.push_back(std::move(row));
      }
      out.push_back(std::move(per_action));
    }
    return out;
  };
  j = nlohmann::json{{"n_states", ns},
                     {"n_actions", na},
                     {"gamma", mdp.gamma()},
                     {"p", tensor([&](int s, int a, int t) { return mdp.p(s, a, t); })},
                     {"r", tensor([&](int s, int a, int t) { return mdp.r(s, a, t); })}};
}

FiniteMdp mdp_from_json(const nlohmann::json& j) {
  const int ns = j.at("n_states").get<int>();
  const int na = j.at("n_actions").get<int>();
  const double gamma = j.at("gamma").get<double>();
  auto flatten = [&](const nlohmann::json& tensor, const char* name) {
    std::vector<double> out;
    out.reserve(static_cast<std::size_t>(ns) * na * ns);
    if (!tensor.is_array() || static_cast<int>(tensor.size()) != ns) {
      throw std::invalid_argument(std::string("MDP document: '") + name + "' must have n_states rows");
    }
    for (const auto& per_action : tensor) {
      if (!per_action.is_array() || static_cast<int>(per_action.size()) != na) {
        throw std::invalid_argument(std::string("MDP document: '") + name +
                                    "' must have n_actions entries per state");
      }
      for (const auto& row : per_action) {
        if (!row.is_array() || static_cast<int>(row.size()) != ns) {
          throw std::invalid_argument(std::string("MDP document: '") + name +
                                      "' rows must have n_states entries");
        }
        for (const auto& v : row) {
          out.push_back(v.get<double>());
        }
      }
    }
    return out;
  };
  return FiniteMdp(ns, na, gamma, flatten(j.at("p"), "p"), flatten(j.at("r"), "r"));
}

void to_json(nlohmann::json& j, const Policy& policy) {
  j = nlohmann::json::array();
  for (Index s = 0; s < policy.probs().rows(); ++s) {
    nlohmann::json row = nlohmann::json::array();
    for (Index a = 0; a < policy.probs().cols(); ++a) {
      row.push_back(policy.probs()(s, a));
    }
    j.push_back(std::move(row));
  }
}

Policy policy_from_json(const nlohmann::json& j) {
  if (!j.is_array() || j.empty() || !j.front().is_array() || j.front().empty()) {
    throw std::invalid_argument("policy document must be a non-empty array of rows");
  }
  Matrix probs(static_cast<Index>(j.size()), static_cast<Index>(j.front().size()));
  for (std::size_t s = 0; s < j.size(); ++s) {
    if (j[s].size() != j.front().size()) {
      throw std::invalid_argument("policy document rows must have equal length");
    }
    for (std::size_t a = 0; a < j[s].size(); ++a) {
      probs(static_cast<Index>(s), static_cast<Index>(a)) = j[s][a].get<double>();
    }
  }
  return Policy(std::move(probs));
}

}  // namespace twotime
