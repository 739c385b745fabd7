#ifndef TWOTIME_MDP_HPP_
#define TWOTIME_MDP_HPP_

#include <cstdint>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "twotime/types.hpp"

namespace twotime {

using StateId = int;
using ActionId = int;

/*!
 * @brief Finite discounted MDP with tensors p(s'|s,a) and r(s,a,s').
 *
 * Both tensors are stored densely in (s, a, s') order. The constructor only checks shapes;
 * stochasticity and the discount range are reported by validate_mdp().
 */
class FiniteMdp {
 public:
  FiniteMdp(int n_states, int n_actions, double gamma, std::vector<double> p, std::vector<double> r);

  int n_states() const { return n_states_; }
  int n_actions() const { return n_actions_; }
  double gamma() const { return gamma_; }

  double p(StateId s, ActionId a, StateId s_next) const { return p_[offset(s, a, s_next)]; }
  double r(StateId s, ActionId a, StateId s_next) const { return r_[offset(s, a, s_next)]; }

  const std::vector<double>& p_data() const { return p_; }
  const std::vector<double>& r_data() const { return r_; }

  /// Same dynamics and rewards with another discount.
  FiniteMdp with_gamma(double gamma) const;

 private:
  std::size_t offset(StateId s, ActionId a, StateId s_next) const {
    return (static_cast<std::size_t>(s) * n_actions_ + a) * n_states_ + s_next;
  }

  int n_states_;
  int n_actions_;
  double gamma_;
  std::vector<double> p_;
  std::vector<double> r_;
};

/// Row-stochastic action-probability table pi(a|s), one row per state.
class Policy {
 public:
  explicit Policy(Matrix probs);

  static Policy uniform(int n_states, int n_actions);
  /// Deterministic policy that always picks `action`.
  static Policy greedy_on_action(int n_states, int n_actions, ActionId action);
  /// Point masses on the given per-state actions.
  static Policy deterministic(int n_actions, const std::vector<ActionId>& actions);

  double operator()(StateId s, ActionId a) const { return probs_(s, a); }
  const Matrix& probs() const { return probs_; }
  int n_states() const { return static_cast<int>(probs_.rows()); }
  int n_actions() const { return static_cast<int>(probs_.cols()); }

 private:
  Matrix probs_;
};

/// State features, one row phi(s)^T per state. Full column rank is enforced on construction.
class FeatureMap {
 public:
  explicit FeatureMap(Matrix phi);

  const Matrix& matrix() const { return phi_; }
  int n_states() const { return static_cast<int>(phi_.rows()); }
  int dim() const { return static_cast<int>(phi_.cols()); }
  auto row(StateId s) const { return phi_.row(s).transpose(); }
  /// max_s ||phi(s)||.
  double max_row_norm() const;

 private:
  Matrix phi_;
};

struct Transition {
  StateId s = 0;
  ActionId a = 0;
  double reward = 0.0;
  StateId s_next = 0;
};

/// Half-width of the optional additive uniform reward noise; 0 means expected rewards only.
struct RewardNoise {
  double half_width = 0.0;
};

/// Smallest singular value of phi after scaling each column to unit norm.
double normalized_min_singular_value(const Matrix& phi);

ValidationReport validate_mdp(const FiniteMdp& mdp, const Policy& pi, const Policy& pi_b);

/// pi(a|s) / pi_b(a|s). Throws std::domain_error when pi_b(a|s) == 0.
double importance_weight(const Policy& pi, const Policy& pi_b, StateId s, ActionId a);

/// Draws an index from a discrete distribution given as a strided row of probabilities.
int sample_categorical(const double* probs, int count, std::ptrdiff_t stride, Rng& rng);

/// a ~ pi_b(.|s), s' ~ p(.|s,a), reward = r(s,a,s') plus optional zero-mean noise.
Transition sample_step(const FiniteMdp& mdp, const Policy& pi_b, StateId s, Rng& rng,
                       RewardNoise noise = {});

/// True iff the support graph of a square nonnegative matrix is strongly connected.
bool is_strongly_connected(const Matrix& transition);

/*!
 * @brief Random row-stochastic MDP with i.i.d. uniform [0,1] rewards.
 *
 * `sparsity` in [0,1) is the fraction of successor entries zeroed per (s,a) row; every row keeps
 * at least two nonzero successors. The uniform-behavior chain is required to be irreducible; the
 * seed is incremented on failure, up to 100 retries.
 */
FiniteMdp random_mdp(int n_states, int n_actions, double sparsity, std::uint64_t seed,
                     double gamma = 0.9);

FeatureMap tabular_features(int n_states);
/// Gaussian features scaled so that max_s ||phi(s)|| = 1; resampled on rank failure.
FeatureMap random_features(int n_states, int dim, std::uint64_t seed);

/// Random stochastic policy with rows drawn uniformly from the simplex.
Policy random_policy(int n_states, int n_actions, std::uint64_t seed);

/// Canonical 3-state cycle: actions {stay=0, go=1}, reward 1 on entering state 0.
FiniteMdp chain3_mdp(double gamma = 0.9);
inline constexpr ActionId kChain3Stay = 0;
inline constexpr ActionId kChain3Go = 1;

// JSON document: {"n_states", "n_actions", "gamma", "p": [s][a][s'], "r": [s][a][s']}.
void to_json(nlohmann::json& j, const FiniteMdp& mdp);
FiniteMdp mdp_from_json(const nlohmann::json& j);
void to_json(nlohmann::json& j, const Policy& policy);
Policy policy_from_json(const nlohmann::json& j);

}  // namespace twotime

#endif  // TWOTIME_MDP_HPP_
