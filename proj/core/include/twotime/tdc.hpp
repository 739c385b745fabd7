#ifndef TWOTIME_TDC_HPP_
#define TWOTIME_TDC_HPP_

#include <cstdint>
#include <memory>

#include "twotime/engine.hpp"
#include "twotime/mdp.hpp"
#include "twotime/types.hpp"

namespace twotime {

/*!
 * @brief Off-policy TDC with importance weighting on a finite MDP.
 *
 * Holds the MDP, the target and behavior policies and the features. Construction validates the
 * MDP against both policies and throws ValidationError on any violation.
 */
class TdcProblem {
 public:
  TdcProblem(FiniteMdp mdp, Policy pi, Policy pi_b, FeatureMap phi, RewardNoise noise = {});

  const FiniteMdp& mdp() const { return mdp_; }
  const Policy& target() const { return pi_; }
  const Policy& behavior() const { return pi_b_; }
  const FeatureMap& features() const { return phi_; }
  const RewardNoise& reward_noise() const { return noise_; }
  int dim() const { return phi_.dim(); }
  double gamma() const { return mdp_.gamma(); }

  /// Row phi(s) without copying.
  Eigen::Map<const Vector> feature(StateId s) const {
    return Eigen::Map<const Vector>(rows_.data() + static_cast<std::size_t>(s) * phi_.dim(), phi_.dim());
  }
  /// max over (s, a) of pi(a|s)/pi_b(a|s) where pi_b(a|s) > 0.
  double max_importance_weight() const;
  double max_feature_norm() const { return phi_.max_row_norm(); }
  /// max |r(s,a,s')| plus the reward-noise half width.
  double max_abs_reward() const;

 private:
  FiniteMdp mdp_;
  Policy pi_;
  Policy pi_b_;
  FeatureMap phi_;
  RewardNoise noise_;
  std::vector<double> rows_;
};

/// R + gamma theta^T phi(s') - theta^T phi(s).
double td_error(const Vector& theta, const Transition& tr, const FeatureMap& phi, double gamma);

/// Sampled increments H = rho (delta phi - gamma phi' phi^T w) and G = (rho delta - phi^T w) phi.
void tdc_increments(const TdcProblem& problem, const Vector& theta, const Vector& w,
                    const Transition& tr, double rho, UpdateSample& out);

struct TdcIterate {
  Vector theta;
  Vector w;
};

/// One TDC update with explicit steps a_n (theta) and b_n (w).
TdcIterate tdc_step(const Vector& theta, const Vector& w, const Transition& tr, double rho, double a_n,
                    double b_n, const FeatureMap& phi, double gamma);

/// E[H | X_{n-1} = z] by enumeration over X_n ~ P_b(z,.), A_n ~ pi_b, X_{n+1} ~ p.
Vector conditional_h(const TdcProblem& problem, const Vector& theta, const Vector& w, StateId z);
/// E[G | X_{n-1} = z] by the same enumeration.
Vector conditional_g(const TdcProblem& problem, const Vector& theta, const Vector& w, StateId z);

struct TdcRunOptions {
  /// Replaces H by 0 so theta stays at its initial value.
  bool freeze_theta = false;
  Vector initial_theta;  ///< zeros when empty
  Vector initial_w;      ///< zeros when empty
  /// X_{-1}; the first transition starts from a state drawn from P_b(initial_state, .).
  StateId initial_state = 0;
};

/// Wires sampling and the TDC increments into the engine contract with shared noise Z_n = X_{n-1}.
TwoTimescaleProblem make_tdc_problem(std::shared_ptr<const TdcProblem> problem,
                                     const TdcRunOptions& options = {});
TwoTimescaleProblem make_tdc_problem(const FiniteMdp& mdp, const Policy& pi, const Policy& pi_b,
                                     const FeatureMap& phi, RewardNoise noise = {},
                                     const TdcRunOptions& options = {});

struct EmpiricalMoments {
  Matrix A;
  Vector b;
  Matrix C;
};

/// Sample averages of rho phi (phi - gamma phi')^T, rho R phi and phi phi^T along one behavior
/// trajectory started at state 0, after discarding 1% of n_samples as burn-in.
EmpiricalMoments empirical_moments(const FiniteMdp& mdp, const Policy& pi, const Policy& pi_b,
                                   const FeatureMap& phi, std::int64_t n_samples, std::uint64_t seed);

}  // namespace twotime

#endif  // TWOTIME_TDC_HPP_
