#ifndef TWOTIME_AUDIT_HPP_
#define TWOTIME_AUDIT_HPP_

#include <cstdint>

#include <nlohmann/json_fwd.hpp>

#include "twotime/engine.hpp"
#include "twotime/tdc.hpp"
#include "twotime/types.hpp"

namespace twotime {

/// Martingale-difference evidence for one of the two sampled updates.
struct MartingaleComponent {
  double deviation = 0.0;  ///< ||mean(sample) - exact mean||
  double bound = 0.0;      ///< 4 ||sigma_hat|| / sqrt(n)
  bool passed = false;
  /// mean ||sample - exact mean||^2 / (1 + ||theta||^2 + ||w||^2)
  double second_moment_ratio = 0.0;
};

struct MartingaleReport {
  MartingaleComponent slow;
  MartingaleComponent fast;
  std::int64_t draws = 0;

  bool passed() const { return slow.passed && fast.passed; }
};

/// Draws the sampled updates n_draws times at a fixed (theta, w, z) and compares with the exact
/// means. Throws std::invalid_argument when the problem has no exact means.
MartingaleReport martingale_check(const TwoTimescaleProblem& problem, const Vector& theta, const Vector& w,
                                  std::int64_t z, std::int64_t n_draws, std::uint64_t seed);

struct LipschitzEstimate {
  double h = 0.0;
  double g = 0.0;
};

/*!
 * @brief Empirical Lipschitz constants of the exact means in (theta, w), uniformly over z.
 *
 * Ratio ||f(theta,w,z) - f(theta',w',z)|| / (||theta-theta'|| + ||w-w'||) maximized over random
 * pairs in the box [-radius, radius] and over the noise support. The first pairs are refined
 * with finite-difference Jacobians, whose block spectral norms are attained ratios as well.
 */
LipschitzEstimate lipschitz_estimate(const TwoTimescaleProblem& problem, std::int64_t n_pairs, double radius,
                                     std::uint64_t seed);

/// L max(2 M^2, M^2) with L = max rho and M = max ||phi(s)||; bounds both h and g.
double analytic_lipschitz_bound(const TdcProblem& problem);

/// K with E||M_{n+1}||^2 <= K (1 + ||theta||^2 + ||w||^2): 3 L^2 M^2 max(Rmax^2, 4 M^2).
double analytic_noise_constant(const TdcProblem& problem);

struct WalkSummary {
  std::int64_t min_position = 0;
  std::int64_t max_position = 0;
  std::int64_t final_position = 0;
  /// sup_n L(Z_n) with L(n) = ((1-p)/p)^n, attained at the minimum position.
  double sup_L = 1.0;
};

/// Walk on the integers from 0, up with probability p in (1/2, 1), down otherwise.
WalkSummary transient_walk(double p, std::int64_t horizon, std::uint64_t seed);

void to_json(nlohmann::json& j, const MartingaleComponent& c);
void to_json(nlohmann::json& j, const MartingaleReport& r);
void to_json(nlohmann::json& j, const WalkSummary& w);

}  // namespace twotime

#endif  // TWOTIME_AUDIT_HPP_
