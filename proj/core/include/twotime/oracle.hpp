#ifndef TWOTIME_ORACLE_HPP_
#define TWOTIME_ORACLE_HPP_

#include <nlohmann/json_fwd.hpp>

#include "twotime/mdp.hpp"
#include "twotime/types.hpp"

namespace twotime {

/// Condition numbers and spectra that certify the linear systems and both limiting ODEs.
struct ConditionReport {
  double cond_A = 0.0;
  double cond_C = 0.0;
  double min_eig_C = 0.0;
  double max_eig_C = 0.0;
  /// Largest real part among eigenvalues of -C (negative means the fast ODE is stable).
  double max_real_eig_fast = 0.0;
  /// Largest real part among eigenvalues of -A^T C^{-1} A (negative means the slow ODE is stable).
  double max_real_eig_slow = 0.0;
  /// Total variation between the least-squares and power-iteration stationary distributions.
  double stationary_crosscheck_tv = 0.0;
};

struct Moments {
  Matrix A;  ///< E[rho phi(X) (phi(X) - gamma phi(X'))^T]
  Vector b;  ///< E[rho R phi(X)]
  Matrix C;  ///< E[phi(X) phi(X)^T]
  Matrix M;  ///< E[rho phi(X') phi(X)^T]
};

/// Exact ground truth for one (MDP, target, behavior, features) instance.
struct OracleSolution {
  double gamma = 0.0;
  Vector nu;
  Matrix P_b;
  Matrix A;
  Vector b;
  Matrix C;
  Matrix M;
  Vector theta_star;
  /// lambda(theta) = C^{-1} b - C^{-1} A theta, stored as an affine map.
  AffineMap lambda;
  ConditionReport conditions;
};

/// P_b(s, s') = sum_a pi_b(a|s) p(s'|s,a).
Matrix behavior_matrix(const FiniteMdp& mdp, const Policy& pi_b);

/*!
 * @brief Unique stationary distribution of an irreducible chain.
 *
 * Solves the stacked system [P^T - I; 1^T] nu = [0; 1] in the least-squares sense. Throws
 * NotIrreducibleError when the support graph is not strongly connected.
 */
Vector stationary_distribution(const Matrix& P);

/// Power iteration on the lazy chain (I + P)/2, used only as a cross-check.
Vector stationary_distribution_power(const Matrix& P, int iterations = 100000);

double total_variation(const Vector& p, const Vector& q);

Moments compute_moments(const FiniteMdp& mdp, const Policy& pi, const Policy& pi_b,
                        const FeatureMap& phi, const Vector& nu);

/// Dense solve of A theta = b. Throws SingularSystemError when cond(A) exceeds 1e12.
Vector td_fixed_point(const Matrix& A, const Vector& b);

/// V^pi = (I - gamma P_pi)^{-1} r_pi.
Vector bellman_value(const FiniteMdp& mdp, const Policy& pi);

double condition_number(const Matrix& m);

/// Builds the full solution; throws on validation failure, reducibility or singular systems.
OracleSolution solve_oracle(const FiniteMdp& mdp, const Policy& pi, const Policy& pi_b,
                            const FeatureMap& phi);

/// C^{-1}(b - A theta).
Vector lambda_map(const OracleSolution& solution, const Vector& theta);

/// Mean square projected Bellman error (b - A theta)^T C^{-1} (b - A theta).
double objective_J(const OracleSolution& solution, const Vector& theta);
/// Gradient of objective_J: -2 A^T C^{-1} (b - A theta).
Vector grad_J(const OracleSolution& solution, const Vector& theta);
/// -1/2 grad J written with the correction term: (b - A theta) - gamma M lambda(theta).
Vector neg_half_grad_corrected(const OracleSolution& solution, const Vector& theta);

void to_json(nlohmann::json& j, const ConditionReport& report);
void to_json(nlohmann::json& j, const OracleSolution& solution);

}  // namespace twotime

#endif  // TWOTIME_ORACLE_HPP_
