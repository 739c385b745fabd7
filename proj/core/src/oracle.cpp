#include "twotime/oracle.hpp"

#include <cmath>
#include <limits>
#include <sstream>

#include <nlohmann/json.hpp>

#include "twotime/json_eigen.hpp"

namespace twotime {

namespace {

constexpr double kMaxCondition = 1e12;

double max_real_eigenvalue(const Matrix& m) {
  Eigen::EigenSolver<Matrix> solver(m, /*computeEigenvectors=*/false);
  return solver.eigenvalues().real().maxCoeff();
}

}  // namespace

Matrix behavior_matrix(const FiniteMdp& mdp, const Policy& pi_b) {
  const int ns = mdp.n_states();
  Matrix P = Matrix::Zero(ns, ns);
  for (int s = 0; s < ns; ++s) {
    for (int a = 0; a < mdp.n_actions(); ++a) {
      const double weight = pi_b(s, a);
      if (weight == 0.0) {
        continue;
      }
      for (int t = 0; t < ns; ++t) {
        P(s, t) += weight * mdp.p(s, a, t);
      }
    }
  }
  return P;
}

Vector stationary_distribution(const Matrix& P) {
  if (P.rows() != P.cols()) {
    throw std::invalid_argument("stationary_distribution: matrix must be square");
  }
  if (!is_strongly_connected(P)) {
    throw NotIrreducibleError("stationary_distribution: chain is not irreducible");
  }
  const Index n = P.rows();
  Matrix system(n + 1, n);
  system.topRows(n) = P.transpose() - Matrix::Identity(n, n);
  system.row(n).setOnes();
  Vector rhs = Vector::Zero(n + 1);
  rhs(n) = 1.0;
  Vector nu = system.colPivHouseholderQr().solve(rhs);
  // Clip roundoff-level negatives and renormalize.
  nu = nu.cwiseMax(0.0);
  return nu / nu.sum();
}

Vector stationary_distribution_power(const Matrix& P, int iterations) {
  const Index n = P.rows();
  const Matrix lazy = 0.5 * (Matrix::Identity(n, n) + P);
  Eigen::RowVectorXd nu = Eigen::RowVectorXd::Constant(n, 1.0 / static_cast<double>(n));
  for (int k = 0; k < iterations; ++k) {
    nu = nu * lazy;
  }
  return (nu / nu.sum()).transpose();
}

double total_variation(const Vector& p, const Vector& q) { return 0.5 * (p - q).cwiseAbs().sum(); }

Moments compute_moments(const FiniteMdp& mdp, const Policy& pi, const Policy& pi_b,
                        const FeatureMap& phi, const Vector& nu) {
  const int ns = mdp.n_states();
  const int d = phi.dim();
  const double gamma = mdp.gamma();
  Moments m{Matrix::Zero(d, d), Vector::Zero(d), Matrix::Zero(d, d), Matrix::Zero(d, d)};
  for (int s = 0; s < ns; ++s) {
    const Vector phi_s = phi.row(s);
    m.C.noalias() += nu(s) * phi_s * phi_s.transpose();
    for (int a = 0; a < mdp.n_actions(); ++a) {
      if (pi(s, a) == 0.0) {
        continue;
      }
      const double rho = importance_weight(pi, pi_b, s, a);
      for (int t = 0; t < ns; ++t) {
        const double w = nu(s) * pi_b(s, a) * rho * mdp.p(s, a, t);
        if (w == 0.0) {
          continue;
        }
        const Vector phi_t = phi.row(t);
        m.A.noalias() += w * phi_s * (phi_s - gamma * phi_t).transpose();
        m.b.noalias() += w * mdp.r(s, a, t) * phi_s;
        m.M.noalias() += w * phi_t * phi_s.transpose();
      }
    }
  }
  return m;
}

double condition_number(const Matrix& m) {
  Eigen::JacobiSVD<Matrix> svd(m);
  const auto& sv = svd.singularValues();
  const double smallest = sv(sv.size() - 1);
  if (smallest == 0.0) {
    return std::numeric_limits<double>::infinity();
  }
  return sv(0) / smallest;
}

Vector td_fixed_point(const Matrix& A, const Vector& b) {
  if (A.rows() != A.cols() || A.rows() != b.size()) {
    throw std::invalid_argument("td_fixed_point: shape mismatch");
  }
  const double cond = condition_number(A);
  if (!(cond <= kMaxCondition)) {
    std::ostringstream os;
    os << "td_fixed_point: A is singular or ill-conditioned (cond=" << cond << ")";
    throw SingularSystemError(os.str(), cond);
  }
  return A.partialPivLu().solve(b);
}

Vector bellman_value(const FiniteMdp& mdp, const Policy& pi) {
  const int ns = mdp.n_states();
  Matrix P_pi = Matrix::Zero(ns, ns);
  Vector r_pi = Vector::Zero(ns);
  for (int s = 0; s < ns; ++s) {
    for (int a = 0; a < mdp.n_actions(); ++a) {
      for (int t = 0; t < ns; ++t) {
        const double w = pi(s, a) * mdp.p(s, a, t);
        P_pi(s, t) += w;
        r_pi(s) += w * mdp.r(s, a, t);
      }
    }
  }
  return (Matrix::Identity(ns, ns) - mdp.gamma() * P_pi).partialPivLu().solve(r_pi);
}

OracleSolution solve_oracle(const FiniteMdp& mdp, const Policy& pi, const Policy& pi_b,
                            const FeatureMap& phi) {
  if (phi.n_states() != mdp.n_states()) {
    throw std::invalid_argument("solve_oracle: feature rows must match the number of states");
  }
  auto report = validate_mdp(mdp, pi, pi_b);
  if (!report.ok()) {
    throw ValidationError(std::move(report));
  }
  OracleSolution sol;
  sol.gamma = mdp.gamma();
  sol.P_b = behavior_matrix(mdp, pi_b);
  sol.nu = stationary_distribution(sol.P_b);
  auto moments = compute_moments(mdp, pi, pi_b, phi, sol.nu);
  sol.A = std::move(moments.A);
  sol.b = std::move(moments.b);
  sol.C = std::move(moments.C);
  sol.M = std::move(moments.M);
  sol.theta_star = td_fixed_point(sol.A, sol.b);

  Eigen::LLT<Matrix> llt(sol.C);
  if (llt.info() != Eigen::Success) {
    throw SingularSystemError("solve_oracle: C is not positive definite", condition_number(sol.C));
  }
  const Matrix c_inv_a = llt.solve(sol.A);
  sol.lambda = AffineMap{-c_inv_a, llt.solve(sol.b)};

  auto& cr = sol.conditions;
  cr.cond_A = condition_number(sol.A);
  cr.cond_C = condition_number(sol.C);
  Eigen::SelfAdjointEigenSolver<Matrix> c_eig(sol.C, Eigen::EigenvaluesOnly);
  cr.min_eig_C = c_eig.eigenvalues().minCoeff();
  cr.max_eig_C = c_eig.eigenvalues().maxCoeff();
  cr.max_real_eig_fast = max_real_eigenvalue(-sol.C);
  cr.max_real_eig_slow = max_real_eigenvalue(-(sol.A.transpose() * c_inv_a));
  cr.stationary_crosscheck_tv = total_variation(sol.nu, stationary_distribution_power(sol.P_b));
  return sol;
}

Vector lambda_map(const OracleSolution& solution, const Vector& theta) { return solution.lambda(theta); }

double objective_J(const OracleSolution& solution, const Vector& theta) {
  const Vector residual = solution.b - solution.A * theta;
  return residual.dot(solution.C.llt().solve(residual));
}

Vector grad_J(const OracleSolution& solution, const Vector& theta) {
  const Vector residual = solution.b - solution.A * theta;
  return -2.0 * solution.A.transpose() * solution.C.llt().solve(residual);
}

Vector neg_half_grad_corrected(const OracleSolution& solution, const Vector& theta) {
  return (solution.b - solution.A * theta) - solution.gamma * solution.M * solution.lambda(theta);
}

void to_json(nlohmann::json& j, const ConditionReport& report) {
  j = nlohmann::json{{"cond_A", report.cond_A},
                     {"cond_C", report.cond_C},
                     {"min_eig_C", report.min_eig_C},
                     {"max_eig_C", report.max_eig_C},
                     {"max_real_eig_fast_ode", report.max_real_eig_fast},
                     {"max_real_eig_slow_ode", report.max_real_eig_slow},
                     {"stationary_crosscheck_tv", report.stationary_crosscheck_tv}};
}

void to_json(nlohmann::json& j, const OracleSolution& solution) {
  j = nlohmann::json{{"gamma", solution.gamma},
                     {"nu", to_json_array(solution.nu)},
                     {"P_b", to_json_array(solution.P_b)},
                     {"A", to_json_array(solution.A)},
                     {"b", to_json_array(solution.b)},
                     {"C", to_json_array(solution.C)},
                     {"M", to_json_array(solution.M)},
                     {"theta_star", to_json_array(solution.theta_star)},
                     {"lambda_gain", to_json_array(Matrix(-solution.lambda.linear))},
                     {"lambda_intercept", to_json_array(solution.lambda.offset)},
                     {"conditions", solution.conditions}};
}

}  // namespace twotime
