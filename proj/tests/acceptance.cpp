// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any criterion fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include <Eigen/Eigenvalues>

#include "twotime/audit.hpp"
#include "twotime/engine.hpp"
#include "twotime/mdp.hpp"
#include "twotime/ode.hpp"
#include "twotime/oracle.hpp"
#include "twotime/tdc.hpp"

using namespace twotime;

namespace {

struct Instance {
  std::string name;
  FiniteMdp mdp;
  Policy target;
  Policy behavior;
  FeatureMap features;
};

Instance chain3() {
  return {"chain3", chain3_mdp(0.9), Policy::greedy_on_action(3, 2, kChain3Go), Policy::uniform(3, 2),
          tabular_features(3)};
}

Instance random5() {
  return {"random5", random_mdp(5, 2, 0.0, 7, 0.9), Policy::greedy_on_action(5, 2, 0), Policy::uniform(5, 2),
          random_features(5, 3, 11)};
}

OracleSolution solve(const Instance& i) { return solve_oracle(i.mdp, i.target, i.behavior, i.features); }

std::shared_ptr<const TdcProblem> tdc(const Instance& i) {
  return std::make_shared<const TdcProblem>(i.mdp, i.target, i.behavior, i.features);
}

const SchedulePair kAcceptanceSchedule{StepSchedule::from_initial(0.5, 1e4, 1.0),
                                       StepSchedule::from_initial(0.5, 1e4, 0.6)};

Vector uniform_vector(Index dim, double radius, Rng& rng) {
  std::uniform_real_distribution<double> u(-radius, radius);
  Vector v(dim);
  for (Index i = 0; i < dim; ++i) {
    v(i) = u(rng);
  }
  return v;
}

/// V^pi from (I - gamma P_pi) V = r_pi, assembled directly from the tensors.
Vector value_by_direct_solve(const FiniteMdp& m, const Policy& pi) {
  const int n = m.n_states();
  Matrix P = Matrix::Zero(n, n);
  Vector r = Vector::Zero(n);
  for (int s = 0; s < n; ++s) {
    for (int a = 0; a < m.n_actions(); ++a) {
      for (int t = 0; t < n; ++t) {
        P(s, t) += pi(s, a) * m.p(s, a, t);
        r(s) += pi(s, a) * m.p(s, a, t) * m.r(s, a, t);
      }
    }
  }
  return (Matrix::Identity(n, n) - m.gamma() * P).fullPivLu().solve(r);
}

double max_real_eigenvalue(const Matrix& m) {
  return Eigen::EigenSolver<Matrix>(m).eigenvalues().real().maxCoeff();
}

class Report {
 public:
  void line(int criterion, bool passed, const std::string& text) {
    std::printf("%s [%d] %s\n", passed ? "PASS" : "FAIL", criterion, text.c_str());
    std::fflush(stdout);
    all_passed_ = all_passed_ && passed;
  }
  bool all_passed() const { return all_passed_; }

 private:
  bool all_passed_ = true;
};

template <class... Args>
std::string fmt(const char* format, Args... args) {
  char buffer[512];
  std::snprintf(buffer, sizeof(buffer), format, args...);
  return buffer;
}

// [1] Tabular fixed point equals the Bellman value.
void criterion_fixed_point(Report& report) {
  std::vector<Instance> instances{chain3()};
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const int n = 3 + static_cast<int>(seed);
    instances.push_back({"random-tabular", random_mdp(n, 2, 0.3, seed, 0.9), random_policy(n, 2, seed + 100),
                         Policy::uniform(n, 2), tabular_features(n)});
  }
  double worst = 0.0;
  const auto start = std::chrono::steady_clock::now();
  std::vector<Vector> thetas;
  for (const auto& i : instances) {
    thetas.push_back(solve(i).theta_star);
  }
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  for (std::size_t k = 0; k < instances.size(); ++k) {
    const Vector v = value_by_direct_solve(instances[k].mdp, instances[k].target);
    worst = std::max(worst, (thetas[k] - v).norm() / v.norm());
  }
  report.line(1, worst <= 1e-8 && seconds < 1.0,
              fmt("tabular theta* vs V^pi on 6 instances: max relative error %.3g (tol 1e-8), solve time %.3g s "
                  "(limit 1 s)",
                  worst, seconds));
}

// [2] Gradient identity and finite differences of J.
void criterion_gradient(Report& report) {
  const Instance inst = random5();
  const OracleSolution sol = solve(inst);
  const Matrix Cinv = sol.C.inverse();
  Rng rng(2024);
  double worst_identity = 0.0;
  double worst_fd = 0.0;
  for (int k = 0; k < 20; ++k) {
    const Vector theta = uniform_vector(3, 10.0, rng);
    const Vector residual = sol.b - sol.A * theta;
    const Vector lam = Cinv * residual;
    const Vector corrected = residual - sol.gamma * sol.M * lam;
    const Vector half_grad = -0.5 * grad_J(sol, theta);
    worst_identity = std::max({worst_identity, (half_grad - corrected).norm() / (1.0 + theta.norm()),
                               (neg_half_grad_corrected(sol, theta) - corrected).norm() / (1.0 + theta.norm())});
    Vector fd(3);
    for (int i = 0; i < 3; ++i) {
      const double h = 1e-4 * (1.0 + std::abs(theta(i)));
      Vector plus = theta;
      Vector minus = theta;
      plus(i) += h;
      minus(i) -= h;
      fd(i) = (objective_J(sol, plus) - objective_J(sol, minus)) / (2.0 * h);
    }
    const Vector grad = grad_J(sol, theta);
    worst_fd = std::max(worst_fd, (fd - grad).norm() / std::max(1.0, grad.norm()));
  }
  report.line(2, worst_identity <= 1e-10 && worst_fd <= 1e-5,
              fmt("-grad J/2 = (b - A theta) - gamma M lambda(theta) at 20 points: max scaled gap %.3g (tol 1e-10); "
                  "finite differences %.3g (tol 1e-5)",
                  worst_identity, worst_fd));
}

struct SweepResult {
  std::vector<TrajectoryLog> logs;
};

SweepResult sweep(const Instance& inst, const OracleSolution& sol) {
  const TwoTimescaleProblem problem = make_tdc_problem(tdc(inst));
  SweepResult out;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    RunConfig c;
    c.horizon = 2000000;
    c.seed = seed;
    c.thinning = 1000;
    c.lambda = sol.lambda;
    c.theta_reference = sol.theta_star;
    out.logs.push_back(run_two_timescale(problem, kAcceptanceSchedule, c));
  }
  return out;
}

// [3] Convergence to theta*; [4] decay of the coupling error.
void criteria_convergence_and_coupling(Report& report) {
  bool pass3 = true;
  bool pass4 = true;
  std::string detail3;
  std::string detail4;
  for (const Instance& inst : {chain3(), random5()}) {
    const OracleSolution sol = solve(inst);
    const SweepResult result = sweep(inst, sol);
    std::vector<double> tails;
    bool diverged = false;
    bool monotone = true;
    double worst_final_decade = 0.0;
    for (const auto& log : result.logs) {
      diverged = diverged || log.diverged;
      tails.push_back(log.tail_median_relative_error.value_or(std::numeric_limits<double>::infinity()));
      double previous = std::numeric_limits<double>::infinity();
      for (const auto& d : log.coupling_decades) {
        if (d.decade < 3) {
          continue;
        }
        monotone = monotone && d.median <= previous;
        previous = d.median;
      }
      worst_final_decade = std::max(worst_final_decade, log.coupling_decades.back().median);
    }
    std::vector<double> sorted = tails;
    std::sort(sorted.begin(), sorted.end());
    const double med = 0.5 * (sorted[4] + sorted[5]);
    const double worst = sorted.back();
    pass3 = pass3 && !diverged && med <= 0.05 && worst <= 0.15;
    pass4 = pass4 && !diverged && monotone && worst_final_decade <= 0.1;
    detail3 += fmt("; %s median %.4g, worst seed %.4g", inst.name.c_str(), med, worst);
    detail4 += fmt("; %s non-increasing from 1e3: %s, final decade median %.4g", inst.name.c_str(),
                   monotone ? "yes" : "no", worst_final_decade);
  }
  report.line(3, pass3,
              "final-window relative error over 10 seeds x 2e6 steps (median tol 0.05, every seed tol 0.15)" +
                  detail3);
  report.line(4, pass4, "coupling-error decade medians (final decade tol 0.1)" + detail4);
}

// [5] Frozen slow iterate: the fast iterate converges to lambda(theta_0); the fast ODE as well.
void criterion_frozen(Report& report) {
  const Instance inst = chain3();
  const auto problem = tdc(inst);
  const OracleSolution sol = solve(inst);
  const SchedulePair pair{StepSchedule{1.0, 1.0, 1.0}, StepSchedule{1.0, 1.0, 0.9}};
  Rng rng(55);
  double worst_sa = 0.0;
  bool frozen = true;
  for (int k = 0; k < 5; ++k) {
    TdcRunOptions opts;
    opts.freeze_theta = true;
    opts.initial_theta = uniform_vector(3, 5.0, rng);
    RunConfig c;
    c.horizon = 1000000;
    c.seed = 500 + k;
    c.thinning = 1000000;
    const TrajectoryLog log = run_two_timescale(make_tdc_problem(problem, opts), pair, c);
    const std::size_t last = log.size() - 1;
    frozen = frozen && Vector(log.theta_at(last)) == opts.initial_theta;
    const Vector target = sol.C.fullPivLu().solve(sol.b - sol.A * opts.initial_theta);
    worst_sa = std::max(worst_sa, (Vector(log.w_at(last)) - target).norm());
  }

  double worst_ode = 0.0;
  const double T = 50.0 / sol.conditions.min_eig_C;
  for (int k = 0; k < 10; ++k) {
    const Vector theta = uniform_vector(3, 5.0, rng);
    const OdeField field = faster_field(sol, theta);
    const auto traj = integrate(field, uniform_vector(3, 10.0, rng), T, default_step(field));
    const Vector target = sol.C.fullPivLu().solve(sol.b - sol.A * theta);
    worst_ode = std::max(worst_ode, (traj.x.back() - target).norm());
  }
  report.line(5, frozen && worst_sa <= 0.02 && worst_ode <= 1e-6,
              fmt("frozen theta, 5 draws in [-5,5]^3, 1e6 steps: max ||w_n - lambda(theta_0)|| %.4g (tol 0.02); "
                  "fast ODE from 10 starts: max endpoint distance %.3g (tol 1e-6)",
                  worst_sa, worst_ode));
}

// [6] Interpolated iterates track the non-autonomous slow ODE with shrinking error.
void criterion_tracking(Report& report) {
  const Instance inst = chain3();
  const auto problem = tdc(inst);
  const OracleSolution sol = solve(inst);
  const std::vector<std::int64_t> points{100, 10000, 1000000};
  const double window = 1.0;
  // Horizon whose time t(n) covers t(1e6) + window.
  long double t = 0.0L;
  std::int64_t n = 0;
  long double t_last = -1.0L;
  for (;; ++n) {
    if (n == points.back()) {
      t_last = t + window;
    }
    if (t_last >= 0.0L && t >= t_last) {
      break;
    }
    t += kAcceptanceSchedule.slow(n);
  }
  const TwoTimescaleProblem engine = make_tdc_problem(problem);
  RunConfig c;
  c.horizon = n + 1;
  c.seed = 1;
  c.thinning = 1;
  const TrajectoryLog log = run_two_timescale(engine, kAcceptanceSchedule, c);
  std::vector<double> errors;
  for (const auto p : points) {
    errors.push_back(tracking_error(log, engine.mean_slow, sol.lambda, log.t[static_cast<std::size_t>(p)], window));
  }
  bool decreasing = true;
  for (std::size_t i = 1; i < errors.size(); ++i) {
    decreasing = decreasing && errors[i] < errors[i - 1];
  }
  report.line(6, !log.diverged && decreasing && errors.back() <= 0.05,
              fmt("chain3 tracking error over T = 1 at t(1e2), t(1e4), t(1e6): %.3g, %.3g, %.3g "
                  "(strictly decreasing, final tol 0.05)",
                  errors[0], errors[1], errors[2]));
}

// [7] Sample moments converge to the oracle moments.
void criterion_moments(Report& report) {
  const Instance inst = chain3();
  const OracleSolution sol = solve(inst);
  double worst = 0.0;
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    const auto est = empirical_moments(inst.mdp, inst.target, inst.behavior, inst.features, 1000000, seed);
    worst = std::max({worst, (est.A - sol.A).norm() / sol.A.norm(), (est.b - sol.b).norm() / sol.b.norm(),
                      (est.C - sol.C).norm() / sol.C.norm()});
  }
  report.line(7, worst <= 0.02,
              fmt("chain3 sample moments A, b, C from 1e6 transitions, 3 seeds: max relative error %.4g (tol 0.02)",
                  worst));
}

// [8] Assumption audit: schedules, martingale noise, Lipschitz means, transient walk.
void criterion_audit(Report& report) {
  struct Family {
    SchedulePair pair;
    std::string expected;  // empty: valid
  };
  const std::vector<Family> families{
      {kAcceptanceSchedule, ""},
      {{StepSchedule{1, 1, 1.0}, StepSchedule{1, 1, 0.6}}, ""},
      {{StepSchedule{1, 1, 1.0}, StepSchedule{1, 1, 0.9}}, ""},
      {{StepSchedule{1, 1, 0.6}, StepSchedule{1, 1, 0.6}}, "a(n)/b(n) -> 0"},
      {{StepSchedule{1, 1, 0.4}, StepSchedule{1, 1, 0.3}}, "sum a(n)^2 < inf"},
      {{StepSchedule{1, 1, 1.5}, StepSchedule{1, 1, 0.6}}, "sum a(n) = inf"},
  };
  bool schedules_ok = true;
  for (const auto& f : families) {
    const ValidationReport r = validate_schedule_pair(f.pair);
    schedules_ok = schedules_ok && (f.expected.empty() ? r.ok() : r.has_violation(f.expected));
  }
  bool pass = schedules_ok;
  std::string detail = schedules_ok ? "schedule families classified correctly" : "schedule families misclassified";

  for (const Instance& inst : {chain3(), random5()}) {
    const auto problem = tdc(inst);
    const TwoTimescaleProblem engine = make_tdc_problem(problem);
    const double K = analytic_noise_constant(*problem);
    Rng rng(8000);
    std::uniform_int_distribution<int> state(0, inst.mdp.n_states() - 1);
    int passed = 0;
    double worst_ratio = 0.0;
    for (int k = 0; k < 20; ++k) {
      const Vector theta = uniform_vector(problem->dim(), 10.0, rng);
      const Vector w = uniform_vector(problem->dim(), 10.0, rng);
      const MartingaleReport m = martingale_check(engine, theta, w, state(rng), 100000, 9000 + k);
      passed += m.passed() ? 1 : 0;
      worst_ratio = std::max({worst_ratio, m.slow.second_moment_ratio, m.fast.second_moment_ratio});
    }
    pass = pass && passed == 20 && worst_ratio <= K;
    detail += fmt("; %s martingale 4-sigma %d/20 points, second moment ratio %.4g (K = %.4g)", inst.name.c_str(),
                  passed, worst_ratio, K);
    const LipschitzEstimate lip = lipschitz_estimate(engine, 1000, 10.0, 77);
    const double bound = analytic_lipschitz_bound(*problem);
    pass = pass && lip.h <= bound && lip.g <= bound;
    detail += fmt(", Lipschitz h %.4g g %.4g (bound %.4g)", lip.h, lip.g, bound);
  }

  std::int64_t worst_min = 0;
  for (std::uint64_t seed = 1; seed <= 100; ++seed) {
    worst_min = std::min(worst_min, transient_walk(0.9, 100000, seed).min_position);
  }
  pass = pass && worst_min >= -20;
  detail += fmt("; transient walk p = 0.9 over 100 seeds: lowest position %lld (bound -20)",
                static_cast<long long>(worst_min));
  report.line(8, pass, detail);
}

// [9] Both limiting ODEs are stable on every bundled instance.
void criterion_spectra(Report& report) {
  bool pass = true;
  std::string detail = "max real eigenvalues of -C and -A^T C^-1 A (both < 0)";
  for (const Instance& inst : {chain3(), random5()}) {
    const OracleSolution sol = solve(inst);
    const double fast = max_real_eigenvalue(-sol.C);
    const double slow = max_real_eigenvalue(-sol.A.transpose() * sol.C.inverse() * sol.A);
    const bool agrees = std::abs(fast - sol.conditions.max_real_eig_fast) <= 1e-9 &&
                        std::abs(slow - sol.conditions.max_real_eig_slow) <= 1e-9;
    pass = pass && fast < 0.0 && slow < 0.0 && agrees;
    detail += fmt("; %s %.4g, %.4g", inst.name.c_str(), fast, slow);
  }
  report.line(9, pass, detail);
}

}  // namespace

int main() {
  Report report;
  criterion_fixed_point(report);
  criterion_gradient(report);
  criteria_convergence_and_coupling(report);
  criterion_frozen(report);
  criterion_tracking(report);
  criterion_moments(report);
  criterion_audit(report);
  criterion_spectra(report);
  std::printf("%s\n", report.all_passed() ? "ALL CRITERIA PASSED" : "SOME CRITERIA FAILED");
  return report.all_passed() ? 0 : 1;
}
