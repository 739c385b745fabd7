#ifndef TWOTIME_ODE_HPP_
#define TWOTIME_ODE_HPP_

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <vector>

#include "twotime/engine.hpp"
#include "twotime/oracle.hpp"
#include "twotime/tdc.hpp"
#include "twotime/types.hpp"

namespace twotime {

/// Autonomous vector field x -> f(x). Affine fields keep their matrix for spectral checks.
struct OdeField {
  Index dim = 0;
  std::function<Vector(const Vector&)> evaluate;
  std::optional<AffineMap> affine;

  static OdeField from_affine(AffineMap map);
  Vector operator()(const Vector& x) const { return evaluate(x); }
};

/// w -> (b - A theta) - C w; equilibrium lambda(theta).
OdeField faster_field(const OracleSolution& solution, const Vector& theta);
/// theta -> A^T C^{-1} (b - A theta); equilibrium theta*.
OdeField slower_field(const OracleSolution& solution);
/// theta -> (b - A theta) - gamma M lambda(theta), the same field written with the correction term.
OdeField slower_field_corrected(const OracleSolution& solution);

/// Zero of an affine field.
Vector equilibrium(const OdeField& field);
/// 1e-3 / (1 + ||matrix||_2) for affine fields, 1e-3 otherwise.
double default_step(const OdeField& field);

struct OdeTrajectory {
  std::vector<double> t;
  std::vector<Vector> x;
};

class NonFiniteStateError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Classical RK4 with fixed step dt on [0, T]; the last step is shortened to land on T exactly.
OdeTrajectory integrate(const OdeField& field, const Vector& x0, double T, double dt);

/// Piecewise-constant noise: z[k] is in effect on [t[k], t[k+1]).
struct NoisePath {
  std::vector<double> t;
  std::vector<std::int64_t> z;
};

NoisePath noise_path(const TrajectoryLog& log);

/*!
 * @brief Integrates theta' = h(theta, lambda(theta), z(t)) on [t0, t1] with z(t) from the path.
 *
 * RK4 substeps never cross a knot of the path; each piece is split into equal substeps of at most
 * max_dt. Throws std::out_of_range when the path does not cover [t0, t1].
 */
OdeTrajectory nonautonomous_integrate(const MeanField& h, const AffineMap& lambda, const NoisePath& path,
                                      const Vector& theta_start, double t0, double t1, double max_dt);
OdeTrajectory nonautonomous_integrate(const TdcProblem& problem, const AffineMap& lambda,
                                      const NoisePath& path, const Vector& theta_start, double t0,
                                      double t1, double max_dt);

/*!
 * @brief sup over [s, s+T] of ||theta_bar(t) - theta^s(t)||.
 *
 * theta^s starts from the interpolated iterate at s and follows the non-autonomous ODE driven by
 * the logged noise path. Needs an unthinned log covering [s, s+T].
 */
double tracking_error(const TrajectoryLog& log, const MeanField& h, const AffineMap& lambda, double s,
                      double T, double max_dt = 1e-2);

/// (C0 + (M + L ||lambda(0)||) T) exp(L (K + 1) T): a-priori bound on the tracking ODE solution.
double gronwall_solution_bound(double c0, double m, double lipschitz_h, double lipschitz_lambda,
                               double lambda0_norm, double T);

/// CSV with header "t,x_0..x_{m-1}".
void write_ode_csv(std::ostream& os, const OdeTrajectory& trajectory);

}  // namespace twotime

#endif  // TWOTIME_ODE_HPP_
