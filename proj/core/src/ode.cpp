#include "twotime/ode.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>

namespace twotime {

namespace {

template <class F>
Vector rk4_step(const F& f, const Vector& x, double h) {
  const Vector k1 = f(x);
  const Vector k2 = f(x + 0.5 * h * k1);
  const Vector k3 = f(x + 0.5 * h * k2);
  const Vector k4 = f(x + h * k3);
  return x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
}

void check_finite(const Vector& x, double t) {
  if (!x.allFinite()) {
    throw NonFiniteStateError("ODE state became non-finite at t=" + std::to_string(t));
  }
}

}  // namespace

OdeField OdeField::from_affine(AffineMap map) {
  if (map.linear.rows() != map.linear.cols() || map.offset.size() != map.linear.rows()) {
    throw std::invalid_argument("OdeField::from_affine: matrix must be square and match the offset");
  }
  OdeField field;
  field.dim = map.linear.rows();
  field.evaluate = [map](const Vector& x) { return Vector(map(x)); };
  field.affine = std::move(map);
  return field;
}

OdeField faster_field(const OracleSolution& solution, const Vector& theta) {
  return OdeField::from_affine(AffineMap{-solution.C, solution.b - solution.A * theta});
}

OdeField slower_field(const OracleSolution& solution) {
  const Eigen::LLT<Matrix> llt(solution.C);
  const Matrix at_cinv = solution.A.transpose() * llt.solve(Matrix::Identity(solution.C.rows(), solution.C.cols()));
  return OdeField::from_affine(AffineMap{-at_cinv * solution.A, at_cinv * solution.b});
}

OdeField slower_field_corrected(const OracleSolution& solution) {
  // lambda(theta) = lambda.linear * theta + lambda.offset.
  const Matrix linear = -solution.A - solution.gamma * solution.M * solution.lambda.linear;
  const Vector offset = solution.b - solution.gamma * solution.M * solution.lambda.offset;
  return OdeField::from_affine(AffineMap{linear, offset});
}

Vector equilibrium(const OdeField& field) {
  if (!field.affine) {
    throw std::logic_error("equilibrium: only affine fields have a closed-form equilibrium");
  }
  return field.affine->linear.partialPivLu().solve(-field.affine->offset);
}

double default_step(const OdeField& field) {
  if (!field.affine) {
    return 1e-3;
  }
  Eigen::JacobiSVD<Matrix> svd(field.affine->linear);
  return 1e-3 / (1.0 + svd.singularValues()(0));
}

OdeTrajectory integrate(const OdeField& field, const Vector& x0, double T, double dt) {
  if (!(dt > 0.0) || !(T >= dt)) {
    throw std::invalid_argument("integrate: requires dt > 0 and T >= dt");
  }
  if (x0.size() != field.dim) {
    throw std::invalid_argument("integrate: initial state has the wrong dimension");
  }
  auto full_steps = static_cast<std::int64_t>(std::floor(T / dt));
  double remainder = T - static_cast<double>(full_steps) * dt;
  if (remainder <= 1e-12 * T) {
    remainder = 0.0;
  }
  OdeTrajectory out;
  out.t.reserve(static_cast<std::size_t>(full_steps) + 2);
  out.x.reserve(static_cast<std::size_t>(full_steps) + 2);
  out.t.push_back(0.0);
  out.x.push_back(x0);
  Vector x = x0;
  for (std::int64_t k = 1; k <= full_steps; ++k) {
    x = rk4_step(field.evaluate, x, dt);
    const double t = static_cast<double>(k) * dt;
    check_finite(x, t);
    out.t.push_back(t);
    out.x.push_back(x);
  }
  if (remainder > 0.0) {
    x = rk4_step(field.evaluate, x, remainder);
    check_finite(x, T);
    out.t.push_back(T);
    out.x.push_back(x);
  } else {
    out.t.back() = T;
  }
  return out;
}

NoisePath noise_path(const TrajectoryLog& log) {
  if (log.stride != 1) {
    throw std::logic_error("noise_path: requires an unthinned log");
  }
  return NoisePath{log.t, log.noise};
}

OdeTrajectory nonautonomous_integrate(const MeanField& h, const AffineMap& lambda, const NoisePath& path,
                                      const Vector& theta_start, double t0, double t1, double max_dt) {
  if (!h) {
    throw std::invalid_argument("nonautonomous_integrate: missing mean field");
  }
  if (!(max_dt > 0.0) || !(t1 >= t0)) {
    throw std::invalid_argument("nonautonomous_integrate: requires max_dt > 0 and t1 >= t0");
  }
  if (path.t.size() != path.z.size() || path.t.empty() || t0 < path.t.front() || t1 > path.t.back()) {
    throw std::out_of_range("nonautonomous_integrate: noise path does not cover the time span");
  }
  OdeTrajectory out;
  out.t.push_back(t0);
  out.x.push_back(theta_start);
  Vector theta = theta_start;
  // Piece k covers [t[k], t[k+1]) with noise z[k].
  auto k = static_cast<std::size_t>(std::upper_bound(path.t.begin(), path.t.end(), t0) - path.t.begin()) - 1;
  double t = t0;
  while (t < t1 && k + 1 < path.t.size()) {
    const double piece_end = std::min(path.t[k + 1], t1);
    const double length = piece_end - t;
    if (length > 0.0) {
      const std::int64_t z = path.z[k];
      auto field = [&](const Vector& x) { return h(x, lambda(x), z); };
      const auto substeps = std::max<std::int64_t>(1, static_cast<std::int64_t>(std::ceil(length / max_dt)));
      const double step = length / static_cast<double>(substeps);
      for (std::int64_t i = 1; i <= substeps; ++i) {
        theta = rk4_step(field, theta, step);
        const double ti = i == substeps ? piece_end : t + static_cast<double>(i) * step;
        check_finite(theta, ti);
        out.t.push_back(ti);
        out.x.push_back(theta);
      }
    }
    t = piece_end;
    ++k;
  }
  return out;
}

OdeTrajectory nonautonomous_integrate(const TdcProblem& problem, const AffineMap& lambda,
                                      const NoisePath& path, const Vector& theta_start, double t0,
                                      double t1, double max_dt) {
  const MeanField h = [&problem](const Vector& theta, const Vector& w, std::int64_t z) {
    return conditional_h(problem, theta, w, static_cast<StateId>(z));
  };
  return nonautonomous_integrate(h, lambda, path, theta_start, t0, t1, max_dt);
}

double tracking_error(const TrajectoryLog& log, const MeanField& h, const AffineMap& lambda, double s,
                      double T, double max_dt) {
  if (log.stride != 1) {
    throw std::logic_error("tracking_error: requires an unthinned log");
  }
  if (log.t.empty() || !(T >= 0.0) || s < log.t.front() || s + T > log.t.back()) {
    throw std::out_of_range("tracking_error: log does not cover [s, s+T]");
  }
  const Vector start = interpolate(log, s).first;
  if (T == 0.0) {
    return 0.0;
  }
  const auto solution = nonautonomous_integrate(h, lambda, noise_path(log), start, s, s + T, max_dt);
  double worst = 0.0;
  for (std::size_t i = 0; i < solution.t.size(); ++i) {
    const Vector iterate = interpolate(log, solution.t[i]).first;
    worst = std::max(worst, (iterate - solution.x[i]).norm());
  }
  return worst;
}

double gronwall_solution_bound(double c0, double m, double lipschitz_h, double lipschitz_lambda,
                               double lambda0_norm, double T) {
  return (c0 + (m + lipschitz_h * lambda0_norm) * T) * std::exp(lipschitz_h * (lipschitz_lambda + 1.0) * T);
}

void write_ode_csv(std::ostream& os, const OdeTrajectory& trajectory) {
  os << 't';
  const Index dim = trajectory.x.empty() ? 0 : trajectory.x.front().size();
  for (Index i = 0; i < dim; ++i) {
    os << ",x_" << i;
  }
  os << '\n';
  const auto old_precision = os.precision(std::numeric_limits<double>::max_digits10);
  for (std::size_t k = 0; k < trajectory.t.size(); ++k) {
    os << trajectory.t[k];
    for (Index i = 0; i < dim; ++i) {
      os << ',' << trajectory.x[k](i);
    }
    os << '\n';
  }
  os.precision(old_precision);
}

}  // namespace twotime
