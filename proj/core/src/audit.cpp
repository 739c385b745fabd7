#include "twotime/audit.hpp"

#include <algorithm>
#include <cmath>

#include <nlohmann/json.hpp>

namespace twotime {

namespace {

/// Per-coordinate running mean and variance of (sample - exact mean).
class ResidualStats {
 public:
  explicit ResidualStats(Index dim) : mean_(Vector::Zero(dim)), m2_(Vector::Zero(dim)) {}

  void add(const Vector& residual) {
    ++count_;
    const Vector delta = residual - mean_;
    mean_ += delta / static_cast<double>(count_);
    m2_ += delta.cwiseProduct(residual - mean_);
    squared_norm_sum_ += residual.squaredNorm();
  }

  MartingaleComponent finish(double scale) const {
    MartingaleComponent out;
    const double n = static_cast<double>(count_);
    const Vector sigma = count_ > 1 ? Vector((m2_ / (n - 1.0)).cwiseSqrt()) : Vector(Vector::Zero(mean_.size()));
    out.deviation = mean_.norm();
    out.bound = 4.0 * sigma.norm() / std::sqrt(n);
    out.passed = out.deviation <= out.bound;
    out.second_moment_ratio = squared_norm_sum_ / n / scale;
    return out;
  }

 private:
  std::int64_t count_ = 0;
  Vector mean_;
  Vector m2_;
  double squared_norm_sum_ = 0.0;
};

double ratio(const Vector& f0, const Vector& f1, double distance) {
  return distance > 0.0 ? (f1 - f0).norm() / distance : 0.0;
}

/// Largest singular value of the finite-difference Jacobian blocks of f at (theta, w).
double jacobian_block_norm(const MeanField& f, const Vector& theta, const Vector& w, std::int64_t z,
                           double step) {
  const Vector base = f(theta, w, z);
  Matrix jac_theta(base.size(), theta.size());
  Matrix jac_w(base.size(), w.size());
  for (Index i = 0; i < theta.size(); ++i) {
    Vector plus = theta;
    Vector minus = theta;
    plus(i) += step;
    minus(i) -= step;
    jac_theta.col(i) = (f(plus, w, z) - f(minus, w, z)) / (2.0 * step);
  }
  for (Index i = 0; i < w.size(); ++i) {
    Vector plus = w;
    Vector minus = w;
    plus(i) += step;
    minus(i) -= step;
    jac_w.col(i) = (f(theta, plus, z) - f(theta, minus, z)) / (2.0 * step);
  }
  double out = 0.0;
  if (jac_theta.size() > 0) {
    out = std::max(out, Eigen::JacobiSVD<Matrix>(jac_theta).singularValues()(0));
  }
  if (jac_w.size() > 0) {
    out = std::max(out, Eigen::JacobiSVD<Matrix>(jac_w).singularValues()(0));
  }
  return out;
}

constexpr std::int64_t kJacobianRefinements = 10;

}  // namespace

MartingaleReport martingale_check(const TwoTimescaleProblem& problem, const Vector& theta, const Vector& w,
                                  std::int64_t z, std::int64_t n_draws, std::uint64_t seed) {
  if (!problem.has_exact_means()) {
    throw std::invalid_argument("martingale_check: problem has no exact conditional means");
  }
  if (n_draws < 2) {
    throw std::invalid_argument("martingale_check: needs at least two draws");
  }
  const Vector h = problem.mean_slow(theta, w, z);
  const Vector g = problem.mean_fast(theta, w, z);
  ResidualStats slow(problem.dim_theta);
  ResidualStats fast(problem.dim_w);
  UpdateSample sample{Vector::Zero(problem.dim_theta), Vector::Zero(problem.dim_w)};
  UpdateSample fast_sample = sample;
  Rng rng(seed);
  for (std::int64_t k = 0; k < n_draws; ++k) {
    NoiseState state{z, NoiseState::kNoPending};
    problem.sampler(theta, w, state, rng, sample);
    slow.add(sample.slow - h);
    if (problem.shared_noise) {
      fast.add(sample.fast - g);
    } else {
      NoiseState fast_state{z, NoiseState::kNoPending};
      problem.fast_sampler(theta, w, fast_state, rng, fast_sample);
      fast.add(fast_sample.fast - g);
    }
  }
  const double scale = 1.0 + theta.squaredNorm() + w.squaredNorm();
  return MartingaleReport{slow.finish(scale), fast.finish(scale), n_draws};
}

LipschitzEstimate lipschitz_estimate(const TwoTimescaleProblem& problem, std::int64_t n_pairs, double radius,
                                     std::uint64_t seed) {
  if (!problem.has_exact_means()) {
    throw std::invalid_argument("lipschitz_estimate: problem has no exact conditional means");
  }
  if (problem.noise_support.empty()) {
    throw std::invalid_argument("lipschitz_estimate: problem has no finite noise support");
  }
  if (n_pairs < 1 || !(radius > 0.0)) {
    throw std::invalid_argument("lipschitz_estimate: needs n_pairs >= 1 and radius > 0");
  }
  Rng rng(seed);
  std::uniform_real_distribution<double> box(-radius, radius);
  auto draw = [&](Index dim) {
    Vector v(dim);
    for (Index i = 0; i < dim; ++i) {
      v(i) = box(rng);
    }
    return v;
  };
  LipschitzEstimate out;
  const double fd_step = 1e-3 * std::max(1.0, radius);
  for (std::int64_t k = 0; k < n_pairs; ++k) {
    const Vector theta0 = draw(problem.dim_theta);
    const Vector w0 = draw(problem.dim_w);
    Vector theta1 = draw(problem.dim_theta);
    Vector w1 = draw(problem.dim_w);
    // Cycle through pairs that move theta only, w only, or both.
    if (k % 3 == 0) {
      w1 = w0;
    } else if (k % 3 == 1) {
      theta1 = theta0;
    }
    const double distance = (theta1 - theta0).norm() + (w1 - w0).norm();
    for (const std::int64_t z : problem.noise_support) {
      out.h = std::max(out.h, ratio(problem.mean_slow(theta0, w0, z), problem.mean_slow(theta1, w1, z), distance));
      out.g = std::max(out.g, ratio(problem.mean_fast(theta0, w0, z), problem.mean_fast(theta1, w1, z), distance));
      if (k < kJacobianRefinements) {
        out.h = std::max(out.h, jacobian_block_norm(problem.mean_slow, theta0, w0, z, fd_step));
        out.g = std::max(out.g, jacobian_block_norm(problem.mean_fast, theta0, w0, z, fd_step));
      }
    }
  }
  return out;
}

double analytic_lipschitz_bound(const TdcProblem& problem) {
  const double m = problem.max_feature_norm();
  return problem.max_importance_weight() * std::max(2.0 * m * m, m * m);
}

double analytic_noise_constant(const TdcProblem& problem) {
  const double l = problem.max_importance_weight();
  const double m = problem.max_feature_norm();
  const double r = problem.max_abs_reward();
  return 3.0 * l * l * m * m * std::max(r * r, 4.0 * m * m);
}

WalkSummary transient_walk(double p, std::int64_t horizon, std::uint64_t seed) {
  if (!(p > 0.5 && p < 1.0)) {
    throw std::invalid_argument("transient_walk: requires 1/2 < p < 1");
  }
  if (horizon < 0) {
    throw std::invalid_argument("transient_walk: horizon must be nonnegative");
  }
  Rng rng(seed);
  std::uniform_real_distribution<double> uniform(0.0, 1.0);
  WalkSummary out;
  std::int64_t position = 0;
  for (std::int64_t n = 0; n < horizon; ++n) {
    position += uniform(rng) < p ? 1 : -1;
    out.min_position = std::min(out.min_position, position);
    out.max_position = std::max(out.max_position, position);
  }
  out.final_position = position;
  out.sup_L = std::pow((1.0 - p) / p, static_cast<double>(out.min_position));
  return out;
}

void to_json(nlohmann::json& j, const MartingaleComponent& c) {
  j = nlohmann::json{{"deviation", c.deviation},
                     {"bound", c.bound},
                     {"passed", c.passed},
                     {"second_moment_ratio", c.second_moment_ratio}};
}

void to_json(nlohmann::json& j, const MartingaleReport& r) {
  j = nlohmann::json{{"slow", r.slow}, {"fast", r.fast}, {"draws", r.draws}, {"passed", r.passed()}};
}

void to_json(nlohmann::json& j, const WalkSummary& w) {
  j = nlohmann::json{{"min_position", w.min_position},
                     {"max_position", w.max_position},
                     {"final_position", w.final_position},
                     {"sup_L", w.sup_L}};
}

}  // namespace twotime
