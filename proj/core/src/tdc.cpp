#include "twotime/tdc.hpp"

#include <cmath>

namespace twotime {

TdcProblem::TdcProblem(FiniteMdp mdp, Policy pi, Policy pi_b, FeatureMap phi, RewardNoise noise)
    : mdp_(std::move(mdp)), pi_(std::move(pi)), pi_b_(std::move(pi_b)), phi_(std::move(phi)), noise_(noise) {
  if (phi_.n_states() != mdp_.n_states()) {
    throw std::invalid_argument("TdcProblem: feature rows must match the number of states");
  }
  if (!(noise_.half_width >= 0.0)) {
    throw std::invalid_argument("TdcProblem: reward noise half width must be nonnegative");
  }
  auto report = validate_mdp(mdp_, pi_, pi_b_);
  if (!report.ok()) {
    throw ValidationError(std::move(report));
  }
  rows_.resize(static_cast<std::size_t>(phi_.n_states()) * phi_.dim());
  for (int s = 0; s < phi_.n_states(); ++s) {
    for (int k = 0; k < phi_.dim(); ++k) {
      rows_[static_cast<std::size_t>(s) * phi_.dim() + k] = phi_.matrix()(s, k);
    }
  }
}

double TdcProblem::max_importance_weight() const {
  double out = 0.0;
  for (int s = 0; s < mdp_.n_states(); ++s) {
    for (int a = 0; a < mdp_.n_actions(); ++a) {
      if (pi_b_(s, a) > 0.0) {
        out = std::max(out, pi_(s, a) / pi_b_(s, a));
      }
    }
  }
  return out;
}

double TdcProblem::max_abs_reward() const {
  double out = 0.0;
  for (const double r : mdp_.r_data()) {
    out = std::max(out, std::abs(r));
  }
  return out + noise_.half_width;
}

double td_error(const Vector& theta, const Transition& tr, const FeatureMap& phi, double gamma) {
  return tr.reward + gamma * theta.dot(phi.row(tr.s_next)) - theta.dot(phi.row(tr.s));
}

void tdc_increments(const TdcProblem& problem, const Vector& theta, const Vector& w,
                    const Transition& tr, double rho, UpdateSample& out) {
  const auto phi = problem.feature(tr.s);
  const auto phi_next = problem.feature(tr.s_next);
  const double gamma = problem.gamma();
  const double delta = tr.reward + gamma * theta.dot(phi_next) - theta.dot(phi);
  const double phi_w = phi.dot(w);
  out.slow.noalias() = rho * delta * phi - (rho * gamma * phi_w) * phi_next;
  out.fast.noalias() = (rho * delta - phi_w) * phi;
}

TdcIterate tdc_step(const Vector& theta, const Vector& w, const Transition& tr, double rho, double a_n,
                    double b_n, const FeatureMap& phi, double gamma) {
  const Vector phi_s = phi.row(tr.s);
  const Vector phi_next = phi.row(tr.s_next);
  const double delta = td_error(theta, tr, phi, gamma);
  const double phi_w = phi_s.dot(w);
  TdcIterate out;
  out.theta = theta + a_n * rho * (delta * phi_s - gamma * phi_next * phi_w);
  out.w = w + b_n * (rho * delta - phi_w) * phi_s;
  return out;
}

namespace {

template <bool kSlow>
Vector conditional_mean(const TdcProblem& problem, const Vector& theta, const Vector& w, StateId z) {
  const auto& mdp = problem.mdp();
  const int ns = mdp.n_states();
  if (z < 0 || z >= ns) {
    throw std::out_of_range("conditional mean: noise state out of range");
  }
  UpdateSample buffer{Vector::Zero(problem.dim()), Vector::Zero(problem.dim())};
  Vector mean = Vector::Zero(problem.dim());
  for (int x = 0; x < ns; ++x) {
    double p_x = 0.0;
    for (int a = 0; a < mdp.n_actions(); ++a) {
      p_x += problem.behavior()(z, a) * mdp.p(z, a, x);
    }
    if (p_x == 0.0) {
      continue;
    }
    for (int a = 0; a < mdp.n_actions(); ++a) {
      const double p_a = problem.behavior()(x, a);
      if (p_a == 0.0) {
        continue;
      }
      const double rho = problem.target()(x, a) / p_a;
      for (int x_next = 0; x_next < ns; ++x_next) {
        const double p_next = mdp.p(x, a, x_next);
        if (p_next == 0.0) {
          continue;
        }
        // Zero-mean reward noise drops out of the conditional mean.
        const Transition tr{x, a, mdp.r(x, a, x_next), x_next};
        tdc_increments(problem, theta, w, tr, rho, buffer);
        mean += (p_x * p_a * p_next) * (kSlow ? buffer.slow : buffer.fast);
      }
    }
  }
  return mean;
}

}  // namespace

Vector conditional_h(const TdcProblem& problem, const Vector& theta, const Vector& w, StateId z) {
  return conditional_mean<true>(problem, theta, w, z);
}

Vector conditional_g(const TdcProblem& problem, const Vector& theta, const Vector& w, StateId z) {
  return conditional_mean<false>(problem, theta, w, z);
}

TwoTimescaleProblem make_tdc_problem(std::shared_ptr<const TdcProblem> problem,
                                     const TdcRunOptions& options) {
  if (!problem) {
    throw std::invalid_argument("make_tdc_problem: null problem");
  }
  const int d = problem->dim();
  const int ns = problem->mdp().n_states();
  if (options.initial_state < 0 || options.initial_state >= ns) {
    throw std::invalid_argument("make_tdc_problem: initial state out of range");
  }
  TwoTimescaleProblem out;
  out.dim_theta = d;
  out.dim_w = d;
  out.initial_theta = options.initial_theta.size() == 0 ? Vector::Zero(d) : options.initial_theta;
  out.initial_w = options.initial_w.size() == 0 ? Vector::Zero(d) : options.initial_w;
  if (out.initial_theta.size() != d || out.initial_w.size() != d) {
    throw std::invalid_argument("make_tdc_problem: initial iterates must have the feature dimension");
  }
  for (int s = 0; s < ns; ++s) {
    out.noise_support.push_back(s);
  }
  out.initial_noise = NoiseState{options.initial_state, NoiseState::kNoPending};
  out.shared_noise = true;
  const bool freeze = options.freeze_theta;
  out.sampler = [problem, freeze](const Vector& theta, const Vector& w, NoiseState& z, Rng& rng,
                                  UpdateSample& sample) {
    const auto& mdp = problem->mdp();
    const auto& pi_b = problem->behavior();
    // X_n: reuse the successor realized by the previous step, else draw it from P_b(z, .).
    const StateId x = z.pending != NoiseState::kNoPending
                          ? static_cast<StateId>(z.pending)
                          : sample_step(mdp, pi_b, static_cast<StateId>(z.value), rng).s_next;
    const Transition tr = sample_step(mdp, pi_b, x, rng, problem->reward_noise());
    const double rho = problem->target()(tr.s, tr.a) / pi_b(tr.s, tr.a);
    tdc_increments(*problem, theta, w, tr, rho, sample);
    if (freeze) {
      sample.slow.setZero();
    }
    z.value = x;
    z.pending = tr.s_next;
  };
  out.mean_slow = [problem, freeze](const Vector& theta, const Vector& w, std::int64_t z) {
    if (freeze) {
      return Vector(Vector::Zero(problem->dim()));
    }
    return conditional_h(*problem, theta, w, static_cast<StateId>(z));
  };
  out.mean_fast = [problem](const Vector& theta, const Vector& w, std::int64_t z) {
    return conditional_g(*problem, theta, w, static_cast<StateId>(z));
  };
  return out;
}

TwoTimescaleProblem make_tdc_problem(const FiniteMdp& mdp, const Policy& pi, const Policy& pi_b,
                                     const FeatureMap& phi, RewardNoise noise,
                                     const TdcRunOptions& options) {
  return make_tdc_problem(std::make_shared<const TdcProblem>(mdp, pi, pi_b, phi, noise), options);
}

EmpiricalMoments empirical_moments(const FiniteMdp& mdp, const Policy& pi, const Policy& pi_b,
                                   const FeatureMap& phi, std::int64_t n_samples, std::uint64_t seed) {
  if (n_samples < 1) {
    throw std::invalid_argument("empirical_moments: n_samples must be positive");
  }
  const int d = phi.dim();
  const double gamma = mdp.gamma();
  EmpiricalMoments out{Matrix::Zero(d, d), Vector::Zero(d), Matrix::Zero(d, d)};
  Rng rng(seed);
  StateId s = 0;
  const std::int64_t burn_in = n_samples / 100;
  for (std::int64_t k = 0; k < burn_in; ++k) {
    s = sample_step(mdp, pi_b, s, rng).s_next;
  }
  Vector phi_s(d);
  Vector phi_next(d);
  for (std::int64_t k = 0; k < n_samples; ++k) {
    const Transition tr = sample_step(mdp, pi_b, s, rng);
    const double rho = importance_weight(pi, pi_b, tr.s, tr.a);
    phi_s = phi.row(tr.s);
    phi_next = phi.row(tr.s_next);
    out.A.noalias() += rho * phi_s * (phi_s - gamma * phi_next).transpose();
    out.b.noalias() += rho * tr.reward * phi_s;
    out.C.noalias() += phi_s * phi_s.transpose();
    s = tr.s_next;
  }
  const double scale = 1.0 / static_cast<double>(n_samples);
  out.A *= scale;
  out.b *= scale;
  out.C *= scale;
  return out;
}

}  // namespace twotime
