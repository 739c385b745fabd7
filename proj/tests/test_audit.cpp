#include <gtest/gtest.h>

#include <nlohmann/json.hpp>

#include "test_support.hpp"
#include "twotime/audit.hpp"

using namespace twotime;
using twotime::fixtures::chain3_problem;
using twotime::fixtures::random5_problem;
using twotime::fixtures::uniform_vector;

namespace {

/// Exact Jacobian blocks of the conditional slow mean given z, assembled by enumeration.
std::pair<Matrix, Matrix> slow_jacobians(const TdcProblem& p, StateId z) {
  const auto& m = p.mdp();
  const int d = p.dim();
  Matrix jt = Matrix::Zero(d, d);
  Matrix jw = Matrix::Zero(d, d);
  for (int x = 0; x < m.n_states(); ++x) {
    double px = 0.0;
    for (int a = 0; a < m.n_actions(); ++a) {
      px += p.behavior()(z, a) * m.p(z, a, x);
    }
    for (int a = 0; a < m.n_actions() && px > 0.0; ++a) {
      if (p.behavior()(x, a) == 0.0) {
        continue;
      }
      const double rho = p.target()(x, a) / p.behavior()(x, a);
      for (int y = 0; y < m.n_states(); ++y) {
        const double weight = px * p.behavior()(x, a) * m.p(x, a, y);
        const Vector f = p.features().row(x);
        const Vector fn = p.features().row(y);
        jt -= weight * rho * f * (f - p.gamma() * fn).transpose();
        jw -= weight * rho * p.gamma() * fn * f.transpose();
      }
    }
  }
  return {jt, jw};
}

double spectral_norm(const Matrix& m) { return Eigen::JacobiSVD<Matrix>(m).singularValues()(0); }

}  // namespace

TEST(Martingale, DeterministicSamplerHasZeroDeviation) {
  TwoTimescaleProblem p;
  p.dim_theta = 2;
  p.dim_w = 1;
  p.initial_theta = Vector::Zero(2);
  p.initial_w = Vector::Zero(1);
  p.sampler = [](const Vector& theta, const Vector& w, NoiseState&, Rng&, UpdateSample& out) {
    out.slow = 2.0 * theta;
    out.fast = -w;
  };
  p.mean_slow = [](const Vector& theta, const Vector&, std::int64_t) { return Vector(2.0 * theta); };
  p.mean_fast = [](const Vector&, const Vector& w, std::int64_t) { return Vector(-w); };
  const auto report = martingale_check(p, Vector::Ones(2), Vector::Ones(1), 0, 100, 1);
  EXPECT_EQ(report.slow.deviation, 0.0);
  EXPECT_EQ(report.fast.deviation, 0.0);
  EXPECT_EQ(report.slow.second_moment_ratio, 0.0);
  EXPECT_TRUE(report.passed());
  EXPECT_EQ(report.draws, 100);
}

TEST(Martingale, TdcIncrementsAreCentered) {
  Rng rng(2);
  for (const auto& problem : {chain3_problem(), random5_problem()}) {
    const auto p = make_tdc_problem(problem);
    const double K = analytic_noise_constant(*problem);
    int passed = 0;
    for (int k = 0; k < 5; ++k) {
      const Vector theta = uniform_vector(problem->dim(), 10.0, rng);
      const Vector w = uniform_vector(problem->dim(), 10.0, rng);
      const auto report = martingale_check(p, theta, w, k % problem->mdp().n_states(), 20000, 100 + k);
      passed += report.passed() ? 1 : 0;
      EXPECT_LE(report.slow.second_moment_ratio, K);
      EXPECT_LE(report.fast.second_moment_ratio, K);
    }
    EXPECT_GE(passed, 4);
  }
}

TEST(Martingale, DetectsBiasedSampler) {
  auto p = make_tdc_problem(chain3_problem());
  const JointSampler base = p.sampler;
  p.sampler = [base](const Vector& theta, const Vector& w, NoiseState& z, Rng& rng, UpdateSample& out) {
    base(theta, w, z, rng, out);
    out.slow.array() += 0.1;
  };
  const auto report = martingale_check(p, Vector::Ones(3), Vector::Zero(3), 0, 100000, 4);
  EXPECT_FALSE(report.slow.passed);
  EXPECT_NEAR(report.slow.deviation, 0.1 * std::sqrt(3.0), 0.02);
}

TEST(Martingale, InvalidArguments) {
  auto p = make_tdc_problem(chain3_problem());
  EXPECT_THROW(martingale_check(p, Vector::Zero(3), Vector::Zero(3), 0, 1, 1), std::invalid_argument);
  p.mean_fast = nullptr;
  EXPECT_THROW(martingale_check(p, Vector::Zero(3), Vector::Zero(3), 0, 10, 1), std::invalid_argument);
  EXPECT_THROW(lipschitz_estimate(p, 10, 1.0, 1), std::invalid_argument);
}

TEST(NoiseConstant, Formula) {
  const auto chain = chain3_problem();
  // L = 2, M = 1, Rmax = 1.
  EXPECT_DOUBLE_EQ(analytic_noise_constant(*chain), 3.0 * 4.0 * 1.0 * 4.0);
  EXPECT_DOUBLE_EQ(analytic_lipschitz_bound(*chain), 4.0);
}

TEST(Lipschitz, MatchesExactJacobianNorms) {
  for (const auto& problem : {chain3_problem(), random5_problem()}) {
    const auto p = make_tdc_problem(problem);
    double exact = 0.0;
    for (int z = 0; z < problem->mdp().n_states(); ++z) {
      const auto [jt, jw] = slow_jacobians(*problem, z);
      exact = std::max({exact, spectral_norm(jt), spectral_norm(jw)});
    }
    const auto est = lipschitz_estimate(p, 1000, 10.0, 5);
    EXPECT_GE(est.h, 0.95 * exact);
    EXPECT_LE(est.h, exact * (1.0 + 1e-6));
    EXPECT_LE(est.h, analytic_lipschitz_bound(*problem));
    EXPECT_LE(est.g, analytic_lipschitz_bound(*problem));
  }
}

TEST(Lipschitz, EstimateStabilizes) {
  const auto p = make_tdc_problem(random5_problem());
  const auto small = lipschitz_estimate(p, 100, 10.0, 6);
  const auto large = lipschitz_estimate(p, 10000, 10.0, 7);
  EXPECT_NEAR(small.h, large.h, 0.05 * large.h);
  EXPECT_NEAR(small.g, large.g, 0.05 * large.g);
}

TEST(Lipschitz, ConstantFieldsGiveZero) {
  TwoTimescaleProblem p;
  p.dim_theta = 2;
  p.dim_w = 2;
  p.noise_support = {0, 1};
  p.mean_slow = [](const Vector&, const Vector&, std::int64_t z) { return Vector(Vector::Constant(2, z)); };
  p.mean_fast = p.mean_slow;
  const auto est = lipschitz_estimate(p, 50, 1.0, 1);
  EXPECT_EQ(est.h, 0.0);
  EXPECT_EQ(est.g, 0.0);
  EXPECT_THROW(lipschitz_estimate(p, 0, 1.0, 1), std::invalid_argument);
  EXPECT_THROW(lipschitz_estimate(p, 10, 0.0, 1), std::invalid_argument);
  p.noise_support.clear();
  EXPECT_THROW(lipschitz_estimate(p, 10, 1.0, 1), std::invalid_argument);
}

TEST(TransientWalk, AlmostSureUpwardWalkNeverGoesBelowStart) {
  const auto walk = transient_walk(1.0 - 1e-12, 10000, 1);
  EXPECT_EQ(walk.min_position, 0);
  EXPECT_EQ(walk.final_position, 10000);
  EXPECT_DOUBLE_EQ(walk.sup_L, 1.0);
}

TEST(TransientWalk, MinimumIsBoundedAcrossSeeds) {
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const auto walk = transient_walk(0.9, 10000, seed);
    EXPECT_GE(walk.min_position, -20);
    EXPECT_LE(walk.min_position, 0);
    EXPECT_NEAR(walk.sup_L, std::pow(1.0 / 9.0, static_cast<double>(walk.min_position)), 1e-12 * walk.sup_L);
    EXPECT_GE(walk.sup_L, 1.0);
  }
}

TEST(TransientWalk, DriftFollowsLawOfLargeNumbers) {
  const std::int64_t horizon = 200000;
  const auto walk = transient_walk(0.75, horizon, 3);
  EXPECT_NEAR(static_cast<double>(walk.final_position) / static_cast<double>(horizon), 0.5, 0.01);
  EXPECT_LE(walk.final_position, walk.max_position);
}

TEST(TransientWalk, InvalidArguments) {
  EXPECT_THROW(transient_walk(0.5, 10, 1), std::invalid_argument);
  EXPECT_THROW(transient_walk(1.0, 10, 1), std::invalid_argument);
  EXPECT_THROW(transient_walk(0.7, -1, 1), std::invalid_argument);
}

TEST(AuditJson, Shapes) {
  const nlohmann::json walk = transient_walk(0.9, 100, 2);
  EXPECT_TRUE(walk.contains("min_position"));
  EXPECT_TRUE(walk.contains("sup_L"));
  const auto p = make_tdc_problem(chain3_problem());
  const nlohmann::json report = martingale_check(p, Vector::Zero(3), Vector::Zero(3), 0, 100, 1);
  EXPECT_TRUE(report.at("slow").contains("deviation"));
  EXPECT_EQ(report.at("draws"), 100);
}
