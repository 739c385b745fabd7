#include <benchmark/benchmark.h>

#include "twotime/mdp.hpp"
#include "twotime/oracle.hpp"
#include "twotime/tdc.hpp"

namespace {

using namespace twotime;

void BM_SolveOracle(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  const int d = static_cast<int>(state.range(1));
  const FiniteMdp mdp = random_mdp(n, 2, 0.0, 3);
  const Policy pi = Policy::greedy_on_action(n, 2, 0);
  const Policy pi_b = Policy::uniform(n, 2);
  const FeatureMap phi = random_features(n, d, 5);
  for (auto _ : state) {
    const OracleSolution sol = solve_oracle(mdp, pi, pi_b, phi);
    benchmark::DoNotOptimize(sol.theta_star.data());
  }
  state.SetComplexityN(n);
}

BENCHMARK(BM_SolveOracle)->Args({5, 3})->Args({20, 5})->Args({100, 10})->Args({400, 20})->Unit(benchmark::kMicrosecond);

void BM_ConditionalMeans(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  const TdcProblem problem(random_mdp(n, 2, 0.0, 3), Policy::greedy_on_action(n, 2, 0), Policy::uniform(n, 2),
                           random_features(n, 5, 5));
  const Vector theta = Vector::Ones(5);
  const Vector w = Vector::Zero(5);
  for (auto _ : state) {
    benchmark::DoNotOptimize(conditional_h(problem, theta, w, 0));
  }
}

BENCHMARK(BM_ConditionalMeans)->Arg(5)->Arg(50)->Unit(benchmark::kMicrosecond);

void BM_EmpiricalMoments(benchmark::State& state) {
  const FiniteMdp mdp = chain3_mdp();
  const Policy pi = Policy::greedy_on_action(3, 2, kChain3Go);
  const Policy pi_b = Policy::uniform(3, 2);
  const FeatureMap phi = tabular_features(3);
  for (auto _ : state) {
    const auto m = empirical_moments(mdp, pi, pi_b, phi, state.range(0), 1);
    benchmark::DoNotOptimize(m.A.data());
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

BENCHMARK(BM_EmpiricalMoments)->Arg(100'000)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
