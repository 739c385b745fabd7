#include <benchmark/benchmark.h>

#include <memory>

#include "twotime/engine.hpp"
#include "twotime/mdp.hpp"
#include "twotime/oracle.hpp"
#include "twotime/tdc.hpp"

namespace {

using namespace twotime;

std::shared_ptr<const TdcProblem> random_problem(int n_states, int dim) {
  return std::make_shared<const TdcProblem>(random_mdp(n_states, 2, 0.0, 7), Policy::greedy_on_action(n_states, 2, 0),
                                            Policy::uniform(n_states, 2), random_features(n_states, dim, 11));
}

const SchedulePair kSchedule{StepSchedule::from_initial(0.5, 1e4, 1.0), StepSchedule::from_initial(0.5, 1e4, 0.6)};

void BM_TdcStep(benchmark::State& state) {
  const auto problem = random_problem(static_cast<int>(state.range(0)), static_cast<int>(state.range(1)));
  Rng rng(1);
  StateId s = 0;
  TdcIterate it{Vector::Zero(problem->dim()), Vector::Zero(problem->dim())};
  for (auto _ : state) {
    const Transition tr = sample_step(problem->mdp(), problem->behavior(), s, rng);
    const double rho = importance_weight(problem->target(), problem->behavior(), tr.s, tr.a);
    it = tdc_step(it.theta, it.w, tr, rho, 1e-3, 1e-2, problem->features(), problem->gamma());
    s = tr.s_next;
    benchmark::DoNotOptimize(it);
  }
  state.SetItemsProcessed(state.iterations());
}

BENCHMARK(BM_TdcStep)->Args({5, 3})->Args({50, 10})->Args({200, 20});

void BM_EngineRun(benchmark::State& state) {
  const auto problem = make_tdc_problem(random_problem(5, 3));
  RunConfig c;
  c.horizon = state.range(0);
  c.thinning = 1000;
  for (auto _ : state) {
    const TrajectoryLog log = run_two_timescale(problem, kSchedule, c);
    benchmark::DoNotOptimize(log.iterations);
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

BENCHMARK(BM_EngineRun)->Arg(100'000)->Arg(1'000'000)->Unit(benchmark::kMillisecond);

void BM_EngineRunWithDiagnostics(benchmark::State& state) {
  const auto tdc = random_problem(5, 3);
  const auto problem = make_tdc_problem(tdc);
  const OracleSolution sol = solve_oracle(tdc->mdp(), tdc->target(), tdc->behavior(), tdc->features());
  RunConfig c;
  c.horizon = state.range(0);
  c.thinning = 1000;
  c.lambda = sol.lambda;
  c.theta_reference = sol.theta_star;
  for (auto _ : state) {
    const TrajectoryLog log = run_two_timescale(problem, kSchedule, c);
    benchmark::DoNotOptimize(log.iterations);
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

BENCHMARK(BM_EngineRunWithDiagnostics)->Arg(100'000)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
