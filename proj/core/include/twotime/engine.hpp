#ifndef TWOTIME_ENGINE_HPP_
#define TWOTIME_ENGINE_HPP_

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "twotime/types.hpp"

namespace twotime {

/// Power-law step size a(n) = scale / (n + offset)^exponent.
struct StepSchedule {
  double scale = 1.0;
  double offset = 1.0;
  double exponent = 1.0;

  /// a(n) = initial / (1 + n / offset)^exponent, so that a(0) = initial.
  static StepSchedule from_initial(double initial, double offset, double exponent);

  double operator()(std::int64_t n) const;
  /// Upper bound on sum_{k >= n} a(k)^2 (exact head term plus integral tail); needs exponent > 1/2.
  double tail_square_sum(std::int64_t n) const;
  std::string describe() const;
};

/// a = slow (theta) steps, b = fast (w) steps.
struct SchedulePair {
  StepSchedule slow;
  StepSchedule fast;
};

/// Checks positivity, monotonicity, divergent sums, square-summability and a(n)/b(n) -> 0.
ValidationReport validate_schedule_pair(const SchedulePair& pair);

/*!
 * @brief State of the Markov noise process.
 *
 * `value` is the conditioning state Z_n seen by the mean fields. `pending` is sampler-owned
 * memory for an already realized successor, so a run can consume one coherent trajectory while
 * the conditional law given `value` alone stays the one the mean fields integrate over.
 */
struct NoiseState {
  static constexpr std::int64_t kNoPending = std::numeric_limits<std::int64_t>::min();

  std::int64_t value = 0;
  std::int64_t pending = kNoPending;
};

/// Output buffers for one sampled step; sized dim_theta and dim_w by the engine.
struct UpdateSample {
  Vector slow;
  Vector fast;
};

/// Draws H(theta, w, z) into out.slow and G(theta, w, z) into out.fast, then advances z.
using JointSampler =
    std::function<void(const Vector& theta, const Vector& w, NoiseState& z, Rng& rng, UpdateSample& out)>;

/// Exact conditional mean h(theta, w, z) or g(theta, w, z).
using MeanField = std::function<Vector(const Vector& theta, const Vector& w, std::int64_t z)>;

/*!
 * @brief Contract between the engine and a concrete coupled recursion.
 *
 * With shared noise (the default) `sampler` produces both updates from the same draw. With
 * independent noise `sampler` drives theta from `initial_noise` and `fast_sampler` drives w from
 * `initial_fast_noise`. The mean fields are optional and only used by diagnostics.
 */
struct TwoTimescaleProblem {
  Index dim_theta = 0;
  Index dim_w = 0;
  Vector initial_theta;
  Vector initial_w;
  /// Finite noise support, empty when the noise space is not enumerable.
  std::vector<std::int64_t> noise_support;
  NoiseState initial_noise;
  NoiseState initial_fast_noise;
  bool shared_noise = true;
  JointSampler sampler;
  JointSampler fast_sampler;
  MeanField mean_slow;
  MeanField mean_fast;

  bool has_exact_means() const { return static_cast<bool>(mean_slow) && static_cast<bool>(mean_fast); }
};

using IterateObserver = std::function<void(std::int64_t n, const Vector& theta, const Vector& w)>;

struct RunConfig {
  std::int64_t horizon = 1;
  std::uint64_t seed = 0;
  std::int64_t thinning = 100;
  double divergence_bound = 1e6;
  /// Registered attractor map lambda(theta); enables the coupling-error diagnostics.
  std::optional<AffineMap> lambda;
  /// Registered limit point theta*; enables the final-window relative error.
  std::optional<Vector> theta_reference;
  double tail_fraction = 0.01;
  /// Called on every iterate, including n = 0, before thinning.
  IterateObserver observer;
};

struct DecadeMedian {
  int decade = 0;  ///< records with n in [10^decade, 10^(decade+1)); n = 0 counts in decade 0
  std::int64_t count = 0;
  double median = 0.0;
};

/// Thinned (n, t(n), theta_n, w_n) records with diagnostics computed on the unthinned stream.
struct TrajectoryLog {
  Index dim_theta = 0;
  Index dim_w = 0;
  std::int64_t stride = 1;
  std::uint64_t seed = 0;
  std::string schedule;

  std::vector<std::int64_t> n;
  std::vector<double> t;
  std::vector<double> theta;  ///< row-major, dim_theta per record
  std::vector<double> w;      ///< row-major, dim_w per record
  std::vector<double> coupling_error;  ///< NaN when no lambda map was registered
  std::vector<std::int64_t> noise;     ///< Z_n in effect for the step leaving iterate n

  std::vector<DecadeMedian> coupling_decades;
  std::optional<double> tail_median_relative_error;
  std::int64_t iterations = 0;  ///< number of completed updates
  bool diverged = false;
  std::optional<std::int64_t> divergence_index;

  std::size_t size() const { return n.size(); }
  Eigen::Map<const Vector> theta_at(std::size_t i) const;
  Eigen::Map<const Vector> w_at(std::size_t i) const;
};

/*!
 * @brief Runs theta_{n+1} = theta_n + a(n) H(theta_n, w_n, Z_n), w_{n+1} = w_n + b(n) G(theta_n, w_n, Z_n).
 *
 * Throws ValidationError for an invalid schedule pair and std::invalid_argument for malformed
 * problems. Divergence (||theta_n|| + ||w_n|| above the bound, or non-finite) halts the run and is
 * reported through the returned log.
 */
TrajectoryLog run_two_timescale(const TwoTimescaleProblem& problem, const SchedulePair& pair,
                                const RunConfig& config);

/// Piecewise-linear (theta, w) at time t. Requires an unthinned log.
std::pair<Vector, Vector> interpolate(const TrajectoryLog& log, double t);

/// Index of the last record with t(record) <= t.
std::size_t record_at_time(const TrajectoryLog& log, double t);

struct CouplingSeries {
  std::vector<std::int64_t> n;
  std::vector<double> error;
  std::vector<DecadeMedian> decades;
};

CouplingSeries coupling_error_series(const TrajectoryLog& log, const AffineMap& lambda);

/// Per-decade medians of `values` keyed by iteration index.
std::vector<DecadeMedian> decade_medians(const std::vector<std::int64_t>& n,
                                         const std::vector<double>& values);

int decade_of(std::int64_t n);
double median(std::vector<double> values);

/// CSV with header "n,t,theta_0..,w_0..,coupling_err".
void write_trajectory_csv(std::ostream& os, const TrajectoryLog& log);
nlohmann::json trajectory_summary(const TrajectoryLog& log);

}  // namespace twotime

#endif  // TWOTIME_ENGINE_HPP_
