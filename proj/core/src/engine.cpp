#include "twotime/engine.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <ostream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "twotime/json_eigen.hpp"

namespace twotime {

namespace {

/// Neumaier compensated sum.
class CompensatedSum {
 public:
  void add(double x) {
    const double next = sum_ + x;
    if (std::abs(sum_) >= std::abs(x)) {
      compensation_ += (sum_ - next) + x;
    } else {
      compensation_ += (x - next) + sum_;
    }
    sum_ = next;
  }
  double value() const { return sum_ + compensation_; }

 private:
  double sum_ = 0.0;
  double compensation_ = 0.0;
};

void check_problem(const TwoTimescaleProblem& problem) {
  if (problem.dim_theta < 0 || problem.dim_w < 0) {
    throw std::invalid_argument("TwoTimescaleProblem: negative dimension");
  }
  if (problem.initial_theta.size() != problem.dim_theta || problem.initial_w.size() != problem.dim_w) {
    throw std::invalid_argument("TwoTimescaleProblem: initial iterates do not match dimensions");
  }
  if (!problem.sampler) {
    throw std::invalid_argument("TwoTimescaleProblem: missing sampler");
  }
  if (!problem.shared_noise && !problem.fast_sampler) {
    throw std::invalid_argument("TwoTimescaleProblem: independent noise requires a fast sampler");
  }
}

}  // namespace

StepSchedule StepSchedule::from_initial(double initial, double offset, double exponent) {
  return StepSchedule{initial * std::pow(offset, exponent), offset, exponent};
}

double StepSchedule::operator()(std::int64_t n) const {
  return scale * std::pow(static_cast<double>(n) + offset, -exponent);
}

double StepSchedule::tail_square_sum(std::int64_t n) const {
  if (!(exponent > 0.5)) {
    return std::numeric_limits<double>::infinity();
  }
  const double x = static_cast<double>(n) + offset;
  // a(n)^2 + integral_{n}^{inf} a(k)^2 dk bounds the decreasing series from above.
  const double head = scale * scale * std::pow(x, -2.0 * exponent);
  const double tail = scale * scale * std::pow(x, 1.0 - 2.0 * exponent) / (2.0 * exponent - 1.0);
  return head + tail;
}

std::string StepSchedule::describe() const {
  std::ostringstream os;
  os.precision(12);
  os << scale << "/(n+" << offset << ")^" << exponent;
  return os.str();
}

ValidationReport validate_schedule_pair(const SchedulePair& pair) {
  ValidationReport report;
  const auto& a = pair.slow;
  const auto& b = pair.fast;
  auto fmt = [](const char* name, double value) {
    std::ostringstream os;
    os << name << "=" << value;
    return os.str();
  };
  const bool positive = a.scale > 0.0 && b.scale > 0.0 && a.offset >= 1.0 && b.offset >= 1.0;
  report.add("positive", positive, "scales > 0 and offsets >= 1");
  report.add("non-increasing", a.exponent > 0.0 && b.exponent > 0.0, "exponents > 0");
  report.add("sum a(n) = inf", a.exponent <= 1.0, fmt("slow exponent", a.exponent));
  report.add("sum b(n) = inf", b.exponent <= 1.0, fmt("fast exponent", b.exponent));
  report.add("sum a(n)^2 < inf", a.exponent > 0.5, fmt("slow exponent", a.exponent));
  report.add("sum b(n)^2 < inf", b.exponent > 0.5, fmt("fast exponent", b.exponent));
  std::ostringstream ratio;
  ratio << "slow exponent " << a.exponent << " vs fast exponent " << b.exponent;
  report.add("a(n)/b(n) -> 0", a.exponent > b.exponent, ratio.str());
  return report;
}

Eigen::Map<const Vector> TrajectoryLog::theta_at(std::size_t i) const {
  return Eigen::Map<const Vector>(theta.data() + i * static_cast<std::size_t>(dim_theta), dim_theta);
}

Eigen::Map<const Vector> TrajectoryLog::w_at(std::size_t i) const {
  return Eigen::Map<const Vector>(w.data() + i * static_cast<std::size_t>(dim_w), dim_w);
}

int decade_of(std::int64_t n) {
  int decade = 0;
  for (std::int64_t bound = 10; n >= bound; bound *= 10) {
    ++decade;
    if (bound > std::numeric_limits<std::int64_t>::max() / 10) {
      break;
    }
  }
  return decade;
}

double median(std::vector<double> values) {
  if (values.empty()) {
    return std::numeric_limits<double>::quiet_NaN();
  }
  const std::size_t mid = values.size() / 2;
  std::nth_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(mid), values.end());
  const double upper = values[mid];
  if (values.size() % 2 == 1) {
    return upper;
  }
  const double lower = *std::max_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(mid));
  return 0.5 * (lower + upper);
}

std::vector<DecadeMedian> decade_medians(const std::vector<std::int64_t>& n,
                                         const std::vector<double>& values) {
  std::map<int, std::vector<double>> buckets;
  for (std::size_t i = 0; i < n.size() && i < values.size(); ++i) {
    buckets[decade_of(n[i])].push_back(values[i]);
  }
  std::vector<DecadeMedian> out;
  for (auto& [decade, bucket] : buckets) {
    const auto count = static_cast<std::int64_t>(bucket.size());
    out.push_back({decade, count, median(std::move(bucket))});
  }
  return out;
}

TrajectoryLog run_two_timescale(const TwoTimescaleProblem& problem, const SchedulePair& pair,
                                const RunConfig& config) {
  check_problem(problem);
  auto report = validate_schedule_pair(pair);
  if (!report.ok()) {
    throw ValidationError(std::move(report));
  }
  if (config.horizon < 1) {
    throw std::invalid_argument("run_two_timescale: horizon must be >= 1");
  }
  if (config.thinning < 1) {
    throw std::invalid_argument("run_two_timescale: thinning must be >= 1");
  }
  if (config.lambda && (config.lambda->input_dim() != problem.dim_theta ||
                        config.lambda->output_dim() != problem.dim_w)) {
    throw std::invalid_argument("run_two_timescale: lambda map has the wrong shape");
  }
  if (config.theta_reference && config.theta_reference->size() != problem.dim_theta) {
    throw std::invalid_argument("run_two_timescale: theta reference has the wrong size");
  }

  TrajectoryLog log;
  log.dim_theta = problem.dim_theta;
  log.dim_w = problem.dim_w;
  log.stride = config.thinning;
  log.seed = config.seed;
  log.schedule = "a(n)=" + pair.slow.describe() + "; b(n)=" + pair.fast.describe();
  const auto expected_records = static_cast<std::size_t>(config.horizon / config.thinning + 2);
  log.n.reserve(expected_records);
  log.t.reserve(expected_records);
  log.theta.reserve(expected_records * static_cast<std::size_t>(problem.dim_theta));
  log.w.reserve(expected_records * static_cast<std::size_t>(problem.dim_w));
  log.coupling_error.reserve(expected_records);
  log.noise.reserve(expected_records);

  Rng rng(config.seed);
  Vector theta = problem.initial_theta;
  Vector w = problem.initial_w;
  NoiseState z_slow = problem.initial_noise;
  NoiseState z_fast = problem.shared_noise ? problem.initial_noise : problem.initial_fast_noise;
  UpdateSample sample{Vector::Zero(problem.dim_theta), Vector::Zero(problem.dim_w)};
  UpdateSample fast_sample{Vector::Zero(problem.dim_theta), Vector::Zero(problem.dim_w)};
  Vector lambda_value(problem.dim_w);

  const std::int64_t horizon = config.horizon;
  const auto tail_count = std::max<std::int64_t>(
      1, static_cast<std::int64_t>(std::floor(config.tail_fraction * static_cast<double>(horizon))));
  std::vector<double> tail_errors;
  double reference_norm = 0.0;
  if (config.theta_reference) {
    tail_errors.reserve(static_cast<std::size_t>(tail_count));
    reference_norm = config.theta_reference->norm();
  }
  std::map<int, std::vector<double>> coupling_buckets;
  CompensatedSum time;

  auto coupling_at = [&](const Vector& th, const Vector& wv) {
    if (!config.lambda) {
      return std::numeric_limits<double>::quiet_NaN();
    }
    lambda_value.noalias() = config.lambda->linear * th;
    lambda_value += config.lambda->offset;
    return (wv - lambda_value).norm();
  };
  auto record = [&](std::int64_t n, double t, double coupling) {
    log.n.push_back(n);
    log.t.push_back(t);
    log.theta.insert(log.theta.end(), theta.data(), theta.data() + theta.size());
    log.w.insert(log.w.end(), w.data(), w.data() + w.size());
    log.coupling_error.push_back(coupling);
    log.noise.push_back(z_slow.value);
  };
  auto observe = [&](std::int64_t n) {
    const double coupling = coupling_at(theta, w);
    if (config.lambda) {
      coupling_buckets[decade_of(n)].push_back(coupling);
    }
    if (config.theta_reference && n > horizon - tail_count) {
      const double err = (theta - *config.theta_reference).norm();
      tail_errors.push_back(reference_norm > 0.0 ? err / reference_norm : err);
    }
    if (config.observer) {
      config.observer(n, theta, w);
    }
    return coupling;
  };

  record(0, 0.0, observe(0));
  for (std::int64_t n = 0; n < horizon; ++n) {
    const double a_n = pair.slow(n);
    const double b_n = pair.fast(n);
    problem.sampler(theta, w, z_slow, rng, sample);
    if (problem.shared_noise) {
      z_fast = z_slow;
      theta.noalias() += a_n * sample.slow;
      w.noalias() += b_n * sample.fast;
    } else {
      problem.fast_sampler(theta, w, z_fast, rng, fast_sample);
      theta.noalias() += a_n * sample.slow;
      w.noalias() += b_n * fast_sample.fast;
    }
    time.add(a_n);
    const std::int64_t next = n + 1;
    log.iterations = next;
    const double magnitude = theta.norm() + w.norm();
    const bool diverged = !(magnitude <= config.divergence_bound);
    const double coupling = observe(next);
    if (diverged) {
      log.diverged = true;
      log.divergence_index = next;
      record(next, time.value(), coupling);
      break;
    }
    if (next % config.thinning == 0 || next == horizon) {
      record(next, time.value(), coupling);
    }
  }

  for (auto& [decade, bucket] : coupling_buckets) {
    const auto count = static_cast<std::int64_t>(bucket.size());
    log.coupling_decades.push_back({decade, count, median(std::move(bucket))});
  }
  if (config.theta_reference && !log.diverged && !tail_errors.empty()) {
    log.tail_median_relative_error = median(std::move(tail_errors));
  }
  return log;
}

std::size_t record_at_time(const TrajectoryLog& log, double t) {
  if (log.t.empty() || t < log.t.front() || t > log.t.back()) {
    throw std::out_of_range("record_at_time: t outside the logged time range");
  }
  const auto it = std::upper_bound(log.t.begin(), log.t.end(), t);
  return static_cast<std::size_t>(std::distance(log.t.begin(), it)) - 1;
}

std::pair<Vector, Vector> interpolate(const TrajectoryLog& log, double t) {
  if (log.stride != 1) {
    throw std::logic_error("interpolate: exact interpolation requires an unthinned log");
  }
  const std::size_t i = record_at_time(log, t);
  if (log.t[i] == t || i + 1 == log.size()) {
    return {log.theta_at(i), log.w_at(i)};
  }
  const double frac = (t - log.t[i]) / (log.t[i + 1] - log.t[i]);
  Vector theta = (1.0 - frac) * log.theta_at(i) + frac * log.theta_at(i + 1);
  Vector w = (1.0 - frac) * log.w_at(i) + frac * log.w_at(i + 1);
  return {std::move(theta), std::move(w)};
}

CouplingSeries coupling_error_series(const TrajectoryLog& log, const AffineMap& lambda) {
  if (lambda.input_dim() != log.dim_theta || lambda.output_dim() != log.dim_w) {
    throw std::invalid_argument("coupling_error_series: lambda map has the wrong shape");
  }
  CouplingSeries series;
  series.n = log.n;
  series.error.reserve(log.size());
  for (std::size_t i = 0; i < log.size(); ++i) {
    series.error.push_back((log.w_at(i) - lambda(log.theta_at(i))).norm());
  }
  series.decades = decade_medians(series.n, series.error);
  return series;
}

void write_trajectory_csv(std::ostream& os, const TrajectoryLog& log) {
  os << "n,t";
  for (Index i = 0; i < log.dim_theta; ++i) {
    os << ",theta_" << i;
  }
  for (Index i = 0; i < log.dim_w; ++i) {
    os << ",w_" << i;
  }
  os << ",coupling_err\n";
  const auto old_precision = os.precision(std::numeric_limits<double>::max_digits10);
  for (std::size_t r = 0; r < log.size(); ++r) {
    os << log.n[r] << ',' << log.t[r];
    for (Index i = 0; i < log.dim_theta; ++i) {
      os << ',' << log.theta_at(r)(i);
    }
    for (Index i = 0; i < log.dim_w; ++i) {
      os << ',' << log.w_at(r)(i);
    }
    os << ',' << log.coupling_error[r] << '\n';
  }
  os.precision(old_precision);
}

nlohmann::json trajectory_summary(const TrajectoryLog& log) {
  nlohmann::json decades = nlohmann::json::array();
  for (const auto& d : log.coupling_decades) {
    decades.push_back({{"decade", d.decade}, {"count", d.count}, {"median", d.median}});
  }
  nlohmann::json j{{"seed", log.seed},
                   {"schedule", log.schedule},
                   {"thinning", log.stride},
                   {"iterations", log.iterations},
                   {"records", log.size()},
                   {"diverged", log.diverged},
                   {"coupling_decade_medians", std::move(decades)}};
  j["divergence_index"] = log.divergence_index ? nlohmann::json(*log.divergence_index) : nlohmann::json();
  j["tail_median_relative_error"] =
      log.tail_median_relative_error ? nlohmann::json(*log.tail_median_relative_error) : nlohmann::json();
  if (log.size() > 0) {
    j["final_theta"] = to_json_array(Vector(log.theta_at(log.size() - 1)));
    j["final_w"] = to_json_array(Vector(log.w_at(log.size() - 1)));
    const double final_coupling = log.coupling_error.back();
    j["final_coupling_error"] = std::isnan(final_coupling) ? nlohmann::json() : nlohmann::json(final_coupling);
  }
  return j;
}

}  // namespace twotime
