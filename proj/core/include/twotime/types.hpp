#ifndef TWOTIME_TYPES_HPP_
#define TWOTIME_TYPES_HPP_

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace twotime {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using Index = Eigen::Index;

/// Random stream used by every sampler. Runs are reproducible per seed within one standard library.
using Rng = std::mt19937_64;

/// x -> linear * x + offset.
struct AffineMap {
  Matrix linear;
  Vector offset;

  Vector operator()(const Vector& x) const { return linear * x + offset; }
  Index input_dim() const { return linear.cols(); }
  Index output_dim() const { return linear.rows(); }
  /// Spectral norm of the linear part, i.e. the exact Lipschitz constant in the Euclidean norm.
  double lipschitz_constant() const;
};

/// One clause of a report-style validation.
struct Finding {
  std::string clause;
  bool passed = true;
  std::string detail;
};

/// Report-style validation result; callers decide whether to abort.
struct ValidationReport {
  std::vector<Finding> findings;

  bool ok() const;
  std::vector<Finding> violations() const;
  bool has_violation(const std::string& clause) const;
  void add(std::string clause, bool passed, std::string detail = {});
  std::string to_string() const;
};

class NotIrreducibleError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class SingularSystemError : public std::runtime_error {
 public:
  SingularSystemError(const std::string& what, double condition_number)
      : std::runtime_error(what), condition_number_(condition_number) {}
  double condition_number() const { return condition_number_; }

 private:
  double condition_number_;
};

class ValidationError : public std::invalid_argument {
 public:
  explicit ValidationError(ValidationReport report);
  const ValidationReport& report() const { return report_; }

 private:
  ValidationReport report_;
};

}  // namespace twotime

#endif  // TWOTIME_TYPES_HPP_
