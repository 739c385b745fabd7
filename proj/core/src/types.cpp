#include "twotime/types.hpp"

#include <algorithm>
#include <sstream>

namespace twotime {

double AffineMap::lipschitz_constant() const {
  if (linear.size() == 0) {
    return 0.0;
  }
  Eigen::JacobiSVD<Matrix> svd(linear);
  return svd.singularValues()(0);
}

bool ValidationReport::ok() const {
  return std::all_of(findings.begin(), findings.end(), [](const Finding& f) { return f.passed; });
}

std::vector<Finding> ValidationReport::violations() const {
  std::vector<Finding> out;
  std::copy_if(findings.begin(), findings.end(), std::back_inserter(out),
               [](const Finding& f) { return !f.passed; });
  return out;
}

bool ValidationReport::has_violation(const std::string& clause) const {
  return std::any_of(findings.begin(), findings.end(),
                     [&](const Finding& f) { return !f.passed && f.clause == clause; });
}

void ValidationReport::add(std::string clause, bool passed, std::string detail) {
  findings.push_back({std::move(clause), passed, std::move(detail)});
}

std::string ValidationReport::to_string() const {
  std::ostringstream os;
  for (const auto& f : findings) {
    os << (f.passed ? "pass  " : "FAIL  ") << f.clause;
    if (!f.detail.empty()) {
      os << "  (" << f.detail << ")";
    }
    os << '\n';
  }
  return os.str();
}

namespace {

std::string summarize(const ValidationReport& report) {
  std::ostringstream os;
  os << "validation failed:";
  for (const auto& f : report.violations()) {
    os << ' ' << f.clause;
    if (!f.detail.empty()) {
      os << " [" << f.detail << ']';
    }
    os << ';';
  }
  return os.str();
}

}  // namespace

ValidationError::ValidationError(ValidationReport report)
    : std::invalid_argument(summarize(report)), report_(std::move(report)) {}

}  // namespace twotime
