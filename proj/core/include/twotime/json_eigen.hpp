#ifndef TWOTIME_JSON_EIGEN_HPP_
#define TWOTIME_JSON_EIGEN_HPP_

#include <nlohmann/json.hpp>

#include "twotime/types.hpp"

namespace twotime {

inline nlohmann::json to_json_array(const Vector& v) {
  nlohmann::json out = nlohmann::json::array();
  for (Index i = 0; i < v.size(); ++i) {
    out.push_back(v(i));
  }
  return out;
}

// Row-major nested arrays.
inline nlohmann::json to_json_array(const Matrix& m) {
  nlohmann::json out = nlohmann::json::array();
  for (Index i = 0; i < m.rows(); ++i) {
    out.push_back(to_json_array(Vector(m.row(i).transpose())));
  }
  return out;
}

inline Vector vector_from_json(const nlohmann::json& j) {
  Vector v(static_cast<Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) {
    v(static_cast<Index>(i)) = j[i].get<double>();
  }
  return v;
}

inline Matrix matrix_from_json(const nlohmann::json& j) {
  if (!j.is_array() || j.empty()) {
    throw std::invalid_argument("matrix document must be a non-empty array of rows");
  }
  Matrix m(static_cast<Index>(j.size()), static_cast<Index>(j.front().size()));
  for (std::size_t i = 0; i < j.size(); ++i) {
    if (j[i].size() != j.front().size()) {
      throw std::invalid_argument("matrix document rows must have equal length");
    }
    for (std::size_t k = 0; k < j[i].size(); ++k) {
      m(static_cast<Index>(i), static_cast<Index>(k)) = j[i][k].get<double>();
    }
  }
  return m;
}

}  // namespace twotime

#endif  // TWOTIME_JSON_EIGEN_HPP_
