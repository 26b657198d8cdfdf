#pragma once

#include <map>
#include <string>

#include <Eigen/Dense>

namespace lbwm::nn {

// Row-major so that (B, G*C) <-> (B*G, C) reshapes are free.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Index = Eigen::Index;

using TensorMap = std::map<std::string, Matrix>;

inline std::string shape_str(const Matrix& m) {
  return "(" + std::to_string(m.rows()) + "x" + std::to_string(m.cols()) + ")";
}

inline Matrix row_vector(std::initializer_list<double> values) {
  Matrix m(1, static_cast<Index>(values.size()));
  Index i = 0;
  for (double v : values) m(0, i++) = v;
  return m;
}

}  // namespace lbwm::nn
