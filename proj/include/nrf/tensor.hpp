#pragma once

#include <Eigen/Dense>
#include <string>

namespace nrf {

using Index = Eigen::Index;
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RowVector = Eigen::Matrix<double, 1, Eigen::Dynamic>;
using Vec3 = Eigen::Vector3d;

inline std::string shape_str(const Matrix& m) {
  return "(" + std::to_string(m.rows()) + "x" + std::to_string(m.cols()) + ")";
}

// x * 0 is 0 for finite x and NaN otherwise; the packet sum keeps it fast.
inline bool all_finite(const Matrix& m) { return (m.array() * 0.0).sum() == 0.0; }

}  // namespace nrf
