#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <stdexcept>
#include <string>

namespace dptr {

// All dense buffers are row-major: row = token / pixel row, col = feature.
template <typename S>
using Matrix = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

using Real = float;
using MatF = Matrix<float>;
using MatD = Matrix<double>;
using BoolMat = Eigen::Matrix<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

[[noreturn]] inline void fail(const std::string& msg) { throw std::runtime_error(msg); }

inline void require(bool cond, const std::string& msg) {
  if (!cond) fail(msg);
}

template <typename S>
bool all_finite(const Matrix<S>& m) {
  return m.allFinite();
}

}  // namespace dptr
