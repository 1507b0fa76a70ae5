#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstddef>
#include <string>

#include "monet/error.hpp"

namespace monet {

template <class T>
using Matrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <class T>
using Vector = Eigen::Matrix<T, Eigen::Dynamic, 1>;

using Index = std::ptrdiff_t;

/// Dot product of two rows accumulated in double regardless of storage type.
template <class A, class B>
double dot64(const A& a, const B& b) {
  double acc = 0.0;
  for (Index k = 0; k < a.size(); ++k) {
    acc += static_cast<double>(a[k]) * static_cast<double>(b[k]);
  }
  return acc;
}

template <class A>
double norm64(const A& a) {
  return std::sqrt(dot64(a, a));
}

template <class T>
bool all_finite(const Matrix<T>& m) {
  return m.allFinite();
}

inline void require_shape(const std::string& name, Index rows, Index cols,
                          Index want_rows, Index want_cols) {
  if (rows != want_rows || cols != want_cols) {
    throw ShapeError(name + ": expected " + std::to_string(want_rows) + "x" +
                     std::to_string(want_cols) + ", got " + std::to_string(rows) +
                     "x" + std::to_string(cols));
  }
}

}  // namespace monet
