#pragma once

#include <Eigen/Dense>

namespace resgrad {

// Row-major double matrices throughout; mel/residual values are kept on the
// float32 grid (see quantize_f32) so that file round-trips are lossless and
// elementwise sums/differences of two grids are exact in double.
using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vec = Eigen::VectorXd;

inline bool all_finite(const Mat& m) { return m.allFinite(); }

inline double quantize_f32(double v) { return static_cast<double>(static_cast<float>(v)); }

inline Mat quantize_f32(const Mat& m) {
  return m.unaryExpr([](double v) { return quantize_f32(v); });
}

}  // namespace resgrad
