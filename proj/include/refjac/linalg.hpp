#pragma once

#include <Eigen/Dense>

#include <array>

namespace refjac {

// Dimensions are runtime values but bounded, so vectors and matrices live on
// the stack and the path loops never allocate.
inline constexpr int kMaxDim = 4;

using Vec = Eigen::Matrix<double, Eigen::Dynamic, 1, Eigen::ColMajor, kMaxDim, 1>;
using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::ColMajor,
                          kMaxDim, kMaxDim>;

// One matrix per diffusion column; only the first `dim` entries are meaningful.
using MatStack = std::array<Mat, kMaxDim>;

inline Vec zero_vec(int dim) { return Vec::Zero(dim); }
inline Mat identity(int dim) { return Mat::Identity(dim, dim); }

inline bool all_finite(const Vec& v) { return v.allFinite(); }

}  // namespace refjac
