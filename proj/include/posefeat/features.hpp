#pragma once

#include <Eigen/Dense>

#include <string>

#include "posefeat/errors.hpp"

namespace posefeat {

/// N x F per-point features, one row per point.
using FeatureMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

inline constexpr int kDefaultFeatureDim = 32;

inline void require_finite(const FeatureMatrix& f, const char* what) {
  if (!f.allFinite()) throw NumericalError(std::string(what) + " contains a non-finite value");
}

}  // namespace posefeat
