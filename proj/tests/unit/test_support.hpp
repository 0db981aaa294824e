#pragma once

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <string>

#include "posefeat/geometry.hpp"
#include "posefeat/random.hpp"

namespace posefeat::test {

inline PointCloud random_cloud(std::size_t n, Rng& rng, double extent = 50.0, bool colors = false) {
  PointCloud c;
  for (std::size_t i = 0; i < n; ++i) {
    c.positions.emplace_back(uniform(rng, -extent, extent), uniform(rng, -extent, extent), uniform(rng, -extent, extent));
    if (colors) c.colors.emplace_back(uniform01(rng), uniform01(rng), uniform01(rng));
  }
  return c;
}

inline RigidPose random_pose(Rng& rng, double t = 100.0) {
  RigidPose p;
  p.rotation = random_rotation(rng);
  p.translation = Vec3(uniform(rng, -t, t), uniform(rng, -t, t), uniform(rng, -t, t));
  return p;
}

inline double rotation_error(const Mat3& a, const Mat3& b) {
  const double c = ((a.transpose() * b).trace() - 1.0) / 2.0;
  return std::acos(std::clamp(c, -1.0, 1.0));
}

/// Fresh empty directory under the system temp dir.
inline std::filesystem::path temp_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("posefeat_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

inline std::filesystem::path data_dir() { return POSEFEAT_TEST_DATA; }

}  // namespace posefeat::test
