#pragma once

#include <array>
#include <cmath>
#include <numbers>
#include <string>
#include <vector>

#include "pillarmamba/common.hpp"

namespace pillarmamba {

inline constexpr std::array<const char*, 3> kClassNames = {"vehicle", "pedestrian", "cyclist"};
inline constexpr int kNumClasses = static_cast<int>(kClassNames.size());

/// Class id for a name; FormatError listing the known names otherwise.
int class_id(const std::string& name);
std::string class_name(int id);

/// Wraps to [-pi, pi).
inline double normalize_yaw(double yaw) {
  constexpr double pi = std::numbers::pi, two_pi = 2.0 * std::numbers::pi;
  if (yaw >= -pi && yaw < pi) return yaw;
  double r = yaw - two_pi * std::floor((yaw + pi) / two_pi);
  if (r >= pi) r -= two_pi;
  if (r < -pi) r += two_pi;
  return r;
}

struct Box3D {
  double x = 0, y = 0, z = 0;
  double l = 1, w = 1, h = 1;
  double yaw = 0;
  int cls = 0;

  bool operator==(const Box3D&) const = default;
};

struct Detection {
  Box3D box;
  double score = 0;
};

/// BEV footprint corners, counter-clockwise.
std::array<std::array<double, 2>, 4> footprint(const Box3D& b);

/// Whether (x, y, z) lies inside the oriented box (closed boundaries).
bool contains_point(const Box3D& b, double x, double y, double z);

}  // namespace pillarmamba
