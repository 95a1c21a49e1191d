#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

namespace curvesim {

using Vec3 = Eigen::Vector3d;

inline constexpr double kPi = 3.14159265358979323846;

} // namespace curvesim
