#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>
#include <array>
#include <cstddef>
#include <string_view>

namespace pgr2m::motion {

inline constexpr std::size_t kJoints = 16;
inline constexpr std::size_t kFeatureDim = 3 * kJoints;  // D
inline constexpr int kFps = 20;
inline constexpr std::string_view kSkeletonName = "pgr2m-16";

enum Joint : std::size_t {
  kRoot = 0,
  kSpine,
  kNeck,
  kHead,
  kLShoulder,
  kRShoulder,
  kLElbow,
  kRElbow,
  kLWrist,
  kRWrist,
  kLHip,
  kRHip,
  kLKnee,
  kRKnee,
  kLAnkle,
  kRAnkle,
};

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

// y is up; at zero heading the body faces +z and its left side is +x.
struct Skeleton {
  std::array<std::string_view, kJoints> joint_names;
  std::array<int, kJoints> parent;  // -1 for the root
  std::array<Vec3, kJoints> rest_offsets;
};

const Skeleton& default_skeleton();

// Left/right counterpart of a joint (itself for midline joints).
Joint mirror_joint(Joint j);

}  // namespace pgr2m::motion
