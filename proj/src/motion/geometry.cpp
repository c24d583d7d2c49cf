#include "pgr2m/motion/geometry.hpp"

#include <algorithm>
#include <cmath>

namespace pgr2m::motion {

double joint_angle(PoseView pose, std::size_t a, std::size_t joint, std::size_t b) {
  const Vec3 u = joint_of(pose, a) - joint_of(pose, joint);
  const Vec3 v = joint_of(pose, b) - joint_of(pose, joint);
  const double nu = u.norm(), nv = v.norm();
  if (nu == 0.0 || nv == 0.0) return M_PI;
  return std::acos(std::clamp(u.dot(v) / (nu * nv), -1.0, 1.0));
}

FacingFrame facing_frame(PoseView pose) {
  Vec3 left = joint_of(pose, kLHip) - joint_of(pose, kRHip);
  left.y() = 0.0;
  const double n = left.norm();
  left = n > 0.0 ? Vec3(left / n) : Vec3(1, 0, 0);
  const Vec3 forward = left.cross(Vec3(0, 1, 0));
  return {left, forward};
}

double torso_pitch(PoseView pose) {
  const Vec3 v = joint_of(pose, kNeck) - joint_of(pose, kRoot);
  return std::atan2(v.dot(facing_frame(pose).forward), v.y());
}

double heading(PoseView pose) {
  const Vec3 f = facing_frame(pose).forward;
  return std::atan2(f.x(), f.z());
}

}  // namespace pgr2m::motion
