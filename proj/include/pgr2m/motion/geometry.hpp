#pragma once

#include <span>

#include "pgr2m/motion/skeleton.hpp"

// Geometric measurements on a single pose vector (48 values).
namespace pgr2m::motion {

using PoseView = std::span<const double>;

inline Vec3 joint_of(PoseView pose, std::size_t j) { return {pose[3 * j], pose[3 * j + 1], pose[3 * j + 2]}; }

// Interior angle at `joint` between the segments towards `a` and `b`, radians.
double joint_angle(PoseView pose, std::size_t a, std::size_t joint, std::size_t b);

// Horizontal unit vectors of the body frame, from the hip line.
struct FacingFrame {
  Vec3 left;
  Vec3 forward;
};
FacingFrame facing_frame(PoseView pose);

// Signed pitch of the root-to-neck segment from vertical; positive leans forward.
double torso_pitch(PoseView pose);

// Heading angle about +y of the facing direction; 0 faces +z, positive turns left.
double heading(PoseView pose);

}  // namespace pgr2m::motion
