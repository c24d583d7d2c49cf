#include "pgr2m/motion/skeleton.hpp"

namespace pgr2m::motion {

const Skeleton& default_skeleton() {
  static const Skeleton s{
      {"root", "spine", "neck", "head", "l_shoulder", "r_shoulder", "l_elbow", "r_elbow", "l_wrist", "r_wrist",
       "l_hip", "r_hip", "l_knee", "r_knee", "l_ankle", "r_ankle"},
      {-1, 0, 1, 2, 2, 2, 4, 5, 6, 7, 0, 0, 10, 11, 12, 13},
      {Vec3(0, 0, 0), Vec3(0, 0.20, 0), Vec3(0, 0.30, 0), Vec3(0, 0.15, 0), Vec3(0.17, -0.05, 0),
       Vec3(-0.17, -0.05, 0), Vec3(0, -0.28, 0), Vec3(0, -0.28, 0), Vec3(0, -0.26, 0), Vec3(0, -0.26, 0),
       Vec3(0.10, -0.05, 0), Vec3(-0.10, -0.05, 0), Vec3(0, -0.43, 0), Vec3(0, -0.43, 0), Vec3(0, -0.42, 0),
       Vec3(0, -0.42, 0)},
  };
  return s;
}

Joint mirror_joint(Joint j) {
  switch (j) {
    case kLShoulder: return kRShoulder;
    case kRShoulder: return kLShoulder;
    case kLElbow: return kRElbow;
    case kRElbow: return kLElbow;
    case kLWrist: return kRWrist;
    case kRWrist: return kLWrist;
    case kLHip: return kRHip;
    case kRHip: return kLHip;
    case kLKnee: return kRKnee;
    case kRKnee: return kLKnee;
    case kLAnkle: return kRAnkle;
    case kRAnkle: return kLAnkle;
    default: return j;
  }
}

}  // namespace pgr2m::motion
