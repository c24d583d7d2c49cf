#include "pgr2m/motion/corpus.hpp"

#include <algorithm>
#include <cmath>

#include "pgr2m/error.hpp"
#include "pgr2m/motion/geometry.hpp"

namespace pgr2m::motion {
namespace {

constexpr double kPi = M_PI;
constexpr double kDt = 1.0 / kFps;
constexpr double kAnkleClearance = 0.05;

Mat3 rot_x(double a) {
  Mat3 m;
  m << 1, 0, 0, 0, std::cos(a), -std::sin(a), 0, std::sin(a), std::cos(a);
  return m;
}
Mat3 rot_y(double a) {
  Mat3 m;
  m << std::cos(a), 0, std::sin(a), 0, 1, 0, -std::sin(a), 0, std::cos(a);
  return m;
}
Mat3 rot_z(double a) {
  Mat3 m;
  m << std::cos(a), -std::sin(a), 0, std::sin(a), std::cos(a), 0, 0, 0, 1;
  return m;
}

// Joint controls for one frame. Angles in radians.
struct Controls {
  Vec3 root = Vec3::Zero();  // y is ignored; height comes from ground contact
  double yaw = 0;
  double spine = 0;                    // + leans forward
  double shoulder_flex[2] = {0, 0};    // + raises the arm forward
  double shoulder_abd[2] = {0, 0};     // + lifts the arm sideways
  double elbow[2] = {0, 0};            // + bends the forearm forward
  double elbow_frontal[2] = {0, 0};    // + folds the forearm up in the frontal plane
  double hip_flex[2] = {0, 0};
  double hip_abd[2] = {0, 0};
  double knee[2] = {0, 0};
};

// Index 0 is left, 1 is right.
void forward_kinematics(const Controls& c, std::span<double> out) {
  const Skeleton& sk = default_skeleton();
  std::array<Vec3, kJoints> p;
  const Mat3 g0 = rot_y(c.yaw);
  p[kRoot] = c.root;
  p[kSpine] = p[kRoot] + g0 * sk.rest_offsets[kSpine];
  const Mat3 g1 = g0 * rot_x(c.spine);
  p[kNeck] = p[kSpine] + g1 * sk.rest_offsets[kNeck];
  p[kHead] = p[kNeck] + g1 * sk.rest_offsets[kHead];
  const Joint shoulder[2] = {kLShoulder, kRShoulder}, elbow[2] = {kLElbow, kRElbow}, wrist[2] = {kLWrist, kRWrist};
  const Joint hip[2] = {kLHip, kRHip}, knee[2] = {kLKnee, kRKnee}, ankle[2] = {kLAnkle, kRAnkle};
  for (int s = 0; s < 2; ++s) {
    const double side = s == 0 ? 1.0 : -1.0;
    p[shoulder[s]] = p[kNeck] + g1 * sk.rest_offsets[shoulder[s]];
    const Mat3 gs = g1 * rot_x(-c.shoulder_flex[s]) * rot_z(side * c.shoulder_abd[s]);
    p[elbow[s]] = p[shoulder[s]] + gs * sk.rest_offsets[elbow[s]];
    const Mat3 ge = gs * rot_z(side * c.elbow_frontal[s]) * rot_x(-c.elbow[s]);
    p[wrist[s]] = p[elbow[s]] + ge * sk.rest_offsets[wrist[s]];

    p[hip[s]] = p[kRoot] + g0 * sk.rest_offsets[hip[s]];
    const Mat3 gh = g0 * rot_z(side * c.hip_abd[s]) * rot_x(-c.hip_flex[s]);
    p[knee[s]] = p[hip[s]] + gh * sk.rest_offsets[knee[s]];
    const Mat3 gk = gh * rot_x(c.knee[s]);
    p[ankle[s]] = p[knee[s]] + gk * sk.rest_offsets[ankle[s]];
  }
  const double lift = kAnkleClearance - std::min(p[kLAnkle].y(), p[kRAnkle].y());
  for (std::size_t j = 0; j < kJoints; ++j) {
    out[3 * j] = p[j].x();
    out[3 * j + 1] = p[j].y() + lift;
    out[3 * j + 2] = p[j].z();
  }
}

double smoothstep(double x) {
  x = std::clamp(x, 0.0, 1.0);
  return x * x * (3.0 - 2.0 * x);
}

// Rise over [0, up], hold, fall over [down, 1].
double envelope(double u, double up, double down) {
  if (u < up) return smoothstep(u / up);
  if (u > down) return smoothstep((1.0 - u) / (1.0 - down));
  return 1.0;
}

class Draw {
 public:
  explicit Draw(std::uint64_t seed) : rng_(seed) {}
  double uniform(double lo, double hi) { return lo + (hi - lo) * nn::uniform01(rng_); }
  bool chance(double p) { return nn::uniform01(rng_) < p; }
  std::size_t index(std::size_t n) { return std::min(n - 1, static_cast<std::size_t>(nn::uniform01(rng_) * n)); }
  template <class T>
  const T& pick(const std::vector<T>& v) {
    return v[index(v.size())];
  }

 private:
  nn::Rng rng_;
};

struct Style {
  double elbow = 0;
  double lean = 0;
  double abduction = 0;
  double stance = 0;
  double speed = 1.0;
  std::vector<std::string> keywords;
  std::string emotion;
};

Style draw_style(Draw& d) {
  Style s;
  if (d.chance(0.35)) {
    s.elbow = d.uniform(1.3, 1.8);
    s.keywords.push_back("elbows bent");
  } else {
    s.elbow = d.uniform(0.05, 0.5);
    s.keywords.push_back("arms straight");
  }
  const double r = d.uniform(0, 1);
  if (r < 0.2) {
    s.lean = d.uniform(0.55, 0.75);
    s.keywords.push_back("torso leaning forward");
  } else if (r < 0.35) {
    s.lean = -d.uniform(0.55, 0.75);
    s.keywords.push_back("torso leaning back");
  } else {
    s.lean = d.uniform(-0.12, 0.12);
    s.keywords.push_back("upright torso");
  }
  if (d.chance(0.5)) {
    s.abduction = d.uniform(0.0, 0.03);
    s.keywords.push_back("hands close to the body");
  } else {
    s.abduction = d.uniform(0.3, 0.5);
    s.keywords.push_back("arms held wide");
  }
  if (d.chance(0.3)) {
    s.stance = d.uniform(0.12, 0.2);
    s.keywords.push_back("wide stance");
  } else {
    s.stance = d.uniform(0.0, 0.03);
    s.keywords.push_back("feet together");
  }
  const double k = d.uniform(0, 1);
  if (k < 0.3) {
    s.speed = d.uniform(0.75, 0.9);
    s.emotion = "tired";
  } else if (k < 0.6) {
    s.speed = d.uniform(1.15, 1.35);
    s.emotion = "energetic";
  } else {
    s.speed = d.uniform(0.9, 1.15);
    s.emotion = d.chance(0.5) ? "neutral" : "calm";
  }
  return s;
}

// A temporary change of one limb or posture attribute over [begin, end] of the
// normalized timeline. Teaches the tokenizer that codes vary per side and over
// time, independently of the action family.
struct Episode {
  enum Kind { elbow, knee, raise, abduction, lean, stance } kind = elbow;
  int side = 0;
  double begin = 0, end = 0;
  double target = 0;
};

double episode_weight(const Episode& e, double u) {
  constexpr double ramp = 0.06;
  return smoothstep((u - e.begin) / ramp) * smoothstep((e.end - u) / ramp);
}

// Limbs and postures the family animates itself are left alone.
bool episode_allowed(std::string_view family, Episode::Kind kind, int side) {
  const bool walking = family == "walk" || family == "walk-turn-left" || family == "walk-turn-right";
  const bool right_busy = family == "raise-right-arm" || family == "wave";
  const bool left_busy = family == "raise-left-arm";
  switch (kind) {
    case Episode::elbow:
    case Episode::abduction:
      if (family == "squat") return false;
      return !(side == 0 ? left_busy : right_busy);
    case Episode::raise: return walking;
    case Episode::knee: return family != "squat";
    case Episode::lean: return family != "bow" && family != "squat";
    case Episode::stance: return true;
  }
  return false;
}

std::vector<Episode> draw_episodes(std::string_view family, const Style& s, Draw& d,
                                   std::vector<std::string>& keywords) {
  static const char* kSide[2] = {"left", "right"};
  const double r = d.uniform(0, 1);
  const int count = r < 0.3 ? 0 : r < 0.75 ? 1 : 2;
  std::vector<Episode> out;
  for (int tries = 0; tries < 8 && static_cast<int>(out.size()) < count; ++tries) {
    Episode e;
    e.kind = static_cast<Episode::Kind>(d.index(6));
    e.side = static_cast<int>(d.index(2));
    e.begin = d.uniform(0.05, 0.6);
    e.end = std::min(0.98, e.begin + d.uniform(0.2, 0.45));
    if (!episode_allowed(family, e.kind, e.side)) continue;
    if (std::any_of(out.begin(), out.end(), [&](const Episode& o) { return o.kind == e.kind; })) continue;
    const std::string side = kSide[e.side];
    switch (e.kind) {
      case Episode::elbow:
        e.target = s.elbow > 1.0 ? d.uniform(0.05, 0.4) : d.uniform(1.4, 1.9);
        keywords.push_back(side + (s.elbow > 1.0 ? " elbow straightens briefly" : " elbow bends briefly"));
        break;
      case Episode::knee:
        e.target = d.uniform(1.4, 1.8);
        keywords.push_back(side + " knee lifts briefly");
        break;
      case Episode::raise:
        e.target = d.uniform(2.3, 2.8);
        keywords.push_back(side + " hand raised briefly");
        break;
      case Episode::abduction:
        e.target = s.abduction > 0.15 ? d.uniform(0.0, 0.03) : d.uniform(0.3, 0.5);
        keywords.push_back(side + (s.abduction > 0.15 ? " arm pulled in briefly" : " arm held out briefly"));
        break;
      case Episode::lean:
        e.target = std::abs(s.lean) > 0.3 ? d.uniform(-0.12, 0.12) : (d.chance(0.5) ? 1.0 : -1.0) * d.uniform(0.55, 0.75);
        keywords.push_back(e.target > 0.3 ? "leans forward briefly" : e.target < -0.3 ? "leans back briefly" : "straightens up briefly");
        break;
      case Episode::stance:
        e.target = s.stance > 0.08 ? d.uniform(0.0, 0.03) : d.uniform(0.12, 0.2);
        keywords.push_back(s.stance > 0.08 ? "feet come together briefly" : "feet spread briefly");
        break;
    }
    out.push_back(e);
  }
  return out;
}

void apply_episode(const Episode& e, double u, Controls& c) {
  const double w = episode_weight(e, u);
  if (w <= 0) return;
  auto mix = [w](double& x, double target) { x += w * (target - x); };
  switch (e.kind) {
    case Episode::elbow: mix(c.elbow[e.side], e.target); break;
    case Episode::knee:
      mix(c.hip_flex[e.side], 0.45 * e.target);
      mix(c.knee[e.side], e.target);
      break;
    case Episode::raise:
      mix(c.shoulder_flex[e.side], e.target);
      mix(c.elbow[e.side], 0.1);
      break;
    case Episode::abduction: mix(c.shoulder_abd[e.side], e.target); break;
    case Episode::lean: mix(c.spine, e.target); break;
    case Episode::stance:
      mix(c.hip_abd[0], e.target);
      mix(c.hip_abd[1], e.target);
      break;
  }
}

Controls base_controls(const Style& s) {
  Controls c;
  c.spine = s.lean;
  for (int k = 0; k < 2; ++k) {
    c.shoulder_abd[k] = s.abduction;
    c.elbow[k] = s.elbow;
    c.hip_abd[k] = s.stance;
  }
  return c;
}

struct Recipe {
  std::string family;
  std::vector<std::string> captions;
  std::vector<std::string> keywords;
};

Motion synthesize(std::string_view family, Draw& d) {
  const std::size_t L = 4 * (16 + d.index(34));  // 4 * randint(16, 49)
  Style st = draw_style(d);
  std::vector<std::string> episode_keywords;
  const std::vector<Episode> episodes = draw_episodes(family, st, d, episode_keywords);
  Motion m;
  m.family = std::string(family);
  m.fps = kFps;
  m.frames.assign(L * kFeatureDim, 0.0);
  std::vector<std::string> captions;
  std::vector<std::string> kw;

  const double up = d.uniform(0.15, 0.35), down = d.uniform(0.65, 0.85);
  const bool walking = family == "walk" || family == "walk-turn-left" || family == "walk-turn-right";

  // Gait parameters.
  const double stride_amp = d.uniform(0.3, 0.45);
  const double knee_amp = d.uniform(0.5, 0.8);
  const double arm_swing = d.uniform(0.2, 0.4);
  const double velocity = d.uniform(0.8, 1.3) * st.speed;
  const double step_len = 2.0 * 0.85 * std::sin(stride_amp);
  const double cadence = velocity / (2.0 * step_len);
  const double phase0 = d.uniform(0, 2 * kPi);
  const double yaw0 = d.uniform(-0.3, 0.3);
  const double turn = d.uniform(1.0, 1.6) * (family == "walk-turn-left" ? 1.0 : family == "walk-turn-right" ? -1.0 : 0.0);
  const double turn_start = d.uniform(0.3, 0.5), turn_end = d.uniform(0.8, 0.95);

  // Single-action amplitudes.
  const double raise = d.uniform(2.3, 2.9);
  const double squat = d.uniform(0.8, 1.2);
  const double squat_arms = d.uniform(1.3, 1.6);
  const double bow = d.uniform(0.95, 1.3);
  const double wave_freq = d.uniform(2.0, 3.0);
  const double wave_amp = d.uniform(0.35, 0.5);

  Vec3 root = Vec3::Zero();
  for (std::size_t t = 0; t < L; ++t) {
    const double time = t * kDt;
    const double u = L > 1 ? static_cast<double>(t) / (L - 1) : 0.0;
    Controls c = base_controls(st);
    if (walking) {
      const double phi = phase0 + 2 * kPi * cadence * time;
      c.yaw = yaw0 + turn * smoothstep((u - turn_start) / (turn_end - turn_start));
      for (int k = 0; k < 2; ++k) {
        const double sgn = k == 0 ? 1.0 : -1.0;
        c.hip_flex[k] = sgn * stride_amp * std::sin(phi);
        c.knee[k] = 0.1 + knee_amp * std::max(0.0, sgn * std::cos(phi));
        c.shoulder_flex[k] = -sgn * arm_swing * std::sin(phi);
      }
      if (t > 0) root += velocity * kDt * Vec3(std::sin(c.yaw), 0, std::cos(c.yaw));
    } else {
      c.yaw = yaw0;
      const double e = envelope(u, up, down);
      if (family == "raise-left-arm") {
        c.shoulder_flex[0] = raise * e;
        c.elbow[0] = st.elbow * (1.0 - e) + 0.1 * e;
      } else if (family == "raise-right-arm") {
        c.shoulder_flex[1] = raise * e;
        c.elbow[1] = st.elbow * (1.0 - e) + 0.1 * e;
      } else if (family == "squat") {
        for (int k = 0; k < 2; ++k) {
          c.hip_flex[k] = squat * e;
          c.knee[k] = 2.0 * squat * e;
          c.shoulder_flex[k] = squat_arms * e;
          c.shoulder_abd[k] = st.abduction * (1.0 - e);
          c.elbow[k] = st.elbow * (1.0 - e) + 0.1 * e;
        }
        c.spine = st.lean * (1.0 - e) + 0.3 * e;
      } else if (family == "bow") {
        c.spine = st.lean * (1.0 - e) + bow * e;
      } else if (family == "wave") {
        c.shoulder_abd[1] = st.abduction * (1.0 - e) + (kPi / 2) * e;
        c.elbow[1] = st.elbow * (1.0 - e);
        c.elbow_frontal[1] = e * (kPi / 2 + wave_amp * std::sin(2 * kPi * wave_freq * time));
      }
    }
    for (const auto& e : episodes) apply_episode(e, u, c);
    c.root = root;
    forward_kinematics(c, m.frame(t));
  }

  const double v = st.speed;
  const std::string pace = v < 0.9 ? "slowly " : v > 1.15 ? "quickly " : "";
  if (family == "walk") {
    captions = {"a person walks forward", "someone walks " + pace + "straight ahead", "a person walks " + pace + "forward"};
    kw = {"legs stride", "arms swing"};
  } else if (family == "walk-turn-left") {
    captions = {"a person walks forward then turns left", "someone walks and turns to the left"};
    kw = {"legs stride", "body turns left"};
  } else if (family == "walk-turn-right") {
    captions = {"a person walks forward then turns right", "someone walks and turns to the right"};
    kw = {"legs stride", "body turns right"};
  } else if (family == "raise-left-arm") {
    captions = {"a person raises their left arm", "someone lifts the left arm up"};
    kw = {"left arm raised", "left hand above head"};
  } else if (family == "raise-right-arm") {
    captions = {"a person raises their right arm", "someone lifts the right arm up"};
    kw = {"right arm raised", "right hand above head"};
  } else if (family == "squat") {
    captions = {"a person squats down", "someone does a squat and stands back up"};
    kw = {"knees bent", "hips lowered", "arms forward"};
  } else if (family == "bow") {
    captions = {"a person bows", "someone bends forward in a bow"};
    kw = {"torso bends forward", "head lowered"};
  } else if (family == "wave") {
    captions = {"a person waves with the right hand", "someone waves their right hand"};
    kw = {"right arm raised", "right forearm swings"};
  }
  m.caption = d.pick(captions);
  for (auto& k : st.keywords) kw.push_back(k);
  for (auto& k : episode_keywords) kw.push_back(k);
  kw.resize(std::min<std::size_t>(kw.size(), 10));
  kw.push_back(st.emotion);
  m.keywords = std::move(kw);
  return m;
}

double wrap_angle(double a) {
  while (a > kPi) a -= 2 * kPi;
  while (a <= -kPi) a += 2 * kPi;
  return a;
}

}  // namespace

std::string split_of_index(std::size_t index) {
  const std::size_t r = index % 20;
  if (r == 0) return "val";
  if (r <= 3) return "test";
  return "train";
}

Motion generate_family_motion(std::string_view family, std::uint64_t seed) {
  if (std::find(kFamilies.begin(), kFamilies.end(), family) == kFamilies.end()) {
    throw ValidationError("unknown motion family '" + std::string(family) + "'");
  }
  Draw d(seed);
  return synthesize(family, d);
}

Motion generate_motion(std::uint64_t seed, std::size_t index) {
  Draw d(nn::derive_seed(seed, index));
  const std::string_view family = kFamilies[d.index(kFamilies.size())];
  Motion m = synthesize(family, d);
  m.split = split_of_index(index);
  return m;
}

MotionDataset generate_corpus(std::uint64_t seed, std::size_t count) {
  if (count == 0) throw ValidationError("corpus count must be at least 1");
  MotionDataset d;
  d.seed = seed;
  d.motions.reserve(count);
  for (std::size_t i = 0; i < count; ++i) d.motions.push_back(generate_motion(seed, i));
  return d;
}

std::string classify_family(const Motion& m) {
  const std::size_t L = m.length();
  if (L < 2) return "unknown";
  double path = 0.0;
  for (std::size_t t = 1; t < L; ++t) {
    Vec3 dv = m.joint(t, kRoot) - m.joint(t - 1, kRoot);
    dv.y() = 0.0;
    path += dv.norm();
  }
  if (path > 1.0) {
    const double turn = wrap_angle(heading(m.frame(L - 1)) - heading(m.frame(0)));
    if (turn > 0.6) return "walk-turn-left";
    if (turn < -0.6) return "walk-turn-right";
    return "walk";
  }
  const double y0 = m.joint(0, kRoot).y();
  double drop = 0.0, pitch = -kPi, left_raise = -1e9;
  for (std::size_t t = 0; t < L; ++t) {
    drop = std::max(drop, y0 - m.joint(t, kRoot).y());
    pitch = std::max(pitch, torso_pitch(m.frame(t)));
    left_raise = std::max(left_raise, m.joint(t, kLWrist).y() - m.joint(t, kNeck).y());
  }
  if (drop > 0.15) return "squat";
  if (pitch > 0.5) return "bow";
  if (left_raise > 0.0) return "raise-left-arm";

  // Lateral wrist coordinate in the body frame over frames where the wrist is raised.
  std::vector<double> lateral;
  for (std::size_t t = 0; t < L; ++t) {
    if (m.joint(t, kRWrist).y() <= m.joint(t, kNeck).y()) continue;
    const FacingFrame f = facing_frame(m.frame(t));
    lateral.push_back((m.joint(t, kRWrist) - m.joint(t, kRShoulder)).dot(f.left));
  }
  if (lateral.empty()) return "unknown";
  double mean = 0.0;
  for (double x : lateral) mean += x;
  mean /= static_cast<double>(lateral.size());
  constexpr double band = 0.03;
  int state = 0, crossings = 0;
  for (double x : lateral) {
    const int s = x > mean + band ? 1 : x < mean - band ? -1 : 0;
    if (s != 0 && state != 0 && s != state) ++crossings;
    if (s != 0) state = s;
  }
  return crossings >= 4 ? "wave" : "raise-right-arm";
}

std::map<std::string, std::size_t> family_histogram(const MotionDataset& d) {
  std::map<std::string, std::size_t> h;
  for (const auto& m : d.motions) ++h[m.family.empty() ? classify_family(m) : m.family];
  return h;
}

}  // namespace pgr2m::motion
