// Copyright 2026 The handocc Authors.
// Distributed under the Apache License, Version 2.0.
// See the accompanying LICENSE file or http://www.apache.org/licenses/LICENSE-2.0

#include "handocc/kinematics.hpp"

#include <cmath>
#include <random>

#include "handocc/error.hpp"

namespace handocc {

namespace {

constexpr int kFingers = HandTopology::kNumFingers;

// Fan angles of the finger chains at rest, measured from +y toward +x
// (right hand). Degrees.
constexpr double kFanDegrees[kFingers] = {48.0, 12.0, 0.0, -12.0, -26.0};

const std::array<double, 20> kCanonicalBoneLengths = {
    // wrist->root, root->mid1, mid1->mid2, mid2->tip per finger
    45.0, 38.0, 32.0, 28.0,  // thumb
    85.0, 42.0, 26.0, 22.0,  // index
    88.0, 48.0, 30.0, 24.0,  // middle
    82.0, 44.0, 28.0, 23.0,  // ring
    74.0, 34.0, 22.0, 20.0,  // pinky
};

Mat3d rot_x(double a) {
  const double c = std::cos(a), s = std::sin(a);
  return Mat3d::from_cols({1, 0, 0}, {0, c, s}, {0, -s, c});
}

Mat3d rot_z(double a) {
  const double c = std::cos(a), s = std::sin(a);
  return Mat3d::from_cols({c, s, 0}, {-s, c, 0}, {0, 0, 1});
}

bool finite(const Vec3d& v) {
  return std::isfinite(v.x) && std::isfinite(v.y) && std::isfinite(v.z);
}

/// Base frame of a finger chain: local y along the fan direction, local z the
/// palm normal (+z at rest).
Mat3d finger_base_frame(int finger, Side side) {
  const Vec3d y = HandPose::canonical_finger_direction(finger, side);
  const Vec3d z{0, 0, 1};
  const Vec3d x = cross(y, z);
  return Mat3d::from_cols(x, y, z);
}

}  // namespace

// ---------------------------------------------------------------------------
// Topology
// ---------------------------------------------------------------------------

const HandTopology& HandTopology::canonical() {
  static const HandTopology topo = [] {
    HandTopology t{};
    t.parent[0] = -1;
    for (int f = 0; f < kNumFingers; ++f) {
      const int root = finger_root(f);
      t.parent[root] = 0;
      t.parent[root + 1] = root;
      t.parent[root + 2] = root + 1;
      t.parent[root + 3] = root + 2;
      t.finger_chains[f] = {root, root + 1, root + 2, root + 3};
    }
    for (int j = 1; j < kNumJoints; ++j) t.edges[j - 1] = {t.parent[j], j};
    return t;
  }();
  return topo;
}

const char* HandTopology::joint_name(int joint) {
  static const char* names[kNumJoints] = {
      "wrist",
      "thumb_root", "thumb_mid1", "thumb_mid2", "thumb_tip",
      "index_root", "index_mid1", "index_mid2", "index_tip",
      "middle_root", "middle_mid1", "middle_mid2", "middle_tip",
      "ring_root", "ring_mid1", "ring_mid2", "ring_tip",
      "pinky_root", "pinky_mid1", "pinky_mid2", "pinky_tip",
  };
  return names[joint];
}

// ---------------------------------------------------------------------------
// HandPose / Skeleton
// ---------------------------------------------------------------------------

const std::array<double, 20>& HandPose::canonical_bone_lengths() { return kCanonicalBoneLengths; }

Vec3d HandPose::canonical_finger_direction(int finger, Side side) {
  const double a = kFanDegrees[finger] * M_PI / 180.0;
  double sx = std::sin(a);
  if (side == Side::Left) sx = -sx;
  return {sx, std::cos(a), 0.0};
}

HandPose HandPose::rest(Side side) {
  HandPose p;
  p.side = side;
  p.bone_lengths = kCanonicalBoneLengths;
  return p;
}

void HandPose::validate() const {
  if (!finite(global_rotation) || !finite(global_translation))
    throw InvalidInput("invalid pose: non-finite global placement");
  for (double a : joint_angles)
    if (!std::isfinite(a)) throw InvalidInput("invalid pose: non-finite joint angle");
  for (int e = 0; e < 20; ++e) {
    const double l = bone_lengths[e];
    if (!std::isfinite(l) || l <= 0.0)
      throw InvalidInput(std::string("invalid pose: non-positive bone length at edge ") +
                         std::to_string(e) + " (" + HandTopology::joint_name(e + 1) + ")");
  }
}

void Skeleton::validate() const {
  for (int j = 0; j < 21; ++j)
    if (!finite(joints[j]))
      throw InvalidInput(std::string("invalid skeleton: non-finite joint ") +
                         HandTopology::joint_name(j));
}

Aabb Skeleton::bounding_box() const {
  Aabb b;
  for (const auto& j : joints) b.expand(j);
  return b;
}

// ---------------------------------------------------------------------------
// Forward kinematics
// ---------------------------------------------------------------------------

FkCache forward_kinematics_cached(const HandPose& pose) {
  pose.validate();
  FkCache out;
  out.skeleton.side = pose.side;
  out.global_rotation = rotation_exp(pose.global_rotation);

  const Vec3d wrist = pose.global_translation;
  out.skeleton.joints[0] = wrist;

  for (int f = 0; f < kFingers; ++f) {
    const int root = HandTopology::finger_root(f);
    const int e0 = 4 * f;
    const double flex_root = pose.joint_angles[e0 + 0];
    const double abd_root = pose.joint_angles[e0 + 1];
    const double flex_mid1 = pose.joint_angles[e0 + 2];
    const double flex_mid2 = pose.joint_angles[e0 + 3];

    const Mat3d base = out.global_rotation * finger_base_frame(f, pose.side);
    const Vec3d p_root = wrist + base * Vec3d{0, pose.bone_lengths[e0], 0};

    const Mat3d after_abd = base * rot_z(abd_root);
    const Mat3d f1 = after_abd * rot_x(flex_root);
    const Vec3d p_mid1 = p_root + f1 * Vec3d{0, pose.bone_lengths[e0 + 1], 0};

    const Mat3d f2 = f1 * rot_x(flex_mid1);
    const Vec3d p_mid2 = p_mid1 + f2 * Vec3d{0, pose.bone_lengths[e0 + 2], 0};

    const Mat3d f3 = f2 * rot_x(flex_mid2);
    const Vec3d p_tip = p_mid2 + f3 * Vec3d{0, pose.bone_lengths[e0 + 3], 0};

    out.skeleton.joints[root] = p_root;
    out.skeleton.joints[root + 1] = p_mid1;
    out.skeleton.joints[root + 2] = p_mid2;
    out.skeleton.joints[root + 3] = p_tip;

    out.world_axes[f][0] = after_abd.col[0];  // root flexion (local x after abduction)
    out.world_axes[f][1] = base.col[2];       // root abduction (local z)
    out.world_axes[f][2] = f1.col[0];         // mid1 flexion
    out.world_axes[f][3] = f2.col[0];         // mid2 flexion

    out.bone_directions[e0 + 0] = base.col[1];
    out.bone_directions[e0 + 1] = f1.col[1];
    out.bone_directions[e0 + 2] = f2.col[1];
    out.bone_directions[e0 + 3] = f3.col[1];
  }
  return out;
}

Skeleton forward_kinematics(const HandPose& pose) { return forward_kinematics_cached(pose).skeleton; }

PoseGrad chain_rule_to_pose(const FkCache& fk, const std::array<Vec3d, 21>& d_joints) {
  PoseGrad g;
  const Vec3d wrist = fk.skeleton.joints[0];

  for (int j = 0; j < 21; ++j) {
    g.d_translation += d_joints[j];
    g.d_rotation += cross(fk.skeleton.joints[j] - wrist, d_joints[j]);
  }

  for (int f = 0; f < kFingers; ++f) {
    const int root = HandTopology::finger_root(f);
    const int e0 = 4 * f;
    const Vec3d p_root = fk.skeleton.joints[root];
    const Vec3d p_mid1 = fk.skeleton.joints[root + 1];
    const Vec3d p_mid2 = fk.skeleton.joints[root + 2];

    // Root flexion and abduction move mid1, mid2, tip about the root joint.
    for (int a = 0; a < 2; ++a) {
      const Vec3d& axis = fk.world_axes[f][a];
      double acc = 0.0;
      for (int j = root + 1; j <= root + 3; ++j)
        acc += dot(d_joints[j], cross(axis, fk.skeleton.joints[j] - p_root));
      g.d_angles[e0 + a] = acc;
    }
    // Mid1 flexion moves mid2, tip about mid1.
    {
      const Vec3d& axis = fk.world_axes[f][2];
      double acc = 0.0;
      for (int j = root + 2; j <= root + 3; ++j)
        acc += dot(d_joints[j], cross(axis, fk.skeleton.joints[j] - p_mid1));
      g.d_angles[e0 + 2] = acc;
    }
    // Mid2 flexion moves the tip about mid2.
    g.d_angles[e0 + 3] =
        dot(d_joints[root + 3], cross(fk.world_axes[f][3], fk.skeleton.joints[root + 3] - p_mid2));

    // Bone lengths shift the bone's child and everything distal along the
    // bone direction.
    for (int b = 0; b < 4; ++b) {
      const Vec3d& u = fk.bone_directions[e0 + b];
      double acc = 0.0;
      for (int j = root + b; j <= root + 3; ++j) acc += dot(d_joints[j], u);
      g.d_lengths[e0 + b] = acc;
    }
  }
  return g;
}

// ---------------------------------------------------------------------------
// Inverse kinematics
// ---------------------------------------------------------------------------

namespace {

/// Horn's quaternion absolute orientation: rotation maximizing
/// sum_i dot(u_i, R v_i) for unit vector pairs.
Mat3d best_rotation(const std::vector<Vec3d>& u, const std::vector<Vec3d>& v) {
  double S[3][3] = {};
  for (size_t i = 0; i < u.size(); ++i)
    for (int a = 0; a < 3; ++a)
      for (int b = 0; b < 3; ++b) S[a][b] += u[i][a] * v[i][b];

  double K[4][4];
  K[0][0] = S[0][0] + S[1][1] + S[2][2];
  K[0][1] = K[1][0] = S[1][2] - S[2][1];
  K[0][2] = K[2][0] = S[2][0] - S[0][2];
  K[0][3] = K[3][0] = S[0][1] - S[1][0];
  K[1][1] = S[0][0] - S[1][1] - S[2][2];
  K[1][2] = K[2][1] = S[0][1] + S[1][0];
  K[1][3] = K[3][1] = S[2][0] + S[0][2];
  K[2][2] = -S[0][0] + S[1][1] - S[2][2];
  K[2][3] = K[3][2] = S[1][2] + S[2][1];
  K[3][3] = -S[0][0] - S[1][1] + S[2][2];

  // Shift to make the top eigenvalue dominant in magnitude, then power-iterate.
  double shift = 0.0;
  for (int a = 0; a < 4; ++a)
    for (int b = 0; b < 4; ++b) shift += std::abs(K[a][b]);
  double q[4] = {1.0, 0.01, 0.02, 0.003};
  for (int it = 0; it < 120; ++it) {
    double nq[4];
    for (int a = 0; a < 4; ++a) {
      nq[a] = shift * q[a];
      for (int b = 0; b < 4; ++b) nq[a] += K[a][b] * q[b];
    }
    double n = std::sqrt(nq[0] * nq[0] + nq[1] * nq[1] + nq[2] * nq[2] + nq[3] * nq[3]);
    if (n < 1e-300) break;
    for (int a = 0; a < 4; ++a) q[a] = nq[a] / n;
  }
  const double w = q[0], x = -q[1], y = -q[2], z = -q[3];
  return Mat3d::from_cols({1 - 2 * (y * y + z * z), 2 * (x * y + w * z), 2 * (x * z - w * y)},
                          {2 * (x * y - w * z), 1 - 2 * (x * x + z * z), 2 * (y * z + w * x)},
                          {2 * (x * z + w * y), 2 * (y * z - w * x), 1 - 2 * (x * x + y * y)});
}

constexpr double kMinBoneMm = 0.05;

/// Direct estimate: bone lengths from joint distances, global rotation from
/// the wrist->knuckle fan (Horn), angles extracted chain by chain. Exact for
/// targets produced by forward_kinematics with flexions inside (-pi/2, pi/2).
HandPose closed_form_estimate(const Skeleton& target) {
  HandPose p;
  p.side = target.side;
  p.global_translation = target.joints[0];

  const auto& topo = HandTopology::canonical();
  for (int e = 0; e < 20; ++e) {
    const Vec3d d = target.joints[topo.edges[e][1]] - target.joints[topo.edges[e][0]];
    p.bone_lengths[e] = std::max(norm(d), kMinBoneMm);
  }

  std::vector<Vec3d> obs, canon;
  for (int f = 0; f < kFingers; ++f) {
    const Vec3d d = target.joints[HandTopology::finger_root(f)] - target.joints[0];
    const double n = norm(d);
    if (n < 1e-6) continue;
    obs.push_back(d / n);
    canon.push_back(HandPose::canonical_finger_direction(f, target.side));
  }
  Mat3d rg = Mat3d::identity();
  if (obs.size() >= 2) rg = best_rotation(obs, canon);
  p.global_rotation = rotation_log(rg);

  for (int f = 0; f < kFingers; ++f) {
    const int root = HandTopology::finger_root(f);
    const int e0 = 4 * f;
    const Mat3d base = rg * finger_base_frame(f, target.side);

    auto local_dir = [&](const Mat3d& frame, int ja, int jb) -> Vec3d {
      const Vec3d d = target.joints[jb] - target.joints[ja];
      const double n = norm(d);
      if (n < 1e-9) return {0, 1, 0};
      return frame.transposed() * (d / n);
    };

    const Vec3d l1 = local_dir(base, root, root + 1);
    const double flex = std::asin(std::clamp(l1.z, -1.0, 1.0));
    double abd = 0.0;
    if (std::abs(std::cos(flex)) > 1e-6) abd = std::atan2(-l1.x, l1.y);
    p.joint_angles[e0 + 0] = flex;
    p.joint_angles[e0 + 1] = abd;

    const Mat3d f1 = base * rot_z(abd) * rot_x(flex);
    const Vec3d l2 = local_dir(f1, root + 1, root + 2);
    p.joint_angles[e0 + 2] = std::atan2(l2.z, l2.y);

    const Mat3d f2 = f1 * rot_x(p.joint_angles[e0 + 2]);
    const Vec3d l3 = local_dir(f2, root + 2, root + 3);
    p.joint_angles[e0 + 3] = std::atan2(l3.z, l3.y);
  }
  return p;
}

struct AdamState {
  std::vector<double> m, v;
  int t = 0;
  explicit AdamState(size_t n) : m(n, 0.0), v(n, 0.0) {}
  double step(size_t i, double grad, double lr) {
    constexpr double b1 = 0.9, b2 = 0.999, eps = 1e-8;
    m[i] = b1 * m[i] + (1 - b1) * grad;
    v[i] = b2 * v[i] + (1 - b2) * grad * grad;
    const double mh = m[i] / (1 - std::pow(b1, t));
    const double vh = v[i] / (1 - std::pow(b2, t));
    return -lr * mh / (std::sqrt(vh) + eps);
  }
};

/// One Adam descent run over angles + lengths + global placement.
/// Returns the best pose seen and its residual.
std::pair<HandPose, double> descend(const Skeleton& target, HandPose pose, int max_iters,
                                    double target_mm, int* iterations) {
  // Parameter layout: [0..2] translation, [3..5] rotation increment,
  // [6..25] angles, [26..45] lengths.
  AdamState adam(46);
  constexpr double kLrTrans = 1.0, kLrRot = 0.06, kLrAngle = 0.06, kLrLen = 0.6;

  Mat3d rg = rotation_exp(pose.global_rotation);
  HandPose best = pose;
  double best_res = std::numeric_limits<double>::infinity();

  for (int it = 0; it < max_iters; ++it) {
    pose.global_rotation = rotation_log(rg);
    const FkCache fk = forward_kinematics_cached(pose);

    double res = mpjpe(fk.skeleton, target);
    if (res < best_res) {
      best_res = res;
      best = pose;
    }
    if (res < target_mm) {
      if (iterations) *iterations += it + 1;
      return {best, best_res};
    }

    std::array<Vec3d, 21> d_joints;
    for (int j = 0; j < 21; ++j)
      d_joints[j] = (fk.skeleton.joints[j] - target.joints[j]) * (2.0 / 21.0);
    const PoseGrad g = chain_rule_to_pose(fk, d_joints);

    adam.t++;
    Vec3d delta_rot;
    for (int k = 0; k < 3; ++k) {
      pose.global_translation[k] += adam.step(k, g.d_translation[k], kLrTrans);
      delta_rot[k] = adam.step(3 + k, g.d_rotation[k], kLrRot);
    }
    rg = rotation_exp(delta_rot) * rg;
    for (int k = 0; k < 20; ++k) {
      pose.joint_angles[k] += adam.step(6 + k, g.d_angles[k], kLrAngle);
      pose.bone_lengths[k] =
          std::max(pose.bone_lengths[k] + adam.step(26 + k, g.d_lengths[k], kLrLen), kMinBoneMm);
    }
  }
  if (iterations) *iterations += max_iters;
  return {best, best_res};
}

}  // namespace

FitResult fit_pose(const Skeleton& target, const std::optional<HandPose>& init,
                   const FitOptions& options) {
  target.validate();

  FitResult result;
  result.residual_mm = std::numeric_limits<double>::infinity();
  int iterations = 0;

  std::mt19937_64 rng(options.seed);
  std::normal_distribution<double> perturb(0.0, 0.15);

  constexpr double kRestartThresholdMm = 1.0;
  const int total_attempts = 1 + std::max(options.restarts, 0);

  for (int attempt = 0; attempt < total_attempts; ++attempt) {
    HandPose start;
    if (attempt == 0) {
      if (init) {
        start = *init;
      } else {
        start = HandPose::rest(target.side);
        start.global_translation = target.joints[0];
      }
    } else if (attempt == 1) {
      start = closed_form_estimate(target);
    } else {
      start = closed_form_estimate(target);
      for (auto& a : start.joint_angles) a += perturb(rng);
      start.global_rotation += Vec3d{perturb(rng), perturb(rng), perturb(rng)};
    }

    auto [pose, res] = descend(target, start, options.max_iters, options.target_mm, &iterations);
    if (res < result.residual_mm) {
      result.residual_mm = res;
      result.pose = pose;
    }
    result.attempts = attempt + 1;
    if (result.residual_mm <= kRestartThresholdMm &&
        (attempt > 0 || result.residual_mm <= options.target_mm))
      break;
    if (result.residual_mm <= options.target_mm) break;
  }
  result.iterations = iterations;
  return result;
}

// ---------------------------------------------------------------------------
// Skeleton utilities
// ---------------------------------------------------------------------------

Vec3d flip_x(const Vec3d& p) { return {-p.x, p.y, p.z}; }

Skeleton flip_x(const Skeleton& s) {
  Skeleton out;
  out.side = s.side == Side::Right ? Side::Left : Side::Right;
  for (int j = 0; j < 21; ++j) out.joints[j] = flip_x(s.joints[j]);
  return out;
}

PointSet densify(const Skeleton& s, int k) {
  if (k < 0) throw InvalidInput("densify: k must be >= 0");
  PointSet ps;
  ps.provenance = k == 0 ? PointProvenance::Sparse21 : PointProvenance::Dense121;
  ps.points.reserve(21 + 20 * k);
  ps.origins.reserve(21 + 20 * k);
  for (int j = 0; j < 21; ++j) {
    ps.points.push_back(s.joints[j]);
    ps.origins.push_back({j, j, 0.0});
  }
  const auto& topo = HandTopology::canonical();
  for (int e = 0; e < 20; ++e) {
    const Vec3d& a = s.joints[topo.edges[e][0]];
    const Vec3d& b = s.joints[topo.edges[e][1]];
    for (int i = 1; i <= k; ++i) {
      const double t = static_cast<double>(i) / (k + 1);
      ps.points.push_back(lerp(a, b, t));
      ps.origins.push_back({topo.edges[e][0], topo.edges[e][1], t});
    }
  }
  return ps;
}

void rotate_hand_about_wrist(HandPose& pose, const Vec3d& unit_axis, double angle_rad) {
  const Mat3d r = axis_angle_matrix(unit_axis, angle_rad);
  pose.global_rotation = rotation_log(r * rotation_exp(pose.global_rotation));
}

double mpjpe(const Skeleton& a, const Skeleton& b) {
  if (a.joints.size() != b.joints.size())
    throw InvalidInput("mpjpe: joint count mismatch");
  double acc = 0.0;
  for (int j = 0; j < 21; ++j) acc += norm(a.joints[j] - b.joints[j]);
  return acc / 21.0;
}

}  // namespace handocc
