// Copyright 2026 The handocc Authors.
// Distributed under the Apache License, Version 2.0.
// See the accompanying LICENSE file or http://www.apache.org/licenses/LICENSE-2.0

#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "handocc/geometry.hpp"

namespace handocc {

enum class Side { Right, Left };

inline const char* to_string(Side s) { return s == Side::Right ? "right" : "left"; }

/// 21-joint hand topology. Joint 0 is the wrist; fingers follow in the order
/// thumb, index, middle, ring, pinky with 4 joints each, root to tip.
/// Edge e (e = 0..19) connects parent(e+1) -> joint e+1, so edge indices are
/// finger-major as well: edges 4f..4f+3 belong to finger f.
struct HandTopology {
  static constexpr int kNumJoints = 21;
  static constexpr int kNumEdges = 20;
  static constexpr int kNumFingers = 5;

  std::array<int, kNumJoints> parent;                    // parent[0] == -1
  std::array<std::array<int, 2>, kNumEdges> edges;       // (parent, child)
  std::array<std::array<int, 4>, kNumFingers> finger_chains;

  static const HandTopology& canonical();

  static constexpr int finger_root(int finger) { return 1 + 4 * finger; }
  static const char* joint_name(int joint);
};

/// Angular + bone-length + global-placement parameterization of one hand.
///
/// joint_angles holds 4 values per finger, finger-major:
///   [root flexion, root abduction, middle-1 flexion, middle-2 flexion]
/// Flexion rotates about the local x axis (curl toward the palm normal),
/// abduction about the local z axis (spread in the palm plane). At the root
/// joint abduction is applied before flexion. Radians throughout.
///
/// bone_lengths holds one positive length (mm) per topology edge.
struct HandPose {
  Side side = Side::Right;
  Vec3d global_rotation{0, 0, 0};     // axis-angle, radians
  Vec3d global_translation{0, 0, 0};  // mm
  std::array<double, 20> joint_angles{};
  std::array<double, 20> bone_lengths{};

  /// Throws InvalidInput if a bone length is non-positive or any value is
  /// non-finite.
  void validate() const;

  /// All angles zero, canonical bone lengths: fingers extended along +y,
  /// fanned in the xy-plane, palm normal +z, wrist at the origin.
  static HandPose rest(Side side = Side::Right);

  /// Canonical bone lengths (mm), edge-major.
  static const std::array<double, 20>& canonical_bone_lengths();
  /// Unit fan direction of each finger chain at rest, for the given side.
  static Vec3d canonical_finger_direction(int finger, Side side);
};

/// 21 ordered 3D joints in millimeters; the universal exchange format.
struct Skeleton {
  Side side = Side::Right;
  std::array<Vec3d, 21> joints{};

  void validate() const;  // throws InvalidInput on non-finite coordinates
  Aabb bounding_box() const;
};

enum class PointProvenance { Sparse21, Dense121, MeshSurface };

/// A batch of 3D points with a record of where each point came from, so loss
/// gradients can be chained back to skeleton joints. For Sparse21 points,
/// joint_a == joint_b; for densified points the point is
/// lerp(joints[a], joints[b], t).
struct PointSet {
  struct Origin {
    int joint_a = 0;
    int joint_b = 0;
    double t = 0.0;
  };
  std::vector<Vec3d> points;
  std::vector<Origin> origins;  // empty for MeshSurface provenance
  PointProvenance provenance = PointProvenance::Sparse21;
};

// ---------------------------------------------------------------------------
// Forward kinematics
// ---------------------------------------------------------------------------

Skeleton forward_kinematics(const HandPose& pose);

/// FK byproducts needed by the geometric Jacobian: world-frame rotation axes
/// and the joint each axis is anchored at.
struct FkCache {
  Skeleton skeleton;
  Mat3d global_rotation;
  // Per finger: world axes of the articulated DoFs, in the same order as
  // joint_angles (root flexion, root abduction, mid1 flexion, mid2 flexion).
  std::array<std::array<Vec3d, 4>, 5> world_axes;
  // World-frame unit direction of each bone (edge-major).
  std::array<Vec3d, 20> bone_directions;
};

FkCache forward_kinematics_cached(const HandPose& pose);

/// Gradient of a scalar objective with respect to pose parameters, produced
/// by chaining per-joint position gradients through the FK structure. The
/// rotation component lives in the local-increment chart at the current
/// global rotation (apply as R <- exp(delta) * R).
struct PoseGrad {
  Vec3d d_translation{0, 0, 0};
  Vec3d d_rotation{0, 0, 0};
  std::array<double, 20> d_angles{};
  std::array<double, 20> d_lengths{};
};

PoseGrad chain_rule_to_pose(const FkCache& fk, const std::array<Vec3d, 21>& d_joints);

// ---------------------------------------------------------------------------
// Inverse kinematics
// ---------------------------------------------------------------------------

struct FitOptions {
  int max_iters = 400;
  int restarts = 3;        // extra attempts when residual stays above 1 mm
  double target_mm = 1e-4; // early stop once MPJPE falls below this
  std::uint64_t seed = 42;
};

struct FitResult {
  HandPose pose;
  double residual_mm = 0.0;
  int iterations = 0;
  int attempts = 1;
};

/// Fits a HandPose to a target skeleton by Adam-style gradient descent on
/// angles, bone lengths and global placement. Starts from the rest pose (or
/// `init` when given) and restarts from a closed-form estimate if the
/// residual stays above 1 mm. Deterministic for a fixed seed.
FitResult fit_pose(const Skeleton& target, const std::optional<HandPose>& init = std::nullopt,
                   const FitOptions& options = {});

// ---------------------------------------------------------------------------
// Skeleton utilities
// ---------------------------------------------------------------------------

/// Mirror along the x axis: negates x coordinates and swaps the side label.
Skeleton flip_x(const Skeleton& s);
Vec3d flip_x(const Vec3d& p);

/// Joints plus k interior interpolation points per topology edge
/// (at fractions i/(k+1), endpoints excluded): 21 + 20k points.
PointSet densify(const Skeleton& s, int k);

/// Mean per-joint position error in mm. Throws InvalidInput on size mismatch
/// (sizes are fixed here, the guard exists for the documented contract).
double mpjpe(const Skeleton& a, const Skeleton& b);

/// Composes a rotation about the wrist onto the pose's global rotation; the
/// wrist itself does not move.
void rotate_hand_about_wrist(HandPose& pose, const Vec3d& unit_axis, double angle_rad);

}  // namespace handocc
