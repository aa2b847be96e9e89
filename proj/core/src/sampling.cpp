// Copyright 2026 The handocc Authors.
// Distributed under the Apache License, Version 2.0.
// See the accompanying LICENSE file or http://www.apache.org/licenses/LICENSE-2.0

#include "handocc/sampling.hpp"

#include "handocc/error.hpp"

namespace handocc {

namespace {

double uniform(std::mt19937_64& rng, double lo, double hi) {
  std::uniform_real_distribution<double> d(lo, hi);
  return d(rng);
}

Vec3d random_unit(std::mt19937_64& rng) {
  const double z = uniform(rng, -1.0, 1.0);
  const double phi = uniform(rng, 0.0, 2.0 * M_PI);
  const double r = std::sqrt(std::max(0.0, 1.0 - z * z));
  return {r * std::cos(phi), r * std::sin(phi), z};
}

}  // namespace

HandPose random_articulation(std::mt19937_64& rng, Side side) {
  HandPose p = HandPose::rest(side);
  for (int f = 0; f < 5; ++f) {
    p.joint_angles[4 * f + 0] = uniform(rng, -0.25, 1.40);  // root flexion
    p.joint_angles[4 * f + 1] = uniform(rng, -0.28, 0.28);  // root abduction
    p.joint_angles[4 * f + 2] = uniform(rng, -0.10, 1.50);
    p.joint_angles[4 * f + 3] = uniform(rng, -0.10, 1.50);
  }
  for (int e = 0; e < 20; ++e) p.bone_lengths[e] *= uniform(rng, 0.8, 1.2);
  return p;
}

HandPose random_valid_pose(std::mt19937_64& rng, Side side) {
  HandPose p = random_articulation(rng, side);
  p.global_rotation = random_unit(rng) * uniform(rng, -M_PI, M_PI);
  p.global_translation = {uniform(rng, -100, 100), uniform(rng, -100, 100), uniform(rng, -100, 100)};
  return p;
}

namespace {

/// Facing configuration: both hands' fingers up, palms toward each other,
/// left hand offset along +z. The z offset is then slid to reach the desired
/// ray-cast contact state.
struct FacingPair {
  HandPose right, left;
  Vec3d lateral;  // x/y jitter of the left hand
};

FacingPair facing_pair(std::mt19937_64& rng) {
  FacingPair fp;
  fp.right = random_articulation(rng, Side::Right);
  fp.left = random_articulation(rng, Side::Left);
  // Palm of the left hand turned toward the right palm, with some wobble.
  const double yaw = M_PI + uniform(rng, -0.45, 0.45);
  const Mat3d r = axis_angle_matrix({0, 1, 0}, yaw) *
                  axis_angle_matrix(normalized(Vec3d{1, 0, 0}), uniform(rng, -0.3, 0.3));
  fp.left.global_rotation = rotation_log(r);
  fp.lateral = {uniform(rng, -18.0, 18.0), uniform(rng, -12.0, 28.0), 0.0};
  return fp;
}

long count_at(const FacingPair& fp, double z) {
  PairPose pair = PairPose::make(fp.right, fp.left, fp.lateral + Vec3d{0, 0, z});
  auto [sr, sl] = pair.skeletons();
  return pair_intersection_count(generate_mesh(sr, MeshVariant::Plain),
                                 generate_mesh(sl, MeshVariant::Plain), 40);
}

}  // namespace

PairPose make_interacting_pair(std::mt19937_64& rng) {
  for (int attempt = 0; attempt < 16; ++attempt) {
    const FacingPair fp = facing_pair(rng);
    double z_hi = 46.0;
    while (count_at(fp, z_hi) > 0 && z_hi < 220.0) z_hi += 14.0;
    if (count_at(fp, z_hi) > 0) continue;
    double z_lo = z_hi;
    bool touched = false;
    for (double z = z_hi - 6.0; z > 2.0; z -= 6.0) {
      if (count_at(fp, z) > 0) {
        z_lo = z;
        touched = true;
        break;
      }
      z_hi = z;
    }
    double gap_z = z_hi;
    if (touched) {
      double lo = z_lo, hi = z_hi;
      for (int it = 0; it < 8; ++it) {
        const double mid = 0.5 * (lo + hi);
        (count_at(fp, mid) > 0 ? lo : hi) = mid;
      }
      gap_z = hi + 2.5;
    }
    if (count_at(fp, gap_z) == 0)
      return PairPose::make(fp.right, fp.left, fp.lateral + Vec3d{0, 0, gap_z});
  }
  throw NumericalError("make_interacting_pair: failed to find a contact-free facing configuration");
}

PairPose make_intersecting_pair(std::mt19937_64& rng, long min_count) {
  for (int attempt = 0; attempt < 16; ++attempt) {
    const FacingPair fp = facing_pair(rng);
    // Find a separated offset, then slide inward until the ray-cast count
    // reaches the target (shallow-to-moderate penetration).
    double z_hi = 46.0;
    while (count_at(fp, z_hi) > 0 && z_hi < 220.0) z_hi += 14.0;
    if (count_at(fp, z_hi) > 0) continue;
    bool found = false;
    double z_found = 0.0;
    for (double z = z_hi - 3.0; z > -30.0; z -= 3.0) {
      const long c = count_at(fp, z);
      if (c >= min_count) {
        z_found = z;
        found = true;
        break;
      }
    }
    if (found) return PairPose::make(fp.right, fp.left, fp.lateral + Vec3d{0, 0, z_found});
  }
  throw NumericalError("make_intersecting_pair: failed to construct an intersecting configuration");
}

}  // namespace handocc
