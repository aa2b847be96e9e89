// Copyright 2026 The handocc Authors.
// Distributed under the Apache License, Version 2.0.
// See the accompanying LICENSE file or http://www.apache.org/licenses/LICENSE-2.0

#pragma once

#include <cstdint>
#include <vector>

#include "handocc/occupancy.hpp"

namespace handocc {

enum class PointSetKind { Sparse21, Dense, MeshSurface };

const char* to_string(PointSetKind k);

/// Configuration of the two-hand intersection penalty: which point set of the
/// tested hand to probe, whether to repeat the test with both hands mirrored
/// (the flip term), whether to zero out probabilities at or below 50%, and
/// the weight consumers multiply the raw value by.
struct LossConfig {
  PointSetKind point_set = PointSetKind::Sparse21;
  int densify_k = 5;  // Dense uses 21 + 20k points (121 for the canonical k=5)
  bool both_hands = false;
  bool truncated = false;
  double weight = 1e-6;

  /// Default weight per point set: 1e-6 for Sparse/Dense, 1e-8 for
  /// MeshSurface (heavier point sets get smaller weights).
  static LossConfig with_point_set(PointSetKind k);
};

/// Raw (unweighted) loss value with per-point probabilities and gradients
/// with respect to both hands' 21 joints. The flip term's gradients are
/// folded into the same arrays.
struct LossResult {
  double value = 0.0;
  std::vector<double> probabilities;  // direct term first, then flip term
  int direct_count = 0;
  std::array<Vec3d, 21> grad_left{};
  std::array<Vec3d, 21> grad_right{};
};

/// Sum over the tested point set of squared occupancy probabilities of the
/// left hand's points under the field conditioned on the right hand, plus,
/// when cfg.both_hands, the same with both hands mirrored along x: the
/// mirrored right-hand points tested under the field conditioned on the
/// mirrored left hand. The truncated kernel zeroes terms with probability
/// <= 0.5 along with their gradients.
LossResult intersection_loss(const Skeleton& skel_right, const Skeleton& skel_left,
                             const OccupancyField& field, const LossConfig& cfg);

/// p -> p if p > 0.5 else 0, elementwise.
std::vector<double> truncate_kernel(const std::vector<double>& probabilities);

/// Compares analytic intersection_loss gradients against central finite
/// differences (h = 1e-4 mm) over all 42 joint coordinates of a random
/// near-overlapping hand pair. Returns the maximum relative error
/// (|a - fd| / max(|a|, |fd|, 1e-8)).
double loss_gradcheck(const LossConfig& cfg, const OccupancyField& field, std::uint64_t seed);

}  // namespace handocc
