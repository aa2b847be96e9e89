// Copyright 2026 The handocc Authors.
// Distributed under the Apache License, Version 2.0.
// See the accompanying LICENSE file or http://www.apache.org/licenses/LICENSE-2.0

#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "handocc/loss.hpp"

namespace handocc {

/// Two interacting hands: a right and a left pose plus the left-wrist
/// position relative to the right wrist. The left pose's own global
/// translation is folded into relative_offset on construction and then
/// ignored; skeletons() places the left wrist at right wrist + offset.
struct PairPose {
  HandPose right;
  HandPose left;
  Vec3d relative_offset{0, 0, 0};

  static PairPose make(HandPose right, HandPose left, const Vec3d& relative_offset);
  std::pair<Skeleton, Skeleton> skeletons() const;  // (right, left)
};

struct RefineConfig {
  // Dense points resolve the most intersections for a given drift budget, so
  // they are the default probe set.
  LossConfig loss_cfg = LossConfig::with_point_set(PointSetKind::Dense);
  double data_weight = 1e-9;  // anchor weight on squared joint displacement (per mm^2)
  int max_iters = 200;
  double tol = 1e-9;          // relative objective decrease convergence threshold
  double prefilter_margin = 25.0;  // mm, bounding-box gate
  std::uint64_t seed = 42;
};

/// True iff the axis-aligned bounding boxes of the two skeletons, each padded
/// by margin, overlap (closed intervals: touching boxes overlap).
bool bbox_prefilter(const Skeleton& skel_right, const Skeleton& skel_left, double margin_mm);

struct RefineTrace {
  struct Entry {
    int iteration;
    double data_term;
    double intersection_term;  // weighted
  };
  std::vector<Entry> entries;
  bool prefilter_skipped = false;
  int halvings = 0;
};

/// Minimizes data_weight * sum ||J - J_init||^2 + weight * intersection_loss
/// over joint angles, global placements and the relative offset (bone lengths
/// frozen) by diagonally preconditioned gradient descent with step halving on
/// objective increase. Accepted steps never increase the objective. With a
/// zero loss weight, or when the prefilter rejects the pair, the input is
/// returned unchanged. Throws NumericalError if the objective becomes NaN.
std::pair<PairPose, RefineTrace> refine_pair(const PairPose& init, const OccupancyField& field,
                                             const RefineConfig& cfg);

struct PairMetrics {
  long raycast_before = 0, raycast_after = 0;
  long occupancy_before = 0, occupancy_after = 0;
  double mpjpe_drift_right = 0.0, mpjpe_drift_left = 0.0;
  bool refined = false;
};

struct BatchReport {
  std::vector<PairMetrics> pairs;
  long raycast_before = 0, raycast_after = 0;
  long occupancy_before = 0, occupancy_after = 0;
  double mean_mpjpe_drift = 0.0;
  int refined_pairs = 0;

  double raycast_decrease_percent() const;
  double occupancy_decrease_percent() const;
};

/// Refines every pair (prefiltered) in parallel and aggregates ray-cast and
/// occupancy-detected intersection counts before/after. Occupancy counts
/// probe the dense point sets of both hands against the other hand's field.
BatchReport batch_refine(const std::vector<PairPose>& pairs, const OccupancyField& field,
                         const RefineConfig& cfg, int grid_n = 50);

struct NoiseCurves {
  std::vector<double> noise_prob;
  std::vector<double> mpjpe_with, mpjpe_without;      // mean mm to ground truth
  std::vector<long> isect_with, isect_without;        // total ray-cast counts
};

/// Perturbs each ground-truth pair (whole-hand rotation about the wrist,
/// angle ~ N(0, 5 deg), applied per hand with the given probability), then
/// refines with and without the intersection term and records MPJPE to
/// ground truth plus ray-cast intersection counts. Perturbation draws are
/// shared across probabilities so the curves are coupled.
NoiseCurves noise_study(const std::vector<PairPose>& ground_truth,
                        const std::vector<double>& noise_probs, const OccupancyField& field,
                        const RefineConfig& cfg, int grid_n = 40);

}  // namespace handocc
