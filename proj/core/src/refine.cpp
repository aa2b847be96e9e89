// Copyright 2026 The handocc Authors.
// Distributed under the Apache License, Version 2.0.
// See the accompanying LICENSE file or http://www.apache.org/licenses/LICENSE-2.0

#include "handocc/refine.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "handocc/error.hpp"
#include "handocc/parallel.hpp"

namespace handocc {

PairPose PairPose::make(HandPose right, HandPose left, const Vec3d& relative_offset) {
  PairPose p;
  p.relative_offset = relative_offset + left.global_translation;
  left.global_translation = {0, 0, 0};
  p.right = std::move(right);
  p.left = std::move(left);
  return p;
}

std::pair<Skeleton, Skeleton> PairPose::skeletons() const {
  HandPose effective_left = left;
  effective_left.global_translation = right.global_translation + relative_offset;
  return {forward_kinematics(right), forward_kinematics(effective_left)};
}

bool bbox_prefilter(const Skeleton& skel_right, const Skeleton& skel_left, double margin_mm) {
  return skel_right.bounding_box().padded(margin_mm).overlaps(skel_left.bounding_box().padded(margin_mm));
}

namespace {

/// Optimization state: rotations as matrices (updated multiplicatively),
/// everything else inside the poses. Bone lengths are never touched.
struct State {
  HandPose right, left;  // left.global_translation stays zero
  Vec3d offset;
  Mat3d rot_right, rot_left;

  PairPose to_pair() const {
    PairPose p;
    p.right = right;
    p.left = left;
    p.right.global_rotation = rotation_log(rot_right);
    p.left.global_rotation = rotation_log(rot_left);
    p.relative_offset = offset;
    return p;
  }
};

constexpr int kNumParams = 52;  // 40 angles + 2x3 rotation + 3 translation + 3 offset

struct Evaluation {
  double objective = 0.0;
  double data_term = 0.0;
  double isect_term = 0.0;  // weighted
  std::array<double, kNumParams> grad{};
  std::array<double, kNumParams> precond{};
};

// Parameter layout: [0..19] right angles, [20..39] left angles,
// [40..42] right rotation increment, [43..45] left rotation increment,
// [46..48] right translation, [49..51] relative offset.

Evaluation evaluate(const State& st, const std::array<Vec3d, 21>& anchor_r,
                    const std::array<Vec3d, 21>& anchor_l, const OccupancyField& field,
                    const RefineConfig& cfg, bool want_grad) {
  Evaluation ev;

  PairPose pair = st.to_pair();
  HandPose eff_left = pair.left;
  eff_left.global_translation = pair.right.global_translation + pair.relative_offset;
  const FkCache fk_r = forward_kinematics_cached(pair.right);
  const FkCache fk_l = forward_kinematics_cached(eff_left);

  for (int j = 0; j < 21; ++j) {
    ev.data_term += squared_norm(fk_r.skeleton.joints[j] - anchor_r[j]);
    ev.data_term += squared_norm(fk_l.skeleton.joints[j] - anchor_l[j]);
  }
  ev.data_term *= cfg.data_weight;

  const double w = cfg.loss_cfg.weight;
  LossResult loss;
  if (w != 0.0) loss = intersection_loss(fk_r.skeleton, fk_l.skeleton, field, cfg.loss_cfg);
  ev.isect_term = w * loss.value;
  ev.objective = ev.data_term + ev.isect_term;
  if (!want_grad) return ev;

  std::array<Vec3d, 21> d_r{}, d_l{};
  for (int j = 0; j < 21; ++j) {
    d_r[j] = (fk_r.skeleton.joints[j] - anchor_r[j]) * (2.0 * cfg.data_weight);
    d_l[j] = (fk_l.skeleton.joints[j] - anchor_l[j]) * (2.0 * cfg.data_weight);
    if (w != 0.0) {
      d_r[j] += loss.grad_right[j] * w;
      d_l[j] += loss.grad_left[j] * w;
    }
  }

  const PoseGrad g_r = chain_rule_to_pose(fk_r, d_r);
  const PoseGrad g_l = chain_rule_to_pose(fk_l, d_l);
  for (int k = 0; k < 20; ++k) {
    ev.grad[k] = g_r.d_angles[k];
    ev.grad[20 + k] = g_l.d_angles[k];
  }
  for (int c = 0; c < 3; ++c) {
    ev.grad[40 + c] = g_r.d_rotation[c];
    ev.grad[43 + c] = g_l.d_rotation[c];
    // The left wrist rides on the right translation, so both gradients land there.
    ev.grad[46 + c] = g_r.d_translation[c] + g_l.d_translation[c];
    ev.grad[49 + c] = g_l.d_translation[c];
  }

  // Diagonal Gauss-Newton preconditioner of the data term: units resolve so
  // steps are millimeter-scale regardless of the tiny absolute weights.
  auto angle_curvature = [&](const FkCache& fk, int finger, int axis_idx, int first_distal) {
    const Vec3d& axis = fk.world_axes[finger][axis_idx];
    const Vec3d anchor = fk.skeleton.joints[first_distal - 1];
    double acc = 0.0;
    const int root = HandTopology::finger_root(finger);
    for (int j = first_distal; j <= root + 3; ++j)
      acc += squared_norm(cross(axis, fk.skeleton.joints[j] - anchor));
    return acc;
  };
  const double floor = 1e-4;
  for (int f = 0; f < 5; ++f) {
    const int root = HandTopology::finger_root(f);
    for (int hand = 0; hand < 2; ++hand) {
      const FkCache& fk = hand == 0 ? fk_r : fk_l;
      const int base = hand == 0 ? 0 : 20;
      ev.precond[base + 4 * f + 0] = angle_curvature(fk, f, 0, root + 1);
      ev.precond[base + 4 * f + 1] = angle_curvature(fk, f, 1, root + 1);
      ev.precond[base + 4 * f + 2] = angle_curvature(fk, f, 2, root + 2);
      ev.precond[base + 4 * f + 3] = angle_curvature(fk, f, 3, root + 3);
    }
  }
  for (int hand = 0; hand < 2; ++hand) {
    const FkCache& fk = hand == 0 ? fk_r : fk_l;
    double rot_acc[3] = {0, 0, 0};
    for (int j = 0; j < 21; ++j) {
      const Vec3d r = fk.skeleton.joints[j] - fk.skeleton.joints[0];
      const Vec3d e0{1, 0, 0}, e1{0, 1, 0}, e2{0, 0, 1};
      rot_acc[0] += squared_norm(cross(e0, r));
      rot_acc[1] += squared_norm(cross(e1, r));
      rot_acc[2] += squared_norm(cross(e2, r));
    }
    for (int c = 0; c < 3; ++c) ev.precond[(hand == 0 ? 40 : 43) + c] = rot_acc[c];
  }
  for (int c = 0; c < 3; ++c) {
    ev.precond[46 + c] = 42.0;  // both hands ride the right translation
    ev.precond[49 + c] = 21.0;
  }
  const double scale = 2.0 * cfg.data_weight;
  for (int k = 0; k < kNumParams; ++k) ev.precond[k] = std::max(ev.precond[k] * scale, scale * floor);
  return ev;
}

State apply_step(const State& st, const std::array<double, kNumParams>& dir, double eta) {
  State next = st;
  for (int k = 0; k < 20; ++k) {
    next.right.joint_angles[k] += eta * dir[k];
    next.left.joint_angles[k] += eta * dir[20 + k];
  }
  const Vec3d dr{eta * dir[40], eta * dir[41], eta * dir[42]};
  const Vec3d dl{eta * dir[43], eta * dir[44], eta * dir[45]};
  next.rot_right = rotation_exp(dr) * st.rot_right;
  next.rot_left = rotation_exp(dl) * st.rot_left;
  for (int c = 0; c < 3; ++c) {
    next.right.global_translation[c] += eta * dir[46 + c];
    next.offset[c] += eta * dir[49 + c];
  }
  return next;
}

}  // namespace

std::pair<PairPose, RefineTrace> refine_pair(const PairPose& init, const OccupancyField& field,
                                             const RefineConfig& cfg) {
  init.right.validate();
  init.left.validate();
  if (cfg.max_iters < 1) throw InvalidInput("refine_pair: max_iters must be >= 1");

  RefineTrace trace;
  if (cfg.loss_cfg.weight == 0.0) return {init, trace};

  const auto [skel_r0, skel_l0] = init.skeletons();
  if (!bbox_prefilter(skel_r0, skel_l0, cfg.prefilter_margin)) {
    trace.prefilter_skipped = true;
    return {init, trace};
  }

  State st;
  st.right = init.right;
  st.left = init.left;
  st.left.global_translation = {0, 0, 0};
  st.offset = init.relative_offset;
  st.rot_right = rotation_exp(init.right.global_rotation);
  st.rot_left = rotation_exp(init.left.global_rotation);

  const std::array<Vec3d, 21> anchor_r = skel_r0.joints;
  const std::array<Vec3d, 21> anchor_l = skel_l0.joints;

  Evaluation ev = evaluate(st, anchor_r, anchor_l, field, cfg, true);
  if (!std::isfinite(ev.objective)) throw NumericalError("refine_pair: non-finite objective at start");

  double eta = 1.0;
  int stall = 0;
  for (int iter = 0; iter < cfg.max_iters; ++iter) {
    trace.entries.push_back({iter, ev.data_term, ev.isect_term});

    std::array<double, kNumParams> dir;
    for (int k = 0; k < kNumParams; ++k) dir[k] = -ev.grad[k] / ev.precond[k];

    bool accepted = false;
    for (int halving = 0; halving < 30; ++halving) {
      const State trial = apply_step(st, dir, eta);
      const Evaluation trial_ev = evaluate(trial, anchor_r, anchor_l, field, cfg, true);
      if (!std::isfinite(trial_ev.objective))
        throw NumericalError("refine_pair: non-finite objective at iteration " + std::to_string(iter));
      if (trial_ev.objective <= ev.objective) {
        const double decrease = ev.objective - trial_ev.objective;
        st = trial;
        ev = trial_ev;
        eta = std::min(eta * 1.3, 8.0);
        accepted = true;
        stall = decrease <= cfg.tol * std::max(ev.objective, 1e-300) ? stall + 1 : 0;
        break;
      }
      eta *= 0.5;
      trace.halvings++;
    }
    if (!accepted || stall >= 3 || eta < 1e-12) break;
  }
  return {st.to_pair(), trace};
}

// ---------------------------------------------------------------------------
// Batch refinement and studies
// ---------------------------------------------------------------------------

namespace {

/// Occupancy-detected intersections: dense points of each hand probed against
/// the field conditioned on the other hand. Left-conditioned probes use the
/// mirror identity (flip both point and conditioning skeleton) so learned
/// right-hand fields stay in distribution.
long occupancy_count(const Skeleton& skel_r, const Skeleton& skel_l, const OccupancyField& field) {
  long count = 0;
  {
    const PointSet pts = densify(skel_l, 5);
    std::vector<double> probs(pts.points.size());
    field.eval_batch(pts.points.data(), static_cast<int>(pts.points.size()), skel_r, probs.data());
    for (double p : probs) count += p > 0.5;
  }
  {
    const Skeleton flipped_l = flip_x(skel_l);
    const PointSet pts = densify(flip_x(skel_r), 5);
    std::vector<double> probs(pts.points.size());
    field.eval_batch(pts.points.data(), static_cast<int>(pts.points.size()), flipped_l, probs.data());
    for (double p : probs) count += p > 0.5;
  }
  return count;
}

long raycast_count(const Skeleton& skel_r, const Skeleton& skel_l, int grid_n) {
  return pair_intersection_count(generate_mesh(skel_r, MeshVariant::Plain),
                                 generate_mesh(skel_l, MeshVariant::Plain), grid_n);
}

}  // namespace

double BatchReport::raycast_decrease_percent() const {
  return raycast_before == 0 ? 0.0
                             : 100.0 * static_cast<double>(raycast_before - raycast_after) / raycast_before;
}

double BatchReport::occupancy_decrease_percent() const {
  return occupancy_before == 0
             ? 0.0
             : 100.0 * static_cast<double>(occupancy_before - occupancy_after) / occupancy_before;
}

BatchReport batch_refine(const std::vector<PairPose>& pairs, const OccupancyField& field,
                         const RefineConfig& cfg, int grid_n) {
  if (pairs.empty()) throw InvalidInput("batch_refine: empty pair list");

  BatchReport report;
  report.pairs.resize(pairs.size());

  parallel_for(static_cast<std::int64_t>(pairs.size()), [&](std::int64_t lo, std::int64_t hi) {
    for (std::int64_t i = lo; i < hi; ++i) {
      PairMetrics& m = report.pairs[i];
      const auto [sr0, sl0] = pairs[i].skeletons();
      m.raycast_before = raycast_count(sr0, sl0, grid_n);
      m.occupancy_before = occupancy_count(sr0, sl0, field);

      auto [refined, trace] = refine_pair(pairs[i], field, cfg);
      m.refined = !trace.prefilter_skipped && cfg.loss_cfg.weight != 0.0 && !trace.entries.empty();

      const auto [sr1, sl1] = refined.skeletons();
      m.raycast_after = raycast_count(sr1, sl1, grid_n);
      m.occupancy_after = occupancy_count(sr1, sl1, field);
      m.mpjpe_drift_right = mpjpe(sr0, sr1);
      m.mpjpe_drift_left = mpjpe(sl0, sl1);
    }
  });

  double drift = 0.0;
  for (const auto& m : report.pairs) {
    report.raycast_before += m.raycast_before;
    report.raycast_after += m.raycast_after;
    report.occupancy_before += m.occupancy_before;
    report.occupancy_after += m.occupancy_after;
    report.refined_pairs += m.refined;
    drift += 0.5 * (m.mpjpe_drift_right + m.mpjpe_drift_left);
  }
  report.mean_mpjpe_drift = drift / static_cast<double>(pairs.size());
  return report;
}

NoiseCurves noise_study(const std::vector<PairPose>& ground_truth,
                        const std::vector<double>& noise_probs, const OccupancyField& field,
                        const RefineConfig& cfg, int grid_n) {
  if (ground_truth.empty()) throw InvalidInput("noise_study: empty pair list");
  for (double q : noise_probs)
    if (!(q >= 0.0 && q <= 1.0)) throw InvalidInput("noise_study: probabilities must lie in [0,1]");

  // Shared perturbation draws: one (u, axis, angle) per hand per pair, so the
  // set of perturbed hands grows monotonically with the probability.
  struct Draw {
    double u;
    Vec3d axis;
    double angle;
  };
  std::mt19937_64 rng(cfg.seed);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  std::normal_distribution<double> ang(0.0, 5.0 * M_PI / 180.0);
  std::vector<std::array<Draw, 2>> draws(ground_truth.size());
  for (auto& d : draws)
    for (int h = 0; h < 2; ++h) {
      const double z = 2.0 * u01(rng) - 1.0;
      const double phi = 2.0 * M_PI * u01(rng);
      const double r = std::sqrt(std::max(0.0, 1.0 - z * z));
      d[h] = {u01(rng), Vec3d{r * std::cos(phi), r * std::sin(phi), z}, ang(rng)};
    }

  NoiseCurves curves;
  for (double q : noise_probs) {
    std::vector<double> mp_with(ground_truth.size()), mp_without(ground_truth.size());
    std::vector<long> is_with(ground_truth.size()), is_without(ground_truth.size());

    parallel_for(static_cast<std::int64_t>(ground_truth.size()), [&](std::int64_t lo, std::int64_t hi) {
      for (std::int64_t i = lo; i < hi; ++i) {
        PairPose noisy = ground_truth[i];
        if (draws[i][0].u < q) rotate_hand_about_wrist(noisy.right, draws[i][0].axis, draws[i][0].angle);
        if (draws[i][1].u < q) rotate_hand_about_wrist(noisy.left, draws[i][1].axis, draws[i][1].angle);

        const auto [gt_r, gt_l] = ground_truth[i].skeletons();
        const auto [n_r, n_l] = noisy.skeletons();

        // Without the intersection term the data anchor keeps the pose at the
        // noisy initialization.
        mp_without[i] = 0.5 * (mpjpe(n_r, gt_r) + mpjpe(n_l, gt_l));
        is_without[i] = raycast_count(n_r, n_l, grid_n);

        auto [refined, trace] = refine_pair(noisy, field, cfg);
        const auto [r_r, r_l] = refined.skeletons();
        mp_with[i] = 0.5 * (mpjpe(r_r, gt_r) + mpjpe(r_l, gt_l));
        is_with[i] = raycast_count(r_r, r_l, grid_n);
      }
    });

    double mw = 0, mo = 0;
    long iw = 0, io = 0;
    for (size_t i = 0; i < ground_truth.size(); ++i) {
      mw += mp_with[i];
      mo += mp_without[i];
      iw += is_with[i];
      io += is_without[i];
    }
    curves.noise_prob.push_back(q);
    curves.mpjpe_with.push_back(mw / ground_truth.size());
    curves.mpjpe_without.push_back(mo / ground_truth.size());
    curves.isect_with.push_back(iw);
    curves.isect_without.push_back(io);
  }
  return curves;
}

}  // namespace handocc
