// Copyright 2026 The handocc Authors.
// Distributed under the Apache License, Version 2.0.
// See the accompanying LICENSE file or http://www.apache.org/licenses/LICENSE-2.0

#include "handocc/loss.hpp"

#include <random>

#include "handocc/error.hpp"
#include "handocc/sampling.hpp"

namespace handocc {

const char* to_string(PointSetKind k) {
  switch (k) {
    case PointSetKind::Sparse21:
      return "sparse";
    case PointSetKind::Dense:
      return "dense";
    default:
      return "mesh";
  }
}

LossConfig LossConfig::with_point_set(PointSetKind k) {
  LossConfig cfg;
  cfg.point_set = k;
  cfg.weight = k == PointSetKind::MeshSurface ? 1e-8 : 1e-6;
  return cfg;
}

namespace {

struct TermPoints {
  std::vector<Vec3d> points;
  std::vector<PointSet::Origin> origins;          // Sparse/Dense
  std::vector<std::array<double, 189>> jacobian;  // MeshSurface, 3x63 per point
  bool from_mesh = false;
};

TermPoints build_points(const Skeleton& s, const LossConfig& cfg) {
  TermPoints tp;
  switch (cfg.point_set) {
    case PointSetKind::Sparse21: {
      PointSet ps = densify(s, 0);
      tp.points = std::move(ps.points);
      tp.origins = std::move(ps.origins);
      break;
    }
    case PointSetKind::Dense: {
      if (cfg.densify_k < 0) throw InvalidInput("intersection_loss: densify_k must be >= 0");
      PointSet ps = densify(s, cfg.densify_k);
      tp.points = std::move(ps.points);
      tp.origins = std::move(ps.origins);
      break;
    }
    case PointSetKind::MeshSurface: {
      MeshWithJacobian mj = generate_mesh_with_jacobian(s, MeshVariant::Plain);
      tp.points = std::move(mj.mesh.vertices);
      tp.jacobian = std::move(mj.jacobian);
      tp.from_mesh = true;
      break;
    }
  }
  return tp;
}

/// One Eq.-style summand: probabilities of `tested`'s point set under the
/// field conditioned on `cond`, squared (optionally truncated), with
/// gradients chained to both skeletons' joints.
void accumulate_term(const Skeleton& tested, const Skeleton& cond, const OccupancyField& field,
                     const LossConfig& cfg, double& value, std::vector<double>& probs_out,
                     std::array<Vec3d, 21>& grad_tested, std::array<Vec3d, 21>& grad_cond) {
  const TermPoints tp = build_points(tested, cfg);
  const int n = static_cast<int>(tp.points.size());

  std::vector<double> probs(n);
  field.eval_batch(tp.points.data(), n, cond, probs.data());

  std::vector<double> dval(n);
  for (int i = 0; i < n; ++i) {
    const double p = probs[i];
    const double masked = cfg.truncated ? (p > 0.5 ? p : 0.0) : p;
    value += masked * masked;
    dval[i] = 2.0 * masked;
  }
  probs_out.insert(probs_out.end(), probs.begin(), probs.end());

  std::vector<Vec3d> dpoints(n);
  field.backprop_batch(tp.points.data(), n, cond, dval.data(), dpoints.data(), grad_cond);

  if (!tp.from_mesh) {
    for (int i = 0; i < n; ++i) {
      const auto& o = tp.origins[i];
      grad_tested[o.joint_a] += dpoints[i] * (1.0 - o.t);
      grad_tested[o.joint_b] += dpoints[i] * o.t;
    }
  } else {
    for (int i = 0; i < n; ++i) {
      const auto& jac = tp.jacobian[i];
      for (int jc = 0; jc < 63; ++jc) {
        const double g = dpoints[i].x * jac[jc] + dpoints[i].y * jac[63 + jc] + dpoints[i].z * jac[126 + jc];
        grad_tested[jc / 3][jc % 3] += g;
      }
    }
  }
}

}  // namespace

LossResult intersection_loss(const Skeleton& skel_right, const Skeleton& skel_left,
                             const OccupancyField& field, const LossConfig& cfg) {
  if (skel_right.side != Side::Right || skel_left.side != Side::Left)
    throw InvalidInput("intersection_loss: expects a right and a left skeleton, in that order");
  skel_right.validate();
  skel_left.validate();

  LossResult out;
  accumulate_term(skel_left, skel_right, field, cfg, out.value, out.probabilities, out.grad_left,
                  out.grad_right);
  out.direct_count = static_cast<int>(out.probabilities.size());

  if (cfg.both_hands) {
    const Skeleton flipped_right = flip_x(skel_right);  // becomes a left-side shape
    const Skeleton flipped_left = flip_x(skel_left);    // becomes a right-side shape
    std::array<Vec3d, 21> g_tested{}, g_cond{};
    accumulate_term(flipped_right, flipped_left, field, cfg, out.value, out.probabilities, g_tested,
                    g_cond);
    for (int j = 0; j < 21; ++j) {
      out.grad_right[j] += flip_x(g_tested[j]);
      out.grad_left[j] += flip_x(g_cond[j]);
    }
  }
  return out;
}

std::vector<double> truncate_kernel(const std::vector<double>& probabilities) {
  std::vector<double> out(probabilities.size());
  for (size_t i = 0; i < probabilities.size(); ++i)
    out[i] = probabilities[i] > 0.5 ? probabilities[i] : 0.0;
  return out;
}

double loss_gradcheck(const LossConfig& cfg, const OccupancyField& field, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u01(0.0, 1.0);

  Skeleton skel_r, skel_l;
  for (int attempt = 0; attempt < 64; ++attempt) {
    skel_r = forward_kinematics(random_articulation(rng, Side::Right));
    skel_l = forward_kinematics(random_articulation(rng, Side::Left));
    // Slide the left hand near the right so probabilities are informative.
    const Vec3d offset{60.0 * u01(rng) - 30.0, 60.0 * u01(rng) - 30.0, 20.0 + 40.0 * u01(rng)};
    for (auto& j : skel_l.joints) j += offset;

    if (!cfg.truncated) break;
    // Truncation is non-differentiable exactly at p = 0.5; resample away
    // from the threshold so central differences are meaningful.
    const LossResult probe = intersection_loss(skel_r, skel_l, field, cfg);
    bool near_threshold = false;
    for (double p : probe.probabilities) near_threshold |= std::abs(p - 0.5) < 2e-3;
    if (!near_threshold) break;
  }

  const LossResult analytic = intersection_loss(skel_r, skel_l, field, cfg);
  const double h = 1e-4;
  double max_rel = 0.0;
  for (int hand = 0; hand < 2; ++hand) {
    Skeleton& target = hand == 0 ? skel_r : skel_l;
    const auto& grads = hand == 0 ? analytic.grad_right : analytic.grad_left;
    for (int j = 0; j < 21; ++j) {
      for (int c = 0; c < 3; ++c) {
        const double saved = target.joints[j][c];
        target.joints[j][c] = saved + h;
        const double vp = intersection_loss(skel_r, skel_l, field, cfg).value;
        target.joints[j][c] = saved - h;
        const double vm = intersection_loss(skel_r, skel_l, field, cfg).value;
        target.joints[j][c] = saved;
        const double fd = (vp - vm) / (2.0 * h);
        const double a = grads[j][c];
        max_rel = std::max(max_rel, std::abs(a - fd) / std::max({std::abs(a), std::abs(fd), 1e-8}));
      }
    }
  }
  return max_rel;
}

}  // namespace handocc
