// Copyright 2026 The handocc Authors.
// Distributed under the Apache License, Version 2.0.
// See the accompanying LICENSE file or http://www.apache.org/licenses/LICENSE-2.0

#pragma once

#include <array>
#include <atomic>
#include <cstdint>
#include <memory>
#include <optional>
#include <vector>

#include "handocc/geometry.hpp"
#include "handocc/kinematics.hpp"
#include "handocc/mesh.hpp"

namespace handocc {

// ---------------------------------------------------------------------------
// Occupancy fields
// ---------------------------------------------------------------------------

/// Differentiable map (point, conditioning skeleton) -> probability in [0,1].
class OccupancyField {
 public:
  virtual ~OccupancyField() = default;

  virtual double eval(const Vec3d& p, const Skeleton& cond) const = 0;
  virtual Vec3d grad_point(const Vec3d& p, const Skeleton& cond) const = 0;
  virtual std::array<Vec3d, 21> grad_skeleton(const Vec3d& p, const Skeleton& cond) const = 0;

  virtual void eval_batch(const Vec3d* points, int n, const Skeleton& cond, double* out) const;

  /// Fused reverse pass used by the intersection loss: given upstream
  /// derivatives dvalue/dprob per point, writes dvalue/dpoint and accumulates
  /// dvalue/djoint over the batch.
  virtual void backprop_batch(const Vec3d* points, int n, const Skeleton& cond, const double* dprob,
                              Vec3d* dpoints, std::array<Vec3d, 21>& dcond) const;
};

/// Smooth analytic occupancy built from sigmoid-of-distance to the 20 bone
/// segments of the conditioning skeleton: sigma(logsumexp_e beta*(r_e - d_e)).
/// The log-sum-exp acts as a smooth minimum over segment distances, keeping
/// gradients defined at equidistant points.
class CapsuleField final : public OccupancyField {
 public:
  std::array<double, 20> radii;  // per-edge capsule radius, mm
  double beta = 2.0;             // sharpness, 1/mm

  CapsuleField();  // plausible uncalibrated radii

  double eval(const Vec3d& p, const Skeleton& cond) const override;
  Vec3d grad_point(const Vec3d& p, const Skeleton& cond) const override;
  std::array<Vec3d, 21> grad_skeleton(const Vec3d& p, const Skeleton& cond) const override;
  void eval_batch(const Vec3d* points, int n, const Skeleton& cond, double* out) const override;
  void backprop_batch(const Vec3d* points, int n, const Skeleton& cond, const double* dprob,
                      Vec3d* dpoints, std::array<Vec3d, 21>& dcond) const override;

  /// Calibrates each capsule radius by bisection against ray-cast probes of
  /// the mesh thickness, then scales all radii to maximize grid IoU against
  /// the mesh. Deterministic.
  static CapsuleField calibrated_to_mesh(const Skeleton& skeleton, const HandMesh& mesh);

  /// Radii calibrated against the plain rest-pose mesh; computed once and
  /// cached for the process lifetime.
  static const CapsuleField& default_calibrated();
};

// ---------------------------------------------------------------------------
// Exact ray-casting inside/outside oracle
// ---------------------------------------------------------------------------

/// Point-in-mesh queries by crossing parity. Construction validates
/// watertightness (throws InvalidInput otherwise). Degenerate hits (edge or
/// vertex grazing, surface-origin) are re-cast along fresh deterministic
/// pseudo-random directions, at most 8 attempts, then reported outside and
/// counted in degenerate_failures().
class RayCaster {
 public:
  explicit RayCaster(const HandMesh& mesh);

  bool inside(const Vec3d& p) const;

  /// Single-direction crossing parity; nullopt when the cast hits a
  /// degenerate configuration and would need a re-cast.
  std::optional<bool> inside_along(const Vec3d& p, const Vec3d& dir) const;

  const Aabb& bounds() const { return bbox_; }
  long degenerate_failures() const { return failures_.load(); }

  /// All crossing heights of the vertical line through (x, y), sorted
  /// ascending; nullopt if any hit is degenerate. Used by grid fills.
  std::optional<std::vector<double>> column_crossings(double x, double y) const;

 private:
  struct Tri {
    Vec3d v0, e1, e2;
  };
  std::vector<Tri> tris_;
  Aabb bbox_;
  mutable std::atomic<long> failures_{0};

  // 2D bins over (x, y) to accelerate +z column casts.
  int nb_ = 0;
  double bx0_ = 0, by0_ = 0, bxs_ = 1, bys_ = 1;
  std::vector<std::vector<int>> bins_;
};

/// Convenience wrapper; prefer RayCaster for repeated queries on one mesh.
bool ray_cast_inside(const HandMesh& mesh, const Vec3d& p);

// ---------------------------------------------------------------------------
// Occupancy grids
// ---------------------------------------------------------------------------

/// n^3 samples on an inclusive lattice over the bounding box, x-major
/// (index = (ix*n + iy)*n + iz). Mesh-sourced masks hold 0/1, field-sourced
/// masks hold probabilities; occupancy is prob > 0.5 either way.
struct OccupancyGrid {
  Vec3d bbox_min{0, 0, 0}, bbox_max{0, 0, 0};
  int n = 0;
  std::vector<float> prob;

  bool occupied(std::size_t i) const { return prob[i] > 0.5f; }
  std::size_t size() const { return prob.size(); }
  Vec3d point_at(int ix, int iy, int iz) const;
  long occupied_count() const;
};

OccupancyGrid occupancy_grid(const HandMesh& mesh, const Aabb& bbox, int n);
OccupancyGrid occupancy_grid(const OccupancyField& field, const Skeleton& cond, const Aabb& bbox, int n);

/// |a AND b| / |a OR b| over occupied cells; 1.0 when both masks are empty.
/// Throws InvalidInput when the grids disagree on bbox or resolution.
double iou(const OccupancyGrid& a, const OccupancyGrid& b);

/// Number of grid points inside both meshes on the shared lattice over the
/// union of the two bounding boxes padded by 5 mm.
long pair_intersection_count(const HandMesh& right, const HandMesh& left, int n = 50);

}  // namespace handocc
