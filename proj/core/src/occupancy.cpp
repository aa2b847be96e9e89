// Copyright 2026 The handocc Authors.
// Distributed under the Apache License, Version 2.0.
// See the accompanying LICENSE file or http://www.apache.org/licenses/LICENSE-2.0

#include "handocc/occupancy.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include "handocc/error.hpp"
#include "handocc/parallel.hpp"

namespace handocc {

namespace {

double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

struct Segment {
  Vec3d a, b;
};

std::array<Segment, 20> segments_of(const Skeleton& s) {
  const auto& topo = HandTopology::canonical();
  std::array<Segment, 20> segs;
  for (int e = 0; e < 20; ++e) segs[e] = {s.joints[topo.edges[e][0]], s.joints[topo.edges[e][1]]};
  return segs;
}

/// Distance from p to segment, plus the clamped projection parameter and the
/// outward unit vector (zero when p lies on the segment).
struct SegDist {
  double d;
  double t;
  Vec3d u;
};

SegDist segment_distance(const Vec3d& p, const Segment& s) {
  const Vec3d ab = s.b - s.a;
  const double len2 = squared_norm(ab);
  double t = len2 > 0 ? dot(p - s.a, ab) / len2 : 0.0;
  t = std::clamp(t, 0.0, 1.0);
  const Vec3d c = s.a + ab * t;
  const Vec3d diff = p - c;
  const double d = norm(diff);
  return {d, t, d > 1e-12 ? diff / d : Vec3d{0, 0, 0}};
}

/// splitmix64; used to derive deterministic per-point re-cast directions.
std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

Vec3d hashed_direction(const Vec3d& p, int attempt) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto fold = [&h](double v) {
    std::uint64_t bits;
    static_assert(sizeof(bits) == sizeof(v));
    std::memcpy(&bits, &v, sizeof(bits));
    h = mix64(h ^ bits);
  };
  fold(p.x);
  fold(p.y);
  fold(p.z);
  h = mix64(h ^ static_cast<std::uint64_t>(attempt));
  // Two uniform doubles -> direction on the sphere.
  const double u = (h >> 11) * (1.0 / 9007199254740992.0);
  const double v = (mix64(h) >> 11) * (1.0 / 9007199254740992.0);
  const double z = 2.0 * u - 1.0;
  const double r = std::sqrt(std::max(0.0, 1.0 - z * z));
  const double phi = 2.0 * M_PI * v;
  return {r * std::cos(phi), r * std::sin(phi), z};
}

constexpr double kBaryEps = 1e-9;
constexpr double kTEps = 1e-9;
constexpr double kDetEps = 1e-12;

}  // namespace

// ---------------------------------------------------------------------------
// OccupancyField defaults
// ---------------------------------------------------------------------------

void OccupancyField::eval_batch(const Vec3d* points, int n, const Skeleton& cond, double* out) const {
  for (int i = 0; i < n; ++i) out[i] = eval(points[i], cond);
}

void OccupancyField::backprop_batch(const Vec3d* points, int n, const Skeleton& cond,
                                    const double* dprob, Vec3d* dpoints,
                                    std::array<Vec3d, 21>& dcond) const {
  for (int i = 0; i < n; ++i) {
    dpoints[i] = grad_point(points[i], cond) * dprob[i];
    const auto gs = grad_skeleton(points[i], cond);
    for (int j = 0; j < 21; ++j) dcond[j] += gs[j] * dprob[i];
  }
}

// ---------------------------------------------------------------------------
// CapsuleField
// ---------------------------------------------------------------------------

CapsuleField::CapsuleField() {
  for (int f = 0; f < 5; ++f) {
    radii[4 * f + 0] = 9.0;
    radii[4 * f + 1] = 7.0;
    radii[4 * f + 2] = 6.3;
    radii[4 * f + 3] = 5.6;
  }
}

namespace {

struct CapsuleEval {
  double prob;
  double z;
  std::array<double, 20> weight;  // softmax over edges
  std::array<SegDist, 20> dist;
};

CapsuleEval capsule_forward(const Vec3d& p, const std::array<Segment, 20>& segs,
                            const std::array<double, 20>& radii, double beta) {
  CapsuleEval ev;
  std::array<double, 20> m;
  double mmax = -std::numeric_limits<double>::infinity();
  for (int e = 0; e < 20; ++e) {
    ev.dist[e] = segment_distance(p, segs[e]);
    m[e] = beta * (radii[e] - ev.dist[e].d);
    mmax = std::max(mmax, m[e]);
  }
  double sum = 0;
  for (int e = 0; e < 20; ++e) {
    ev.weight[e] = std::exp(m[e] - mmax);
    sum += ev.weight[e];
  }
  for (int e = 0; e < 20; ++e) ev.weight[e] /= sum;
  ev.z = mmax + std::log(sum);
  ev.prob = sigmoid(ev.z);
  return ev;
}

}  // namespace

double CapsuleField::eval(const Vec3d& p, const Skeleton& cond) const {
  return capsule_forward(p, segments_of(cond), radii, beta).prob;
}

Vec3d CapsuleField::grad_point(const Vec3d& p, const Skeleton& cond) const {
  const auto ev = capsule_forward(p, segments_of(cond), radii, beta);
  const double s = ev.prob * (1.0 - ev.prob) * beta;
  Vec3d g{0, 0, 0};
  for (int e = 0; e < 20; ++e) g -= ev.dist[e].u * (s * ev.weight[e]);
  return g;
}

std::array<Vec3d, 21> CapsuleField::grad_skeleton(const Vec3d& p, const Skeleton& cond) const {
  const auto ev = capsule_forward(p, segments_of(cond), radii, beta);
  const auto& topo = HandTopology::canonical();
  const double s = ev.prob * (1.0 - ev.prob) * beta;
  std::array<Vec3d, 21> g{};
  for (int e = 0; e < 20; ++e) {
    const auto& sd = ev.dist[e];
    const Vec3d ga = sd.u * (s * ev.weight[e] * (1.0 - sd.t));
    const Vec3d gb = sd.u * (s * ev.weight[e] * sd.t);
    g[topo.edges[e][0]] += ga;
    g[topo.edges[e][1]] += gb;
  }
  return g;
}

void CapsuleField::eval_batch(const Vec3d* points, int n, const Skeleton& cond, double* out) const {
  const auto segs = segments_of(cond);
  for (int i = 0; i < n; ++i) out[i] = capsule_forward(points[i], segs, radii, beta).prob;
}

void CapsuleField::backprop_batch(const Vec3d* points, int n, const Skeleton& cond,
                                  const double* dprob, Vec3d* dpoints,
                                  std::array<Vec3d, 21>& dcond) const {
  const auto segs = segments_of(cond);
  const auto& topo = HandTopology::canonical();
  for (int i = 0; i < n; ++i) {
    const auto ev = capsule_forward(points[i], segs, radii, beta);
    const double s = ev.prob * (1.0 - ev.prob) * beta * dprob[i];
    Vec3d gp{0, 0, 0};
    for (int e = 0; e < 20; ++e) {
      const auto& sd = ev.dist[e];
      const Vec3d we_u = sd.u * (s * ev.weight[e]);
      gp -= we_u;
      dcond[topo.edges[e][0]] += we_u * (1.0 - sd.t);
      dcond[topo.edges[e][1]] += we_u * sd.t;
    }
    dpoints[i] = gp;
  }
}

// ---------------------------------------------------------------------------
// RayCaster
// ---------------------------------------------------------------------------

RayCaster::RayCaster(const HandMesh& mesh) {
  const auto report = validate_watertight(mesh);
  if (!report.ok())
    throw InvalidInput("RayCaster: mesh is not watertight (" +
                       (report.defects.empty() ? std::string("bad Euler characteristic")
                                               : report.defects.front()) +
                       ")");
  tris_.reserve(mesh.faces.size());
  for (const auto& f : mesh.faces) {
    const Vec3d& a = mesh.vertices[f[0]];
    tris_.push_back({a, mesh.vertices[f[1]] - a, mesh.vertices[f[2]] - a});
    bbox_.expand(mesh.vertices[f[0]]);
    bbox_.expand(mesh.vertices[f[1]]);
    bbox_.expand(mesh.vertices[f[2]]);
  }

  // 2D bins over (x, y) for vertical column casts.
  nb_ = 24;
  bx0_ = bbox_.min.x;
  by0_ = bbox_.min.y;
  bxs_ = std::max((bbox_.max.x - bbox_.min.x) / nb_, 1e-9);
  bys_ = std::max((bbox_.max.y - bbox_.min.y) / nb_, 1e-9);
  bins_.assign(static_cast<size_t>(nb_) * nb_, {});
  for (size_t t = 0; t < tris_.size(); ++t) {
    const Vec3d& a = tris_[t].v0;
    const Vec3d b = a + tris_[t].e1, c = a + tris_[t].e2;
    const double xmin = std::min({a.x, b.x, c.x}), xmax = std::max({a.x, b.x, c.x});
    const double ymin = std::min({a.y, b.y, c.y}), ymax = std::max({a.y, b.y, c.y});
    const int ix0 = std::clamp(static_cast<int>((xmin - bx0_) / bxs_), 0, nb_ - 1);
    const int ix1 = std::clamp(static_cast<int>((xmax - bx0_) / bxs_), 0, nb_ - 1);
    const int iy0 = std::clamp(static_cast<int>((ymin - by0_) / bys_), 0, nb_ - 1);
    const int iy1 = std::clamp(static_cast<int>((ymax - by0_) / bys_), 0, nb_ - 1);
    for (int ix = ix0; ix <= ix1; ++ix)
      for (int iy = iy0; iy <= iy1; ++iy) bins_[static_cast<size_t>(ix) * nb_ + iy].push_back(static_cast<int>(t));
  }
}

std::optional<bool> RayCaster::inside_along(const Vec3d& p, const Vec3d& dir) const {
  int crossings = 0;
  for (const auto& tri : tris_) {
    const Vec3d pvec = cross(dir, tri.e2);
    const double det = dot(tri.e1, pvec);
    const Vec3d tvec = p - tri.v0;
    if (std::abs(det) < kDetEps) {
      // Parallel ray; only grazing-in-plane rays are ambiguous.
      const Vec3d n = cross(tri.e1, tri.e2);
      const double n2 = norm(n);
      if (n2 > 0 && std::abs(dot(tvec, n / n2)) < 1e-9) return std::nullopt;
      continue;
    }
    const double inv = 1.0 / det;
    const double u = dot(tvec, pvec) * inv;
    if (u < -kBaryEps || u > 1.0 + kBaryEps) continue;
    const Vec3d qvec = cross(tvec, tri.e1);
    const double v = dot(dir, qvec) * inv;
    if (v < -kBaryEps || u + v > 1.0 + kBaryEps) continue;
    const double t = dot(tri.e2, qvec) * inv;
    if (t < -kTEps) continue;
    // Inside the padded triangle and ahead of (or at) the origin.
    const bool interior = u > kBaryEps && v > kBaryEps && u + v < 1.0 - kBaryEps;
    if (t <= kTEps || !interior) return std::nullopt;  // surface origin or edge graze
    ++crossings;
  }
  return (crossings & 1) != 0;
}

bool RayCaster::inside(const Vec3d& p) const {
  if (!bbox_.contains(p)) return false;
  static const Vec3d primary{0.0, 0.0, 1.0};
  auto r = inside_along(p, primary);
  for (int attempt = 0; !r && attempt < 8; ++attempt) r = inside_along(p, hashed_direction(p, attempt));
  if (!r) {
    failures_.fetch_add(1, std::memory_order_relaxed);
    return false;
  }
  return *r;
}

std::optional<std::vector<double>> RayCaster::column_crossings(double x, double y) const {
  const int ix = std::clamp(static_cast<int>((x - bx0_) / bxs_), 0, nb_ - 1);
  const int iy = std::clamp(static_cast<int>((y - by0_) / bys_), 0, nb_ - 1);
  std::vector<double> zs;
  for (int t : bins_[static_cast<size_t>(ix) * nb_ + iy]) {
    const auto& tri = tris_[t];
    // Vertical ray: dir = +z. pvec = cross(dir, e2) = (-e2.y, e2.x, 0).
    const Vec3d pvec{-tri.e2.y, tri.e2.x, 0.0};
    const double det = tri.e1.x * pvec.x + tri.e1.y * pvec.y;
    const Vec3d tvec{x - tri.v0.x, y - tri.v0.y, 0.0};
    if (std::abs(det) < kDetEps) {
      const Vec3d n = cross(tri.e1, tri.e2);
      const double n2 = norm(n);
      const Vec3d full_tvec{x - tri.v0.x, y - tri.v0.y, -tri.v0.z};
      if (n2 > 0 && std::abs(dot(full_tvec, n / n2)) < 1e-9) return std::nullopt;
      continue;
    }
    const double inv = 1.0 / det;
    const double u = (tvec.x * pvec.x + tvec.y * pvec.y) * inv;
    if (u < -kBaryEps || u > 1.0 + kBaryEps) continue;
    const Vec3d qvec = cross(tvec, tri.e1);
    const double v = qvec.z * inv;
    if (v < -kBaryEps || u + v > 1.0 + kBaryEps) continue;
    if (!(u > kBaryEps && v > kBaryEps && u + v < 1.0 - kBaryEps)) return std::nullopt;
    // Crossing height: z = v0.z + u'*... recover from plane equation instead:
    // z solves (q - v0) . n = 0 for q = (x, y, z).
    const Vec3d n = cross(tri.e1, tri.e2);
    if (std::abs(n.z) < 1e-12) return std::nullopt;
    const double z = tri.v0.z - ((x - tri.v0.x) * n.x + (y - tri.v0.y) * n.y) / n.z;
    zs.push_back(z);
  }
  std::sort(zs.begin(), zs.end());
  return zs;
}

bool ray_cast_inside(const HandMesh& mesh, const Vec3d& p) { return RayCaster(mesh).inside(p); }

// ---------------------------------------------------------------------------
// Occupancy grids
// ---------------------------------------------------------------------------

Vec3d OccupancyGrid::point_at(int ix, int iy, int iz) const {
  const double fx = n > 1 ? static_cast<double>(ix) / (n - 1) : 0.5;
  const double fy = n > 1 ? static_cast<double>(iy) / (n - 1) : 0.5;
  const double fz = n > 1 ? static_cast<double>(iz) / (n - 1) : 0.5;
  return {bbox_min.x + fx * (bbox_max.x - bbox_min.x), bbox_min.y + fy * (bbox_max.y - bbox_min.y),
          bbox_min.z + fz * (bbox_max.z - bbox_min.z)};
}

long OccupancyGrid::occupied_count() const {
  long c = 0;
  for (float p : prob) c += p > 0.5f;
  return c;
}

namespace {

OccupancyGrid make_grid_shell(const Aabb& bbox, int n) {
  if (n < 2) throw InvalidInput("occupancy_grid: resolution n must be >= 2");
  if (!bbox.valid()) throw InvalidInput("occupancy_grid: empty bounding box");
  OccupancyGrid g;
  g.bbox_min = bbox.min;
  g.bbox_max = bbox.max;
  g.n = n;
  g.prob.assign(static_cast<size_t>(n) * n * n, 0.0f);
  return g;
}

}  // namespace

OccupancyGrid occupancy_grid(const HandMesh& mesh, const Aabb& bbox, int n) {
  OccupancyGrid g = make_grid_shell(bbox, n);
  const RayCaster caster(mesh);

  parallel_for(static_cast<std::int64_t>(n) * n, [&](std::int64_t lo, std::int64_t hi) {
    for (std::int64_t col = lo; col < hi; ++col) {
      const int ix = static_cast<int>(col / n), iy = static_cast<int>(col % n);
      const Vec3d base = g.point_at(ix, iy, 0);
      const Vec3d top = g.point_at(ix, iy, n - 1);
      auto crossings = caster.column_crossings(base.x, base.y);
      bool fallback = !crossings.has_value();
      if (crossings) {
        for (double zc : *crossings)
          for (int iz = 0; iz < n && !fallback; ++iz) {
            const double z = base.z + (top.z - base.z) * iz / (n - 1);
            if (std::abs(z - zc) < 1e-9) fallback = true;  // sample on the surface
          }
      }
      for (int iz = 0; iz < n; ++iz) {
        const Vec3d p = g.point_at(ix, iy, iz);
        bool in;
        if (!fallback) {
          const auto& zs = *crossings;
          const size_t below = std::lower_bound(zs.begin(), zs.end(), p.z) - zs.begin();
          in = (below & 1) != 0;
        } else {
          in = caster.inside(p);
        }
        g.prob[(static_cast<size_t>(ix) * n + iy) * n + iz] = in ? 1.0f : 0.0f;
      }
    }
  });
  return g;
}

OccupancyGrid occupancy_grid(const OccupancyField& field, const Skeleton& cond, const Aabb& bbox,
                             int n) {
  OccupancyGrid g = make_grid_shell(bbox, n);
  std::vector<Vec3d> pts(static_cast<size_t>(n) * n * n);
  for (int ix = 0; ix < n; ++ix)
    for (int iy = 0; iy < n; ++iy)
      for (int iz = 0; iz < n; ++iz) pts[(static_cast<size_t>(ix) * n + iy) * n + iz] = g.point_at(ix, iy, iz);

  std::vector<double> out(pts.size());
  parallel_for(static_cast<std::int64_t>(pts.size()), [&](std::int64_t lo, std::int64_t hi) {
    field.eval_batch(pts.data() + lo, static_cast<int>(hi - lo), cond, out.data() + lo);
  });
  for (size_t i = 0; i < out.size(); ++i) g.prob[i] = static_cast<float>(out[i]);
  return g;
}

double iou(const OccupancyGrid& a, const OccupancyGrid& b) {
  if (a.n != b.n || norm(a.bbox_min - b.bbox_min) > 1e-9 || norm(a.bbox_max - b.bbox_max) > 1e-9)
    throw InvalidInput("iou: grids must share bbox and resolution");
  long inter = 0, uni = 0;
  for (size_t i = 0; i < a.prob.size(); ++i) {
    const bool ia = a.occupied(i), ib = b.occupied(i);
    inter += ia && ib;
    uni += ia || ib;
  }
  return uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

long pair_intersection_count(const HandMesh& right, const HandMesh& left, int n) {
  Aabb bbox = right.bounding_box();
  bbox.expand(left.bounding_box());
  bbox = bbox.padded(5.0);
  const OccupancyGrid gr = occupancy_grid(right, bbox, n);
  const OccupancyGrid gl = occupancy_grid(left, bbox, n);
  long count = 0;
  for (size_t i = 0; i < gr.prob.size(); ++i) count += gr.occupied(i) && gl.occupied(i);
  return count;
}

// ---------------------------------------------------------------------------
// Capsule calibration
// ---------------------------------------------------------------------------

CapsuleField CapsuleField::calibrated_to_mesh(const Skeleton& skeleton, const HandMesh& mesh) {
  const RayCaster caster(mesh);
  const auto segs = segments_of(skeleton);

  CapsuleField field;
  for (int e = 0; e < 20; ++e) {
    const Vec3d axis = segs[e].b - segs[e].a;
    const double len = norm(axis);
    if (len < 1e-9) continue;  // keep the default radius on degenerate edges
    const Vec3d d = axis / len;
    Vec3d px = cross(d, Vec3d{1, 0, 0});
    if (squared_norm(px) < 1e-12) px = cross(d, Vec3d{0, 1, 0});
    px = normalized(px);
    const Vec3d py = cross(d, px);

    auto inside_fraction = [&](double r) {
      int in = 0, total = 0;
      for (double t : {0.3, 0.5, 0.7}) {
        const Vec3d c = segs[e].a + axis * t;
        for (int k = 0; k < 8; ++k) {
          const double ang = (k + 0.5) * M_PI / 4.0;
          const Vec3d probe = c + (px * std::cos(ang) + py * std::sin(ang)) * r;
          in += caster.inside(probe);
          ++total;
        }
      }
      return static_cast<double>(in) / total;
    };

    double lo = 0.5, hi = 30.0;
    if (inside_fraction(lo) <= 0.5) {
      field.radii[e] = lo;
      continue;
    }
    if (inside_fraction(hi) >= 0.5) {
      field.radii[e] = hi;
      continue;
    }
    for (int it = 0; it < 40; ++it) {
      const double mid = 0.5 * (lo + hi);
      (inside_fraction(mid) > 0.5 ? lo : hi) = mid;
    }
    field.radii[e] = 0.5 * (lo + hi);
  }

  // Global scale: maximize grid IoU against the mesh.
  const Aabb bbox = mesh.bounding_box().padded(5.0);
  const int n = 40;
  const OccupancyGrid mesh_grid = occupancy_grid(mesh, bbox, n);
  auto iou_at = [&](double scale) {
    CapsuleField f = field;
    for (auto& r : f.radii) r *= scale;
    return iou(occupancy_grid(f, skeleton, bbox, n), mesh_grid);
  };

  double best_scale = 1.0, best = iou_at(1.0);
  for (double s = 0.75; s <= 1.351; s += 0.05) {
    const double v = iou_at(s);
    if (v > best) {
      best = v;
      best_scale = s;
    }
  }
  // Golden-section refinement around the coarse best.
  double a = best_scale - 0.05, b = best_scale + 0.05;
  constexpr double kPhi = 0.6180339887498949;
  double x1 = b - kPhi * (b - a), x2 = a + kPhi * (b - a);
  double f1 = iou_at(x1), f2 = iou_at(x2);
  for (int it = 0; it < 10; ++it) {
    if (f1 >= f2) {
      b = x2;
      x2 = x1;
      f2 = f1;
      x1 = b - kPhi * (b - a);
      f1 = iou_at(x1);
    } else {
      a = x1;
      x1 = x2;
      f1 = f2;
      x2 = a + kPhi * (b - a);
      f2 = iou_at(x2);
    }
  }
  const double refined = 0.5 * (a + b);
  if (iou_at(refined) > best) best_scale = refined;
  for (auto& r : field.radii) r *= best_scale;

  // Per-edge coordinate-descent polish on the same IoU objective.
  auto field_iou = [&](const CapsuleField& f) { return iou(occupancy_grid(f, skeleton, bbox, n), mesh_grid); };
  double current = field_iou(field);
  for (int pass = 0; pass < 2; ++pass) {
    for (int e = 0; e < 20; ++e) {
      const double r0 = field.radii[e];
      for (double mult : {0.85, 0.93, 1.08, 1.18}) {
        CapsuleField trial = field;
        trial.radii[e] = r0 * mult;
        const double v = field_iou(trial);
        if (v > current) {
          current = v;
          field.radii[e] = trial.radii[e];
        }
      }
    }
  }
  return field;
}

const CapsuleField& CapsuleField::default_calibrated() {
  static const CapsuleField field = [] {
    const Skeleton rest = forward_kinematics(HandPose::rest(Side::Right));
    return calibrated_to_mesh(rest, generate_mesh(rest, MeshVariant::Plain));
  }();
  return field;
}

}  // namespace handocc
