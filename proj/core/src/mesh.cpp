// Copyright 2026 The handocc Authors.
// Distributed under the Apache License, Version 2.0.
// See the accompanying LICENSE file or http://www.apache.org/licenses/LICENSE-2.0

#include "handocc/mesh.hpp"

#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <unordered_map>

#include "handocc/dual.hpp"
#include "handocc/error.hpp"

namespace handocc {

namespace {

// ---------------------------------------------------------------------------
// Template combinatorics
//
// The surface is two triangulated disks (top and bottom sheets) glued along a
// shared outline. Boundary vertices exist once, interior vertices twice. The
// disk is: a palm grid (bottom row = wrist arc, side columns = palm edges),
// a webbing band zipped from the grid's top row to the finger base rings, and
// one ladder strip per finger closed by an apex fan at the tip.
// ---------------------------------------------------------------------------

struct Station {
  int segment;  // 0: root->mid1, 1: mid1->mid2, 2: mid2->tip
  double t;     // fraction along the segment
};

/// Station schedule per finger. Assignments are fixed per variant so a
/// station never migrates between segments as the skeleton articulates.
std::vector<Station> stations_for(MeshVariant v, int finger) {
  const int count = MeshLayout::of(v).stations[finger];
  switch (count) {
    case 4:
      return {{0, 0.0}, {1, 0.0}, {2, 0.0}, {2, 0.55}};
    case 5:
      return {{0, 0.0}, {0, 0.5}, {1, 0.0}, {2, 0.0}, {2, 0.55}};
    case 8:
      return {{0, 0.0}, {0, 0.5}, {1, 0.0}, {1, 0.5}, {2, 0.0}, {2, 1.0 / 3}, {2, 2.0 / 3}, {2, 0.88}};
    default:  // 9
      return {{0, 0.0}, {0, 1.0 / 3}, {0, 2.0 / 3}, {1, 0.0}, {1, 0.5},
              {2, 0.0}, {2, 1.0 / 3}, {2, 2.0 / 3}, {2, 0.88}};
  }
}

// Interpolation fractions of the valley (webbing) vertices between adjacent
// knuckles. The thumb-index gap carries two vertices, the rest one each.
constexpr double kThumbValleyT[2] = {0.38, 0.62};
constexpr double kThumbValleyDropScale = 1.35;

struct Indexer {
  MeshLayout L;
  std::array<int, 6> station_prefix{};  // prefix sums of per-finger stations
  int n_boundary = 0;
  int n_interior = 0;  // per sheet

  explicit Indexer(MeshVariant v) : L(MeshLayout::of(v)) {
    const int gx = L.grid_cols, gy = L.grid_rows;
    station_prefix[0] = 0;
    for (int f = 0; f < 5; ++f) station_prefix[f + 1] = station_prefix[f] + L.stations[f];
    n_boundary = gx + 2 * (gy - 1) + 2 * L.total_stations() + 5 + 5;
    n_interior = (gy - 1) * (gx - 2) + 3 * L.total_stations();
  }

  int total() const { return n_boundary + 2 * n_interior; }

  // --- boundary ids ---
  int grid_rim(int i, int j) const {
    const int gx = L.grid_cols, gy = L.grid_rows;
    if (j == 0) return i;
    if (i == gx - 1) return gx + (j - 1);
    return gx + (gy - 1) + (j - 1);  // i == 0
  }
  int finger_block(int f) const {
    return L.grid_cols + 2 * (L.grid_rows - 1) + 2 * station_prefix[f] + f;
  }
  int side(int f, int s, bool right) const {
    return finger_block(f) + (right ? s : L.stations[f] + s);
  }
  int apex(int f) const { return finger_block(f) + 2 * L.stations[f]; }
  int valley(int gap, int which) const {
    const int base = finger_block(5);
    if (gap == 0) return base + which;
    return base + 2 + (gap - 1);
  }

  // --- interior ids (sheet 0 = top, 1 = bottom) ---
  // Each station carries three interior ring columns per sheet; column k is
  // adjacent to the +x silhouette for k = 0 on either sheet.
  int grid_interior(int i, int j, int sheet) const {
    const int gx = L.grid_cols;
    return n_boundary + sheet * n_interior + (j - 1) * (gx - 2) + (i - 1);
  }
  int spine(int f, int s, int k, int sheet) const {
    return n_boundary + sheet * n_interior + (L.grid_rows - 1) * (L.grid_cols - 2) +
           3 * (station_prefix[f] + s) + k;
  }

  int grid(int i, int j, int sheet) const {
    if (j == 0 || i == 0 || i == L.grid_cols - 1) return grid_rim(i, j);
    return grid_interior(i, j, sheet);
  }

  /// Ring offset slot for interior column k on a sheet: the ring is indexed
  /// CCW from +x, so the top sheet uses slots 1..3 and the bottom 7..5.
  static int ring_slot(int k, int sheet) { return sheet == 0 ? 1 + k : 7 - k; }
};

std::vector<std::array<int, 3>> build_faces(const Indexer& ix) {
  const int gx = ix.L.grid_cols, gy = ix.L.grid_rows;
  std::vector<std::array<int, 3>> faces;
  faces.reserve(4 * ix.total());

  for (int sheet = 0; sheet < 2; ++sheet) {
    auto add = [&](int a, int b, int c) {
      if (sheet == 0)
        faces.push_back({a, b, c});
      else
        faces.push_back({a, c, b});
    };

    // Palm grid. The bottom-right cell flips its diagonal: the a-c diagonal
    // there would join two outline vertices and be emitted by both sheets.
    for (int j = 0; j < gy - 1; ++j) {
      for (int i = 0; i < gx - 1; ++i) {
        const int a = ix.grid(i, j, sheet), b = ix.grid(i + 1, j, sheet);
        const int c = ix.grid(i + 1, j + 1, sheet), d = ix.grid(i, j + 1, sheet);
        if (i == gx - 2 && j == 0) {
          add(a, b, d);
          add(b, c, d);
        } else {
          add(a, b, c);
          add(a, c, d);
        }
      }
    }

    // Webbing band: zip the finger base rings (chain T, thumb side to pinky
    // side) onto the interior of the grid's top row (chain B).
    std::vector<int> T, B;
    T.push_back(ix.grid(gx - 1, gy - 1, sheet));
    for (int f = 0; f < 5; ++f) {
      T.push_back(ix.side(f, 0, true));
      for (int k = 0; k < 3; ++k) T.push_back(ix.spine(f, 0, k, sheet));
      T.push_back(ix.side(f, 0, false));
      if (f == 0) {
        T.push_back(ix.valley(0, 0));
        T.push_back(ix.valley(0, 1));
      } else if (f < 4) {
        T.push_back(ix.valley(f, 0));
      }
    }
    T.push_back(ix.grid(0, gy - 1, sheet));
    for (int i = gx - 2; i >= 1; --i) B.push_back(ix.grid(i, gy - 1, sheet));

    const int m = static_cast<int>(T.size()), n = static_cast<int>(B.size());
    int i = 0, j = 0;
    while (i < m - 1 || j < n - 1) {
      const double pt_next = static_cast<double>(i + 1) / (m - 1);
      const double pb_next = static_cast<double>(j + 2) / (n + 1);
      const bool advance_top = (j == n - 1) || (i < m - 1 && pt_next <= pb_next);
      if (advance_top) {
        add(T[i], T[i + 1], B[j]);
        ++i;
      } else {
        add(T[i], B[j + 1], B[j]);
        ++j;
      }
    }

    // Finger ladders (four strips across the half-ring) and tip fans.
    for (int f = 0; f < 5; ++f) {
      const int S = ix.L.stations[f];
      auto column = [&](int c, int s) {
        if (c == 0) return ix.side(f, s, true);
        if (c == 4) return ix.side(f, s, false);
        return ix.spine(f, s, c - 1, sheet);
      };
      for (int s = 0; s < S - 1; ++s) {
        for (int c = 0; c < 4; ++c) {
          const int a0 = column(c, s), a1 = column(c, s + 1);
          const int b0 = column(c + 1, s), b1 = column(c + 1, s + 1);
          add(a0, a1, b1);
          add(a0, b1, b0);
        }
      }
      for (int c = 0; c < 4; ++c) add(column(c, S - 1), ix.apex(f), column(c + 1, S - 1));
    }
  }
  return faces;
}

const std::vector<std::array<int, 3>>& faces_for(MeshVariant v) {
  static const std::vector<std::array<int, 3>> plain = build_faces(Indexer(MeshVariant::Plain));
  static const std::vector<std::array<int, 3>> refined = build_faces(Indexer(MeshVariant::Refined));
  return v == MeshVariant::Plain ? plain : refined;
}

// ---------------------------------------------------------------------------
// Geometry
// ---------------------------------------------------------------------------

template <class T>
Vec3<T> apply_frame(const Mat3<T>& f, const Vec3d& local) {
  return f.col[0] * T(local.x) + f.col[1] * T(local.y) + f.col[2] * T(local.z);
}

/// Fills vertex positions for a right-side skeleton. T is double or a dual
/// number; all branch decisions depend only on values, so the dual path
/// produces the exact Jacobian of this map.
template <class T>
void fill_vertices(const Indexer& ix, const std::array<Vec3<T>, 21>& J, const OffsetTable& tab,
                   std::vector<Vec3<T>>& out) {
  using V3 = Vec3<T>;
  const int gx = ix.L.grid_cols, gy = ix.L.grid_rows;
  out.assign(ix.total(), V3{});

  // Palm frame: y toward the knuckles, z the palm normal.
  const V3 w = J[0];
  const V3 mean_k = (J[1] + J[5] + J[9] + J[13] + J[17]) / T(5);
  const V3 yp = normalized(mean_k - w);
  V3 zp = normalized(cross(J[5] - w, J[13] - w));
  const V3 xp = normalized(cross(yp, zp));
  zp = cross(xp, yp);

  // Knuckle anchor curve, pinky side to thumb side, inset toward the wrist.
  std::array<V3, 7> anchor = {
      J[17] - xp * T(tab.palm.side_margin), J[17], J[13], J[9], J[5], J[1],
      J[1] + xp * T(tab.palm.side_margin),
  };
  for (auto& a : anchor) a -= yp * T(tab.palm.knuckle_inset);
  std::array<T, 7> cum;
  cum[0] = T(0);
  for (int i = 1; i < 7; ++i) cum[i] = cum[i - 1] + norm(anchor[i] - anchor[i - 1]);

  auto sample_anchor = [&](double u) -> V3 {
    const T target = cum[6] * T(u);
    int seg = 0;
    while (seg < 5 && cum[seg + 1] < target) ++seg;
    const T len = cum[seg + 1] - cum[seg];
    return lerp(anchor[seg], anchor[seg + 1], (target - cum[seg]) / len);
  };
  auto bottom_row = [&](double u) -> V3 {
    const double s = 2.0 * u - 1.0;
    return w + xp * T(tab.palm.wrist_halfwidth * s) -
           yp * T(tab.palm.wrist_drop + tab.palm.wrist_bulge * (1.0 - s * s));
  };

  for (int j = 0; j < gy; ++j) {
    for (int i = 0; i < gx; ++i) {
      const double u = static_cast<double>(i) / (gx - 1);
      const double v = static_cast<double>(j) / (gy - 1);
      const V3 base = lerp(bottom_row(u), sample_anchor(u), T(v));
      if (j == 0 || i == 0 || i == gx - 1) {
        out[ix.grid_rim(i, j)] = base;
      } else {
        const double th = tab.palm.thickness * (0.72 + 0.28 * std::sin(M_PI * u));
        out[ix.grid_interior(i, j, 0)] = base + zp * T(th);
        out[ix.grid_interior(i, j, 1)] = base - zp * T(th);
      }
    }
  }

  // Fingers: stations along the chain with parallel-transported frames.
  const MeshVariant variant = ix.L.grid_cols == MeshLayout::of(MeshVariant::Plain).grid_cols
                                  ? MeshVariant::Plain
                                  : MeshVariant::Refined;
  for (int f = 0; f < 5; ++f) {
    const auto stations = stations_for(variant, f);
    const int r = 1 + 4 * f;
    const std::array<V3, 4> chain = {J[r], J[r + 1], J[r + 2], J[r + 3]};
    const V3 d0 = normalized(chain[1] - chain[0]);
    const V3 d1 = normalized(chain[2] - chain[1]);
    const V3 d2 = normalized(chain[3] - chain[2]);

    V3 x0 = xp - d0 * dot(xp, d0);
    if (squared_norm(x0) < T(1e-10)) x0 = zp - d0 * dot(zp, d0);
    x0 = normalized(x0);
    const Mat3<T> f0 = Mat3<T>::from_cols(x0, d0, cross(x0, d0));
    const Mat3<T> f1 = rotation_between(d0, d1) * f0;
    const Mat3<T> f2 = rotation_between(d1, d2) * f1;

    auto half_frame = [](const V3& da, const V3& db, const Mat3<T>& fa) {
      const V3 m = da + db;
      if (squared_norm(m) < T(1e-12)) return fa;
      return rotation_between(da, normalized(m)) * fa;
    };
    const Mat3<T> fj1 = half_frame(d0, d1, f0);
    const Mat3<T> fj2 = half_frame(d1, d2, f1);

    for (int s = 0; s < static_cast<int>(stations.size()); ++s) {
      const Station& st = stations[s];
      const V3 c = lerp(chain[st.segment], chain[st.segment + 1], T(st.t));
      const Mat3<T>* frame;
      if (st.t == 0.0 && st.segment == 1)
        frame = &fj1;
      else if (st.t == 0.0 && st.segment == 2)
        frame = &fj2;
      else
        frame = st.segment == 0 ? &f0 : (st.segment == 1 ? &f1 : &f2);

      const auto& ring = tab.fingers[f].rings[s];
      out[ix.side(f, s, true)] = c + apply_frame(*frame, ring.offsets[0]);
      out[ix.side(f, s, false)] = c + apply_frame(*frame, ring.offsets[4]);
      for (int sheet = 0; sheet < 2; ++sheet)
        for (int k = 0; k < 3; ++k)
          out[ix.spine(f, s, k, sheet)] = c + apply_frame(*frame, ring.offsets[Indexer::ring_slot(k, sheet)]);
    }
    out[ix.apex(f)] = chain[3] + d2 * T(tab.fingers[f].tip_cap);
  }

  // Webbing valleys between adjacent knuckles.
  for (int gap = 0; gap < 4; ++gap) {
    const V3& ka = J[1 + 4 * gap];
    const V3& kb = J[1 + 4 * (gap + 1)];
    if (gap == 0) {
      for (int k = 0; k < 2; ++k)
        out[ix.valley(0, k)] =
            lerp(ka, kb, T(kThumbValleyT[k])) - yp * T(tab.palm.valley_drop * kThumbValleyDropScale);
    } else {
      out[ix.valley(gap, 0)] = lerp(ka, kb, T(0.5)) - yp * T(tab.palm.valley_drop);
    }
  }
}

void check_generation_preconditions(const Skeleton& s) {
  s.validate();
  const auto& topo = HandTopology::canonical();
  for (int e = 0; e < 20; ++e) {
    const double len = norm(s.joints[topo.edges[e][1]] - s.joints[topo.edges[e][0]]);
    if (len < 1e-9)
      throw GenerationError(std::string("mesh generation: zero-length bone to ") +
                            HandTopology::joint_name(topo.edges[e][1]));
  }
  Vec3d mean_k{0, 0, 0};
  for (int f = 0; f < 5; ++f) mean_k += s.joints[HandTopology::finger_root(f)];
  mean_k = mean_k / 5.0 - s.joints[0];
  if (norm(mean_k) < 1e-9) throw GenerationError("mesh generation: knuckles coincide with the wrist");
  if (norm(cross(s.joints[5] - s.joints[0], s.joints[13] - s.joints[0])) < 1e-9)
    throw GenerationError("mesh generation: degenerate palm frame (collinear knuckles)");
}

}  // namespace

// ---------------------------------------------------------------------------
// OffsetTable
// ---------------------------------------------------------------------------

int MeshLayout::vertex_count() const {
  const int nb = grid_cols + 2 * (grid_rows - 1) + 2 * total_stations() + 5 + 5;
  const int ni = (grid_rows - 1) * (grid_cols - 2) + 3 * total_stations();
  return nb + 2 * ni;
}

OffsetTable OffsetTable::defaults(MeshVariant variant) {
  OffsetTable t;
  const MeshLayout layout = MeshLayout::of(variant);
  // Conservatively thin finger envelope: octagonal rings whose half-width
  // starts at the knuckle value and tapers toward the tip.
  const double base_width[5] = {8.2, 6.8, 7.0, 6.4, 5.4};
  const double tip_caps[5] = {7.0, 6.2, 6.5, 6.0, 5.2};
  for (int f = 0; f < 5; ++f) {
    const int S = layout.stations[f];
    t.fingers[f].rings.resize(S);
    t.fingers[f].tip_cap = tip_caps[f];
    for (int s = 0; s < S; ++s) {
      const double taper = 1.0 - 0.28 * static_cast<double>(s) / (S - 1);
      const double w = base_width[f] * taper;
      for (int k = 0; k < 8; ++k) {
        const double ang = k * M_PI / 4.0;
        t.fingers[f].rings[s].offsets[k] = {w * std::cos(ang), 0.0, w * std::sin(ang)};
      }
    }
  }
  return t;
}

void OffsetTable::validate(MeshVariant variant) const {
  const MeshLayout layout = MeshLayout::of(variant);
  for (int f = 0; f < 5; ++f) {
    if (static_cast<int>(fingers[f].rings.size()) != layout.stations[f])
      throw InvalidInput("offset table: finger " + std::to_string(f) + " must carry " +
                         std::to_string(layout.stations[f]) + " station rings for this variant");
    if (!(fingers[f].tip_cap > 0) || !std::isfinite(fingers[f].tip_cap))
      throw InvalidInput("offset table: tip_cap must be positive");
    for (const auto& ring : fingers[f].rings)
      for (const auto& v : ring.offsets)
        if (!std::isfinite(v.x) || !std::isfinite(v.y) || !std::isfinite(v.z))
          throw InvalidInput("offset table: non-finite ring offset");
  }
  for (double p : {palm.thickness, palm.wrist_halfwidth, palm.side_margin})
    if (!(p > 0) || !std::isfinite(p)) throw InvalidInput("offset table: palm magnitudes must be positive");
}

// ---------------------------------------------------------------------------
// Generation
// ---------------------------------------------------------------------------

HandMesh generate_mesh(const Skeleton& skeleton, MeshVariant variant) {
  return generate_mesh(skeleton, variant, OffsetTable::defaults(variant));
}

HandMesh generate_mesh(const Skeleton& skeleton, MeshVariant variant, const OffsetTable& offsets) {
  offsets.validate(variant);
  check_generation_preconditions(skeleton);

  const bool left = skeleton.side == Side::Left;
  const Skeleton& rs = left ? flip_x(skeleton) : skeleton;

  const Indexer ix(variant);
  std::vector<Vec3d> verts;
  fill_vertices<double>(ix, rs.joints, offsets, verts);

  HandMesh m;
  m.variant = variant;
  m.source_skeleton = skeleton;
  m.vertices = std::move(verts);
  m.faces = faces_for(variant);
  if (left) {
    for (auto& v : m.vertices) v.x = -v.x;
    for (auto& f : m.faces) std::swap(f[1], f[2]);
  }
  return m;
}

MeshWithJacobian generate_mesh_with_jacobian(const Skeleton& skeleton, MeshVariant variant) {
  return generate_mesh_with_jacobian(skeleton, variant, OffsetTable::defaults(variant));
}

MeshWithJacobian generate_mesh_with_jacobian(const Skeleton& skeleton, MeshVariant variant,
                                             const OffsetTable& offsets) {
  offsets.validate(variant);
  check_generation_preconditions(skeleton);

  using D = Dual<63>;
  const bool left = skeleton.side == Side::Left;

  std::array<Vec3<D>, 21> joints;
  for (int j = 0; j < 21; ++j)
    for (int c = 0; c < 3; ++c) joints[j][c] = D::seeded(skeleton.joints[j][c], 3 * j + c);
  if (left)
    for (int j = 0; j < 21; ++j) joints[j].x = -joints[j].x;

  const Indexer ix(variant);
  std::vector<Vec3<D>> dual_verts;
  fill_vertices<D>(ix, joints, offsets, dual_verts);
  if (left)
    for (auto& v : dual_verts) v.x = -v.x;

  MeshWithJacobian out;
  out.mesh.variant = variant;
  out.mesh.source_skeleton = skeleton;
  out.mesh.faces = faces_for(variant);
  if (left)
    for (auto& f : out.mesh.faces) std::swap(f[1], f[2]);

  out.mesh.vertices.resize(dual_verts.size());
  out.jacobian.resize(dual_verts.size());
  for (size_t i = 0; i < dual_verts.size(); ++i) {
    for (int c = 0; c < 3; ++c) {
      out.mesh.vertices[i][c] = dual_verts[i][c].v;
      for (int k = 0; k < 63; ++k) out.jacobian[i][c * 63 + k] = dual_verts[i][c].d[k];
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Validation
// ---------------------------------------------------------------------------

WatertightReport validate_watertight(const HandMesh& m) {
  WatertightReport rep;
  const int nv = static_cast<int>(m.vertices.size());
  const int nf = static_cast<int>(m.faces.size());

  auto note = [&rep](std::string msg) {
    if (rep.defects.size() < 100) rep.defects.push_back(std::move(msg));
  };

  struct EdgeUse {
    int forward = 0;
    int backward = 0;
  };
  std::map<std::pair<int, int>, EdgeUse> edges;

  bool indices_ok = true;
  for (int fi = 0; fi < nf; ++fi) {
    const auto& f = m.faces[fi];
    if (f[0] == f[1] || f[1] == f[2] || f[0] == f[2]) {
      note("face " + std::to_string(fi) + " repeats a vertex index");
      indices_ok = false;
      continue;
    }
    bool in_range = true;
    for (int k = 0; k < 3; ++k)
      if (f[k] < 0 || f[k] >= nv) in_range = false;
    if (!in_range) {
      note("face " + std::to_string(fi) + " references a vertex out of range");
      indices_ok = false;
      continue;
    }
    for (int k = 0; k < 3; ++k) {
      const int a = f[k], b = f[(k + 1) % 3];
      auto& use = edges[{std::min(a, b), std::max(a, b)}];
      if (a < b)
        use.forward++;
      else
        use.backward++;
    }
  }

  bool closed = indices_ok && nf > 0;
  bool oriented = true;
  for (const auto& [key, use] : edges) {
    const int total = use.forward + use.backward;
    if (total != 2) {
      closed = false;
      note("edge (" + std::to_string(key.first) + "," + std::to_string(key.second) + ") used " +
           std::to_string(total) + " time(s)");
    } else if (use.forward != 1 || use.backward != 1) {
      oriented = false;
      note("edge (" + std::to_string(key.first) + "," + std::to_string(key.second) +
           ") traversed twice in the same direction");
    }
  }

  rep.is_closed = closed;
  rep.is_oriented = closed && oriented;
  rep.euler_char = nv - static_cast<int>(edges.size()) + nf;
  if (rep.euler_char != 2 && rep.is_closed)
    note("Euler characteristic is " + std::to_string(rep.euler_char) + ", expected 2");
  return rep;
}

PointSet mesh_surface_pointset(const HandMesh& m) {
  PointSet ps;
  ps.provenance = PointProvenance::MeshSurface;
  ps.points = m.vertices;
  return ps;
}

// ---------------------------------------------------------------------------
// OBJ I/O
// ---------------------------------------------------------------------------

void export_obj(const HandMesh& m, const std::string& path) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp);
    if (!out) throw Error("export_obj: cannot open " + tmp + " for writing");
    char buf[128];
    for (const auto& v : m.vertices) {
      std::snprintf(buf, sizeof(buf), "v %.10g %.10g %.10g\n", v.x, v.y, v.z);
      out << buf;
    }
    for (const auto& f : m.faces) out << "f " << f[0] + 1 << ' ' << f[1] + 1 << ' ' << f[2] + 1 << '\n';
    if (!out) throw Error("export_obj: write failed for " + tmp);
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0)
    throw Error("export_obj: cannot rename " + tmp + " to " + path);
}

HandMesh import_obj(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("import_obj: cannot open " + path);

  HandMesh m;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::istringstream ls(line);
    std::string tag;
    if (!(ls >> tag)) continue;  // blank line
    if (tag[0] == '#') continue;
    if (tag == "v") {
      Vec3d v;
      if (!(ls >> v.x >> v.y >> v.z))
        throw ParseError("import_obj: malformed vertex record", lineno, 1);
      m.vertices.push_back(v);
    } else if (tag == "f") {
      std::vector<long> idx;
      long k;
      while (ls >> k) idx.push_back(k);
      if (idx.size() != 3)
        throw ParseError("import_obj: expected 3 vertex indices per face (triangles only), got " +
                             std::to_string(idx.size()),
                         lineno, 1);
      std::array<int, 3> f;
      for (int c = 0; c < 3; ++c) {
        if (idx[c] < 1 || idx[c] > static_cast<long>(m.vertices.size()))
          throw ParseError("import_obj: face index out of range", lineno, 1);
        f[c] = static_cast<int>(idx[c] - 1);
      }
      m.faces.push_back(f);
    } else {
      throw ParseError("import_obj: unsupported record '" + tag + "' (v/f only)", lineno, 1);
    }
  }
  if (m.vertices.empty() || m.faces.empty())
    throw ParseError("import_obj: no geometry in " + path, std::max(lineno, 1), 1);

  m.variant = static_cast<int>(m.vertices.size()) == MeshLayout::of(MeshVariant::Refined).vertex_count()
                  ? MeshVariant::Refined
                  : MeshVariant::Plain;
  return m;
}

}  // namespace handocc
