// Copyright 2026 The handocc Authors.
// Distributed under the Apache License, Version 2.0.
// See the accompanying LICENSE file or http://www.apache.org/licenses/LICENSE-2.0

#pragma once

#include <array>
#include <string>
#include <vector>

#include "handocc/geometry.hpp"
#include "handocc/kinematics.hpp"

namespace handocc {

enum class MeshVariant { Plain, Refined };

inline const char* to_string(MeshVariant v) { return v == MeshVariant::Plain ? "plain" : "refined"; }

/// Watertight triangle envelope draped over a skeleton.
///
/// The surface is a closed genus-0 "silhouette" construction: a structured
/// triangulated disk (palm grid, five finger ladders, webbing band) plus its
/// mirror image, glued along the shared outline. Faces wind counter-clockwise
/// seen from outside. Plain has exactly 307 vertices, Refined 699.
struct HandMesh {
  std::vector<Vec3d> vertices;               // mm
  std::vector<std::array<int, 3>> faces;     // CCW outward
  MeshVariant variant = MeshVariant::Plain;
  Skeleton source_skeleton;

  Aabb bounding_box() const {
    Aabb b;
    for (const auto& v : vertices) b.expand(v);
    return b;
  }
};

/// Magnitudes of the envelope: ring displacement vectors around each finger
/// station (in the station's local frame: x sideways, y along the bone,
/// z palm-normal) plus the palm patch layout. The ring/grid topology itself
/// is fixed per variant; the table only shapes it. All values in mm.
struct OffsetTable {
  /// Eight displacement vectors per station ring, ordered counter-clockwise
  /// seen from the fingertip: index 0 on the +x silhouette, 4 on the -x
  /// silhouette, 1..3 across the back, 5..7 across the palm side.
  struct StationRing {
    std::array<Vec3d, 8> offsets;
  };
  struct Finger {
    std::vector<StationRing> rings;  // one per station of the variant
    double tip_cap = 6.0;            // apex extension beyond the tip joint
  };
  struct Palm {
    double thickness = 7.8;        // half-thickness of the interior sheets
    double wrist_halfwidth = 12.0;
    double wrist_drop = 3.5;       // bottom row offset proximal of the wrist
    double wrist_bulge = 2.5;      // extra rounding at the bottom row center
    double side_margin = 5.0;      // outline width beyond thumb/pinky knuckles
    double knuckle_inset = 6.0;    // top grid row inset proximal of the knuckles
    double valley_drop = 9.0;      // webbing vertices inset toward the wrist
  };

  std::array<Finger, 5> fingers;
  Palm palm;

  static OffsetTable defaults(MeshVariant variant);
  void validate(MeshVariant variant) const;  // throws InvalidInput on mismatch
};

/// Per-finger station counts and palm grid size for a variant.
struct MeshLayout {
  std::array<int, 5> stations;  // thumb, index, middle, ring, pinky
  int grid_cols;
  int grid_rows;
  static MeshLayout of(MeshVariant v) {
    return v == MeshVariant::Plain ? MeshLayout{{4, 5, 5, 4, 4}, 25, 3}
                                   : MeshLayout{{8, 9, 9, 9, 9}, 49, 4};
  }
  int total_stations() const { return stations[0] + stations[1] + stations[2] + stations[3] + stations[4]; }
  int vertex_count() const;
};

HandMesh generate_mesh(const Skeleton& skeleton, MeshVariant variant);
HandMesh generate_mesh(const Skeleton& skeleton, MeshVariant variant, const OffsetTable& offsets);

/// Mesh plus the exact Jacobian of every vertex with respect to the 21 joint
/// coordinates (3x63 per vertex, row-major: row = vertex coordinate, column =
/// 3*joint + coordinate). Used to chain intersection-loss gradients through
/// the envelope.
struct MeshWithJacobian {
  HandMesh mesh;
  std::vector<std::array<double, 3 * 63>> jacobian;
};

MeshWithJacobian generate_mesh_with_jacobian(const Skeleton& skeleton, MeshVariant variant);
MeshWithJacobian generate_mesh_with_jacobian(const Skeleton& skeleton, MeshVariant variant,
                                             const OffsetTable& offsets);

/// Exact combinatorial closed-manifold checks. Diagnostics, never throws.
struct WatertightReport {
  bool is_closed = false;    // every edge shared by exactly two faces
  bool is_oriented = false;  // shared edges traversed in opposite directions
  int euler_char = 0;        // V - E + F
  std::vector<std::string> defects;

  bool ok() const { return is_closed && is_oriented && euler_char == 2 && defects.empty(); }
};

WatertightReport validate_watertight(const HandMesh& m);

/// All mesh vertices as a PointSet tagged MeshSurface (no copy drift).
PointSet mesh_surface_pointset(const HandMesh& m);

/// Wavefront OBJ, v/f records only, triangles, 1-based indices.
void export_obj(const HandMesh& m, const std::string& path);
HandMesh import_obj(const std::string& path);

}  // namespace handocc
