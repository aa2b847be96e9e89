// Copyright 2026 The handocc Authors.
// Distributed under the Apache License, Version 2.0.
// See the accompanying LICENSE file or http://www.apache.org/licenses/LICENSE-2.0

#pragma once

#include <json.hpp>
#include <string>

#include "handocc/mesh.hpp"
#include "handocc/occnet.hpp"
#include "handocc/occupancy.hpp"
#include "handocc/refine.hpp"

namespace handocc::io {

using json = nlohmann::json;
using ordered_json = nlohmann::ordered_json;

// --- files ---------------------------------------------------------------

/// Parses a JSON file; throws ParseError with 1-based line/column on failure.
json load_json_file(const std::string& path);

/// Atomic write (temp file + rename).
void write_text_atomic(const std::string& path, const std::string& content);
void write_json_atomic(const std::string& path, const ordered_json& j);

// --- kinematics ------------------------------------------------------------

ordered_json to_json(const Skeleton& s);
Skeleton skeleton_from_json(const json& j);

ordered_json to_json(const HandPose& p);
HandPose pose_from_json(const json& j);

ordered_json to_json(const PairPose& p);

/// A pair file holds either two poses ({"right": pose, "left": pose,
/// "relative_offset": [...]}) or two skeletons ({"right": skeleton,
/// "left": skeleton}).
struct PairInput {
  bool is_poses = false;
  PairPose poses;            // when is_poses
  Skeleton skeleton_right;   // when !is_poses
  Skeleton skeleton_left;
};
PairInput pair_from_json(const json& j);

// --- mesh offsets ----------------------------------------------------------

ordered_json to_json(const OffsetTable& t);
OffsetTable offset_table_from_json(const json& j, MeshVariant variant);

// --- occupancy grids ---------------------------------------------------------

/// JSON header plus run-length-encoded boolean mask (prob > 0.5).
ordered_json grid_to_json(const OccupancyGrid& g);
OccupancyGrid grid_from_json(const json& j);

/// CSV of x,y,z,prob rows (header included).
std::string grid_to_csv(const OccupancyGrid& g);

// --- configs ---------------------------------------------------------------

ordered_json to_json(const LossConfig& cfg);
LossConfig loss_config_from_json(const json& j);

ordered_json to_json(const TrainConfig& cfg);
TrainConfig train_config_from_json(const json& j);

}  // namespace handocc::io
