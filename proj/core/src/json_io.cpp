// Copyright 2026 The handocc Authors.
// Distributed under the Apache License, Version 2.0.
// See the accompanying LICENSE file or http://www.apache.org/licenses/LICENSE-2.0

#include "handocc/json_io.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include "handocc/error.hpp"

namespace handocc::io {

namespace {

std::pair<int, int> line_col_of_offset(const std::string& text, size_t byte) {
  int line = 1, col = 1;
  for (size_t i = 0; i < byte && i < text.size(); ++i) {
    if (text[i] == '\n') {
      ++line;
      col = 1;
    } else {
      ++col;
    }
  }
  return {line, col};
}

json expect_array(const json& j, const char* key, size_t n, const char* what) {
  if (!j.contains(key)) throw ParseError(std::string(what) + ": missing field '" + key + "'");
  const json& a = j.at(key);
  if (!a.is_array() || a.size() != n)
    throw ParseError(std::string(what) + ": expected " + std::to_string(n) + " entries in '" + key +
                     "', got " + std::to_string(a.is_array() ? a.size() : 0));
  return a;
}

Vec3d vec3_from(const json& a, const char* what) {
  if (!a.is_array() || a.size() != 3) throw ParseError(std::string(what) + ": expected [x,y,z]");
  return {a[0].get<double>(), a[1].get<double>(), a[2].get<double>()};
}

json vec3_to(const Vec3d& v) { return json::array({v.x, v.y, v.z}); }

Side side_from(const json& j, const char* what) {
  if (!j.contains("side")) throw ParseError(std::string(what) + ": missing field 'side'");
  const std::string s = j.at("side").get<std::string>();
  if (s == "right") return Side::Right;
  if (s == "left") return Side::Left;
  throw ParseError(std::string(what) + ": side must be \"right\" or \"left\"");
}

}  // namespace

// --- files -------------------------------------------------------------------

json load_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  const std::string text = buf.str();
  try {
    return json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    const auto [line, col] = line_col_of_offset(text, e.byte > 0 ? e.byte - 1 : 0);
    throw ParseError(path + ": " + e.what(), line, col);
  }
}

void write_text_atomic(const std::string& path, const std::string& content) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw Error("cannot open " + tmp + " for writing");
    out << content;
    if (!out) throw Error("write failed for " + tmp);
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0)
    throw Error("cannot rename " + tmp + " to " + path);
}

void write_json_atomic(const std::string& path, const ordered_json& j) {
  write_text_atomic(path, j.dump(2) + "\n");
}

// --- kinematics ----------------------------------------------------------------

ordered_json to_json(const Skeleton& s) {
  ordered_json j;
  j["side"] = to_string(s.side);
  auto joints = json::array();
  for (const auto& p : s.joints) joints.push_back(vec3_to(p));
  j["joints"] = joints;
  return j;
}

Skeleton skeleton_from_json(const json& j) {
  Skeleton s;
  s.side = side_from(j, "skeleton");
  if (!j.contains("joints") || !j.at("joints").is_array() || j.at("joints").size() != 21)
    throw ParseError("skeleton: expected 21 joints, got " +
                     std::to_string(j.contains("joints") && j.at("joints").is_array()
                                        ? j.at("joints").size()
                                        : 0));
  for (int i = 0; i < 21; ++i) s.joints[i] = vec3_from(j.at("joints")[i], "skeleton joint");
  s.validate();
  return s;
}

ordered_json to_json(const HandPose& p) {
  ordered_json j;
  j["side"] = to_string(p.side);
  j["global_rotation"] = vec3_to(p.global_rotation);
  j["global_translation"] = vec3_to(p.global_translation);
  j["joint_angles"] = p.joint_angles;
  j["bone_lengths"] = p.bone_lengths;
  return j;
}

HandPose pose_from_json(const json& j) {
  HandPose p;
  p.side = side_from(j, "pose");
  p.global_rotation = vec3_from(j.at("global_rotation"), "pose global_rotation");
  p.global_translation = vec3_from(j.at("global_translation"), "pose global_translation");
  const json angles = expect_array(j, "joint_angles", 20, "pose");
  const json lengths = expect_array(j, "bone_lengths", 20, "pose");
  for (int i = 0; i < 20; ++i) {
    p.joint_angles[i] = angles[i].get<double>();
    p.bone_lengths[i] = lengths[i].get<double>();
  }
  p.validate();
  return p;
}

ordered_json to_json(const PairPose& p) {
  ordered_json j;
  j["right"] = to_json(p.right);
  j["left"] = to_json(p.left);
  j["relative_offset"] = vec3_to(p.relative_offset);
  return j;
}

PairInput pair_from_json(const json& j) {
  if (!j.contains("right") || !j.contains("left"))
    throw ParseError("pair: expected 'right' and 'left' entries");
  PairInput out;
  if (j.at("right").contains("joints")) {
    out.is_poses = false;
    out.skeleton_right = skeleton_from_json(j.at("right"));
    out.skeleton_left = skeleton_from_json(j.at("left"));
    if (out.skeleton_right.side != Side::Right || out.skeleton_left.side != Side::Left)
      throw ParseError("pair: 'right' must be a right-side entry and 'left' a left-side one");
  } else {
    out.is_poses = true;
    HandPose right = pose_from_json(j.at("right"));
    HandPose left = pose_from_json(j.at("left"));
    Vec3d offset{0, 0, 0};
    if (j.contains("relative_offset")) offset = vec3_from(j.at("relative_offset"), "pair offset");
    if (right.side != Side::Right || left.side != Side::Left)
      throw ParseError("pair: 'right' must be a right-side entry and 'left' a left-side one");
    out.poses = PairPose::make(std::move(right), std::move(left), offset);
  }
  return out;
}

// --- mesh offsets -----------------------------------------------------------

ordered_json to_json(const OffsetTable& t) {
  ordered_json j;
  auto fingers = json::array();
  for (const auto& f : t.fingers) {
    ordered_json fj;
    fj["tip_cap"] = f.tip_cap;
    auto rings = json::array();
    for (const auto& ring : f.rings) {
      auto r = json::array();
      for (const auto& o : ring.offsets) r.push_back(vec3_to(o));
      rings.push_back(r);
    }
    fj["rings"] = rings;
    fingers.push_back(fj);
  }
  j["fingers"] = fingers;
  j["palm"] = {{"thickness", t.palm.thickness},
               {"wrist_halfwidth", t.palm.wrist_halfwidth},
               {"wrist_drop", t.palm.wrist_drop},
               {"wrist_bulge", t.palm.wrist_bulge},
               {"side_margin", t.palm.side_margin},
               {"knuckle_inset", t.palm.knuckle_inset},
               {"valley_drop", t.palm.valley_drop}};
  return j;
}

OffsetTable offset_table_from_json(const json& j, MeshVariant variant) {
  OffsetTable t = OffsetTable::defaults(variant);
  if (j.contains("fingers")) {
    const json& fingers = j.at("fingers");
    if (!fingers.is_array() || fingers.size() != 5) throw ParseError("offset table: expected 5 fingers");
    for (int f = 0; f < 5; ++f) {
      const json& fj = fingers[f];
      if (fj.contains("tip_cap")) t.fingers[f].tip_cap = fj.at("tip_cap").get<double>();
      if (fj.contains("rings")) {
        const json& rings = fj.at("rings");
        if (rings.size() != t.fingers[f].rings.size())
          throw ParseError("offset table: finger " + std::to_string(f) + " expects " +
                           std::to_string(t.fingers[f].rings.size()) + " rings for this variant");
        for (size_t s = 0; s < t.fingers[f].rings.size(); ++s) {
          const json& ring = rings[s];
          if (!ring.is_array() || ring.size() < 3)
            throw ParseError("offset table: ring size must be >= 3 (this layout uses 8)");
          if (ring.size() != 8)
            throw ParseError("offset table: this layout uses rings of exactly 8 offsets");
          for (int k = 0; k < 8; ++k)
            t.fingers[f].rings[s].offsets[k] = vec3_from(ring[k], "ring offset");
        }
      }
    }
  }
  if (j.contains("palm")) {
    const json& pj = j.at("palm");
    auto get = [&pj](const char* key, double& slot) {
      if (pj.contains(key)) slot = pj.at(key).get<double>();
    };
    get("thickness", t.palm.thickness);
    get("wrist_halfwidth", t.palm.wrist_halfwidth);
    get("wrist_drop", t.palm.wrist_drop);
    get("wrist_bulge", t.palm.wrist_bulge);
    get("side_margin", t.palm.side_margin);
    get("knuckle_inset", t.palm.knuckle_inset);
    get("valley_drop", t.palm.valley_drop);
  }
  t.validate(variant);
  return t;
}

// --- occupancy grids ----------------------------------------------------------

ordered_json grid_to_json(const OccupancyGrid& g) {
  ordered_json j;
  j["bbox_min"] = vec3_to(g.bbox_min);
  j["bbox_max"] = vec3_to(g.bbox_max);
  j["n"] = g.n;
  j["encoding"] = "rle";
  auto runs = json::array();
  size_t i = 0;
  while (i < g.prob.size()) {
    const bool v = g.occupied(i);
    size_t run = 1;
    while (i + run < g.prob.size() && g.occupied(i + run) == v) ++run;
    runs.push_back(json::array({v ? 1 : 0, run}));
    i += run;
  }
  j["runs"] = runs;
  return j;
}

OccupancyGrid grid_from_json(const json& j) {
  OccupancyGrid g;
  g.bbox_min = vec3_from(j.at("bbox_min"), "grid bbox_min");
  g.bbox_max = vec3_from(j.at("bbox_max"), "grid bbox_max");
  g.n = j.at("n").get<int>();
  if (g.n < 2) throw ParseError("grid: n must be >= 2");
  g.prob.reserve(static_cast<size_t>(g.n) * g.n * g.n);
  for (const auto& run : j.at("runs")) {
    const int value = run.at(0).get<int>();
    const size_t count = run.at(1).get<size_t>();
    g.prob.insert(g.prob.end(), count, value ? 1.0f : 0.0f);
  }
  if (g.prob.size() != static_cast<size_t>(g.n) * g.n * g.n)
    throw ParseError("grid: run lengths do not cover n^3 samples");
  return g;
}

std::string grid_to_csv(const OccupancyGrid& g) {
  std::string out = "x,y,z,prob\n";
  char buf[128];
  for (int ix = 0; ix < g.n; ++ix)
    for (int iy = 0; iy < g.n; ++iy)
      for (int iz = 0; iz < g.n; ++iz) {
        const Vec3d p = g.point_at(ix, iy, iz);
        const float pr = g.prob[(static_cast<size_t>(ix) * g.n + iy) * g.n + iz];
        std::snprintf(buf, sizeof(buf), "%.6g,%.6g,%.6g,%.6g\n", p.x, p.y, p.z, pr);
        out += buf;
      }
  return out;
}

// --- configs -------------------------------------------------------------------

ordered_json to_json(const LossConfig& cfg) {
  ordered_json j;
  j["point_set"] = to_string(cfg.point_set);
  j["densify_k"] = cfg.densify_k;
  j["both_hands"] = cfg.both_hands;
  j["truncated"] = cfg.truncated;
  j["weight"] = cfg.weight;
  return j;
}

LossConfig loss_config_from_json(const json& j) {
  LossConfig cfg;
  if (j.contains("point_set")) {
    const std::string s = j.at("point_set").get<std::string>();
    if (s == "sparse")
      cfg = LossConfig::with_point_set(PointSetKind::Sparse21);
    else if (s == "dense")
      cfg = LossConfig::with_point_set(PointSetKind::Dense);
    else if (s == "mesh")
      cfg = LossConfig::with_point_set(PointSetKind::MeshSurface);
    else
      throw ParseError("loss config: point_set must be sparse|dense|mesh");
  }
  if (j.contains("densify_k")) cfg.densify_k = j.at("densify_k").get<int>();
  if (j.contains("both_hands")) cfg.both_hands = j.at("both_hands").get<bool>();
  if (j.contains("truncated")) cfg.truncated = j.at("truncated").get<bool>();
  if (j.contains("weight")) cfg.weight = j.at("weight").get<double>();
  if (cfg.weight < 0) throw ParseError("loss config: weight must be >= 0");
  return cfg;
}

ordered_json to_json(const TrainConfig& cfg) {
  ordered_json j;
  j["samples_per_hand"] = cfg.samples_per_hand;
  j["rotation_augmentation_deg"] = cfg.rotation_augmentation_deg;
  j["point_noise_sigma"] = cfg.point_noise_sigma;
  j["epochs"] = cfg.epochs;
  j["batch_size"] = cfg.batch_size;
  j["learning_rate"] = cfg.learning_rate;
  j["seed"] = cfg.seed;
  j["val_poses_per_epoch"] = cfg.val_poses_per_epoch;
  return j;
}

TrainConfig train_config_from_json(const json& j) {
  TrainConfig cfg;
  auto get = [&j](const char* key, auto& slot) {
    if (j.contains(key)) slot = j.at(key).get<std::decay_t<decltype(slot)>>();
  };
  get("samples_per_hand", cfg.samples_per_hand);
  get("rotation_augmentation_deg", cfg.rotation_augmentation_deg);
  get("point_noise_sigma", cfg.point_noise_sigma);
  get("epochs", cfg.epochs);
  get("batch_size", cfg.batch_size);
  get("learning_rate", cfg.learning_rate);
  get("seed", cfg.seed);
  get("val_poses_per_epoch", cfg.val_poses_per_epoch);
  if (cfg.samples_per_hand < 1) throw ParseError("train config: samples_per_hand must be >= 1");
  if (cfg.point_noise_sigma < 0) throw ParseError("train config: point_noise_sigma must be >= 0");
  return cfg;
}

}  // namespace handocc::io
