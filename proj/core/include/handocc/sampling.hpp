// Copyright 2026 The handocc Authors.
// Distributed under the Apache License, Version 2.0.
// See the accompanying LICENSE file or http://www.apache.org/licenses/LICENSE-2.0

#pragma once

#include <random>

#include "handocc/refine.hpp"

namespace handocc {

/// Random articulated pose: flexions and abductions inside anatomical-ish
/// ranges, per-bone length scales in [0.8, 1.2] of canonical, uniform random
/// global rotation (angle within +/- pi) and translation within +/- 100 mm.
HandPose random_valid_pose(std::mt19937_64& rng, Side side);

/// Like random_valid_pose but without global placement (identity rotation,
/// wrist at origin).
HandPose random_articulation(std::mt19937_64& rng, Side side);

/// Two hands facing each other with ray-cast-verified properties. Both
/// generators place the left hand opposite the right palm and slide it along
/// the line between palm centers:
///  - make_interacting_pair: minimal gap, zero ray-cast grid intersections;
///  - make_intersecting_pair: pushed together until the ray-cast grid count
///    at n = 40 reaches at least min_count.
PairPose make_interacting_pair(std::mt19937_64& rng);
PairPose make_intersecting_pair(std::mt19937_64& rng, long min_count = 8);

}  // namespace handocc
