// Copyright (c) 2026 The bagrad authors. All rights reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Bipartite patch-frame graph: frames with pose estimates and ground truth,
// patches (pixel center + depth) anchored to a source frame, and edges from
// each patch to nearby target frames carrying revised targets and weights.

#pragma once

#include <vector>

#include "bagrad/camera.hpp"
#include "bagrad/lie.hpp"

namespace bagrad {

struct Frame {
  int index = 0;
  Posed pose;     // current estimate, world-to-camera
  Posed gt_pose;  // ground truth
};

struct Patch {
  int id = 0;
  int source_frame = 0;
  Vec2d center = Vec2d::Zero();  // pixel coordinates in the source frame
  double depth = 1.0;            // estimate, meters
  double gt_depth = 1.0;
};

struct Edge {
  int patch = 0;         // index into PatchGraph::patches
  int target_frame = 0;  // index into PatchGraph::frames
  Vec2d target = Vec2d::Zero();     // revised target coordinates p_bar
  Vec2d weight = Vec2d::Ones();     // confidence in [0,1] per component
  Vec2d gt_target = Vec2d::Zero();  // reprojection under ground truth
};

struct PatchGraph {
  Intrinsicsd intrinsics;
  std::vector<Frame> frames;
  std::vector<Patch> patches;
  std::vector<Edge> edges;

  int source_of(const Edge& e) const { return patches[e.patch].source_frame; }
};

// Connects every patch to all frames within `radius` of its source frame
// (self-edges excluded). Existing edges are discarded; the result is
// ordered by (patch, target_frame) and therefore deterministic.
PatchGraph build_edges(const PatchGraph& g, int radius);

// Fills gt_target per edge by reprojecting with ground-truth poses and
// depths. Edges that land behind the target camera are removed.
PatchGraph gt_targets(const PatchGraph& g);

// Subgraph restricted to frames [first, first + count), re-indexed to start
// at 0, with only the edges whose patch source and target frame both lie
// inside the window. Throws ConfigError on an empty or out-of-range window.
PatchGraph window(const PatchGraph& g, int first, int count);

// Structural and invariant check used by tests and file loading.
void validate(const PatchGraph& g);

}  // namespace bagrad
