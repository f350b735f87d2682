// Copyright (c) 2026 The bagrad authors. All rights reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0

#include "bagrad/scene.hpp"

#include <algorithm>
#include <cstdlib>
#include <string>
#include <unordered_map>

#include "bagrad/errors.hpp"

namespace bagrad {

PatchGraph build_edges(const PatchGraph& g, int radius) {
  PatchGraph out = g;
  out.edges.clear();
  for (int k = 0; k < static_cast<int>(g.patches.size()); ++k) {
    const int i = g.patches[k].source_frame;
    for (int j = std::max(0, i - radius);
         j <= std::min(static_cast<int>(g.frames.size()) - 1, i + radius);
         ++j) {
      if (j == i) continue;
      Edge e;
      e.patch = k;
      e.target_frame = j;
      out.edges.push_back(e);
    }
  }
  return out;
}

PatchGraph gt_targets(const PatchGraph& g) {
  PatchGraph out = g;
  std::vector<Edge> kept;
  kept.reserve(g.edges.size());
  for (Edge e : g.edges) {
    const Patch& p = g.patches[e.patch];
    const Reprojection<double> r = try_reproject(
        g.frames[p.source_frame].gt_pose, g.frames[e.target_frame].gt_pose,
        p.center, p.gt_depth, g.intrinsics);
    if (!r.valid) continue;
    e.gt_target = r.uv;
    kept.push_back(e);
  }
  out.edges = std::move(kept);
  return out;
}

PatchGraph window(const PatchGraph& g, int first, int count) {
  if (count <= 0 || first < 0 ||
      first + count > static_cast<int>(g.frames.size())) {
    throw ConfigError("window: empty or out-of-range frame window");
  }
  PatchGraph out;
  out.intrinsics = g.intrinsics;

  out.frames.reserve(count);
  for (int j = first; j < first + count; ++j) {
    Frame f = g.frames[j];
    f.index = j - first;
    out.frames.push_back(f);
  }

  std::unordered_map<int, int> patch_map;  // old index -> new index
  for (int k = 0; k < static_cast<int>(g.patches.size()); ++k) {
    const int i = g.patches[k].source_frame;
    if (i < first || i >= first + count) continue;
    Patch p = g.patches[k];
    p.source_frame = i - first;
    patch_map.emplace(k, static_cast<int>(out.patches.size()));
    out.patches.push_back(p);
  }

  for (Edge e : g.edges) {
    const auto it = patch_map.find(e.patch);
    if (it == patch_map.end()) continue;
    if (e.target_frame < first || e.target_frame >= first + count) continue;
    e.patch = it->second;
    e.target_frame -= first;
    out.edges.push_back(e);
  }
  return out;
}

void validate(const PatchGraph& g) {
  for (int j = 0; j < static_cast<int>(g.frames.size()); ++j) {
    if (g.frames[j].index != j) {
      throw ConfigError("graph: frame indices must be contiguous from 0");
    }
  }
  if (!(g.intrinsics.fx > 0.0) || !(g.intrinsics.fy > 0.0)) {
    throw ConfigError("graph: focal lengths must be positive");
  }
  for (const Patch& p : g.patches) {
    if (p.source_frame < 0 ||
        p.source_frame >= static_cast<int>(g.frames.size())) {
      throw ConfigError("graph: patch source frame out of range");
    }
    if (!(p.depth > 0.0) || !(p.gt_depth > 0.0)) {
      throw ConfigError("graph: patch depths must be positive");
    }
  }
  for (const Edge& e : g.edges) {
    if (e.patch < 0 || e.patch >= static_cast<int>(g.patches.size())) {
      throw ConfigError("graph: edge patch index out of range");
    }
    if (e.target_frame < 0 ||
        e.target_frame >= static_cast<int>(g.frames.size())) {
      throw ConfigError("graph: edge target frame out of range");
    }
    if (e.target_frame == g.patches[e.patch].source_frame) {
      throw ConfigError("graph: self-edge (target == source frame)");
    }
    for (int c = 0; c < 2; ++c) {
      if (!(e.weight[c] >= 0.0) || !(e.weight[c] <= 1.0)) {
        throw ConfigError("graph: edge weight outside [0,1]");
      }
    }
  }
}

}  // namespace bagrad
