// Copyright (c) 2026 The bagrad authors. All rights reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Seeded synthetic scenes: smooth random trajectories, uniformly sampled
// patches with visibility enforcement, ground-truth targets, and observed
// targets corrupted by inlier noise plus Bernoulli-planted outliers.
// Everything draws from counter-based streams so scenes are reproducible
// bit-exactly from (config, seed).

#pragma once

#include <cstdint>
#include <vector>

#include "bagrad/scene.hpp"

namespace bagrad {

struct SynthConfig {
  int n_frames = 8;
  int patches_per_frame = 6;
  int width = 160;
  int height = 120;
  Intrinsicsd intrinsics{120.0, 120.0, 80.0, 60.0};
  int radius = 3;             // edge radius in frames
  double step_trans = 0.08;   // per-frame translation scale, meters
  double step_rot = 0.03;     // per-frame rotation scale, radians
  double depth_min = 4.0;     // gt depth range, meters
  double depth_max = 12.0;
  double sigma_inlier = 0.5;  // pixels
  double outlier_frac = 0.0;
  double sigma_outlier = 20.0;  // pixels
  std::uint64_t seed = 0;
  // Separate stream for target corruption; 0 means "derive from seed".
  // Lets experiments hold the geometry fixed while resampling outliers.
  std::uint64_t noise_seed = 0;
};

struct CorruptionLabels {
  std::vector<bool> outlier;        // per edge
  std::vector<Vec2d> applied_noise;  // per edge
};

struct SynthScene {
  PatchGraph graph;
  CorruptionLabels labels;
};

// Builds a full scene: gt poses from integrated random twists, patches
// resampled until every incident edge is visible (cheirality-valid and
// within half an image size of the borders), gt targets, and observed
// targets p_bar = p_star + noise. Estimates are initialized at ground
// truth; trainers re-initialize them per schedule. Throws
// InfeasibleConfigError when the per-patch retry budget is exhausted.
SynthScene generate_scene(const SynthConfig& cfg);

// Multiplicative log-normal depth noise exp(N(0, sigma^2)) on the selected
// patches, clamped to [d_min, d_max].
PatchGraph perturb_depths(const PatchGraph& g,
                          const std::vector<int>& patch_indices, double sigma,
                          std::uint64_t seed, double d_min = 0.1,
                          double d_max = 1000.0);

// Same, selecting every patch whose source frame matches.
PatchGraph perturb_depths_on_frame(const PatchGraph& g, int frame,
                                   double sigma, std::uint64_t seed,
                                   double d_min = 0.1, double d_max = 1000.0);

// Left-multiplies exp(xi) onto one frame's pose estimate, with
// xi ~ N(0, diag(sigma_t^2 I, sigma_r^2 I)).
PatchGraph perturb_pose(const PatchGraph& g, int frame, double sigma_t,
                        double sigma_r, std::uint64_t seed);

}  // namespace bagrad
