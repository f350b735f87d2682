// Copyright (c) 2026 The bagrad authors. All rights reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0

#include "bagrad/synth.hpp"

#include <algorithm>
#include <cmath>

#include "bagrad/errors.hpp"
#include "bagrad/rng.hpp"

namespace bagrad {

namespace {

constexpr int kPatchRetryBudget = 200;

// A patch is visible in a frame if it lands in front of the camera and
// within half an image size of the borders.
bool target_visible(const Reprojection<double>& r, const SynthConfig& cfg) {
  if (!r.valid) return false;
  const double mx = 0.5 * cfg.width;
  const double my = 0.5 * cfg.height;
  return r.uv.x() >= -mx && r.uv.x() <= cfg.width + mx && r.uv.y() >= -my &&
         r.uv.y() <= cfg.height + my;
}

}  // namespace

SynthScene generate_scene(const SynthConfig& cfg) {
  if (cfg.n_frames < 1 || cfg.patches_per_frame < 0 ||
      cfg.outlier_frac < 0.0 || cfg.outlier_frac > 1.0 ||
      cfg.sigma_inlier < 0.0 || cfg.sigma_outlier < 0.0 ||
      !(cfg.depth_min > 0.0) || !(cfg.depth_max >= cfg.depth_min)) {
    throw ConfigError("generate_scene: invalid SynthConfig");
  }

  SynthScene out;
  PatchGraph& g = out.graph;
  g.intrinsics = cfg.intrinsics;

  // Ground-truth trajectory: integrate small random twists from identity.
  Philox traj_rng(cfg.seed, stream_id(Stream::kTrajectory));
  Posed pose = Posed::identity();
  for (int j = 0; j < cfg.n_frames; ++j) {
    Frame f;
    f.index = j;
    f.gt_pose = pose;
    f.pose = pose;  // estimates start at ground truth
    g.frames.push_back(f);
    Twistd xi;
    for (int c = 0; c < 3; ++c) xi(c) = cfg.step_trans * traj_rng.gaussian();
    for (int c = 0; c < 3; ++c) {
      xi(3 + c) = cfg.step_rot * traj_rng.gaussian();
    }
    pose = pose_compose(se3_exp(xi), pose);
  }

  // Patches, resampled until all incident frames see them.
  for (int i = 0; i < cfg.n_frames; ++i) {
    const int j_lo = std::max(0, i - cfg.radius);
    const int j_hi = std::min(cfg.n_frames - 1, i + cfg.radius);
    for (int s = 0; s < cfg.patches_per_frame; ++s) {
      Philox rng(cfg.seed, stream_id(Stream::kPatches,
                                     static_cast<std::uint64_t>(i),
                                     static_cast<std::uint64_t>(s)));
      bool placed = false;
      for (int attempt = 0; attempt < kPatchRetryBudget; ++attempt) {
        Patch p;
        p.id = static_cast<int>(g.patches.size());
        p.source_frame = i;
        p.center = Vec2d(rng.uniform(0.0, cfg.width),
                         rng.uniform(0.0, cfg.height));
        p.gt_depth = rng.uniform(cfg.depth_min, cfg.depth_max);
        p.depth = p.gt_depth;
        bool visible = true;
        for (int j = j_lo; j <= j_hi && visible; ++j) {
          if (j == i) continue;
          const Reprojection<double> r =
              try_reproject(g.frames[i].gt_pose, g.frames[j].gt_pose,
                            p.center, p.gt_depth, cfg.intrinsics);
          visible = target_visible(r, cfg);
        }
        if (visible) {
          g.patches.push_back(p);
          placed = true;
          break;
        }
      }
      if (!placed) {
        throw InfeasibleConfigError(
            "generate_scene: patch retry budget exhausted; trajectory too "
            "aggressive for the configured depth range");
      }
    }
  }

  g = build_edges(g, cfg.radius);
  g = gt_targets(g);

  // Observed targets: gt target plus inlier or outlier pixel noise, drawn
  // from noise_seed so experiments can resample the corruption pattern on a
  // fixed scene geometry.
  const std::uint64_t noise_seed =
      cfg.noise_seed != 0 ? cfg.noise_seed : cfg.seed;
  out.labels.outlier.resize(g.edges.size());
  out.labels.applied_noise.resize(g.edges.size());
  for (size_t e = 0; e < g.edges.size(); ++e) {
    Philox rng(noise_seed,
               stream_id(Stream::kEdgeNoise, static_cast<std::uint64_t>(e)));
    const bool outlier = rng.uniform() < cfg.outlier_frac;
    const double sigma = outlier ? cfg.sigma_outlier : cfg.sigma_inlier;
    const Vec2d noise(sigma * rng.gaussian(), sigma * rng.gaussian());
    g.edges[e].target = g.edges[e].gt_target + noise;
    g.edges[e].weight = Vec2d::Ones();
    out.labels.outlier[e] = outlier;
    out.labels.applied_noise[e] = noise;
  }
  return out;
}

PatchGraph perturb_depths(const PatchGraph& g,
                          const std::vector<int>& patch_indices, double sigma,
                          std::uint64_t seed, double d_min, double d_max) {
  PatchGraph out = g;
  if (sigma == 0.0) return out;
  for (const int k : patch_indices) {
    Philox rng(seed, stream_id(Stream::kDepthPerturb,
                               static_cast<std::uint64_t>(k)));
    out.patches[k].depth = std::clamp(
        out.patches[k].depth * std::exp(sigma * rng.gaussian()), d_min, d_max);
  }
  return out;
}

PatchGraph perturb_depths_on_frame(const PatchGraph& g, int frame,
                                   double sigma, std::uint64_t seed,
                                   double d_min, double d_max) {
  std::vector<int> indices;
  for (int k = 0; k < static_cast<int>(g.patches.size()); ++k) {
    if (g.patches[k].source_frame == frame) indices.push_back(k);
  }
  return perturb_depths(g, indices, sigma, seed, d_min, d_max);
}

PatchGraph perturb_pose(const PatchGraph& g, int frame, double sigma_t,
                        double sigma_r, std::uint64_t seed) {
  PatchGraph out = g;
  if (sigma_t == 0.0 && sigma_r == 0.0) return out;
  Philox rng(seed, stream_id(Stream::kPosePerturb,
                             static_cast<std::uint64_t>(frame)));
  Twistd xi;
  for (int c = 0; c < 3; ++c) xi(c) = sigma_t * rng.gaussian();
  for (int c = 0; c < 3; ++c) xi(3 + c) = sigma_r * rng.gaussian();
  out.frames[frame].pose =
      pose_compose(se3_exp(xi), out.frames[frame].pose);
  return out;
}

}  // namespace bagrad
