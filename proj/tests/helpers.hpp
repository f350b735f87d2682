// Copyright (c) 2026 The bagrad authors. All rights reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0

#pragma once

#include <cstdint>

#include "bagrad/lie.hpp"
#include "bagrad/rng.hpp"
#include "bagrad/synth.hpp"

namespace bagrad::testing {

inline Twistd random_twist(Philox& rng, double trans_scale,
                           double rot_scale) {
  Twistd xi;
  for (int c = 0; c < 3; ++c) xi(c) = trans_scale * rng.gaussian();
  Vec3d w;
  for (int c = 0; c < 3; ++c) w(c) = rng.gaussian();
  const double target = rot_scale * rng.uniform();
  if (w.norm() > 1e-12) w *= target / w.norm();
  xi.tail<3>() = w;
  return xi;
}

inline Posed random_pose(Philox& rng, double trans_scale = 1.0,
                         double rot_scale = M_PI - 0.2) {
  return se3_exp(random_twist(rng, trans_scale, rot_scale));
}

// Small, well-behaved scene configuration shared by unit tests.
inline SynthConfig tiny_scene_config(std::uint64_t seed, int n_frames = 4,
                                     int patches_per_frame = 4) {
  SynthConfig cfg;
  cfg.n_frames = n_frames;
  cfg.patches_per_frame = patches_per_frame;
  cfg.radius = 3;
  cfg.sigma_inlier = 0.4;
  cfg.outlier_frac = 0.0;
  cfg.seed = seed;
  return cfg;
}

}  // namespace bagrad::testing
