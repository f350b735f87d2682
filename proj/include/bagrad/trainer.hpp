// Copyright (c) 2026 The bagrad authors. All rights reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Alternating predict-then-solve inner loop, the outer training loop over
// predictor parameters, the variance-reduction strategy variants, and the
// Sim(3)-aligned trajectory error metric.
//
// State (poses, depths, revised targets) is detached between inner
// iterations: each iterate's loss backpropagates through that iterate's BA
// solve and predictor call only, mirroring the per-iterate supervision of
// the reference pipelines.

#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "bagrad/ba_backward.hpp"
#include "bagrad/ba_solver.hpp"
#include "bagrad/losses.hpp"
#include "bagrad/predictor.hpp"
#include "bagrad/synth.hpp"

namespace bagrad {

enum class Strategy {
  kUnweighted,   // plain flow loss
  kWeighted,     // confidence-weighted flow loss, stop-gradient on weights
  kGtInterp,     // iterates interpolated toward ground truth, annealed
  kGradCorrect,  // flow gradients sign-matched against the gt direction
  kHeuristic,    // median-based heuristic weights in the flow loss
};

Strategy parse_strategy(const std::string& name);
std::string strategy_name(Strategy s);

struct TrainConfig {
  Strategy strategy = Strategy::kWeighted;
  SynthConfig scene;

  int inner_iters = 8;       // batch-optimization iterations
  bool streaming = false;    // extend one frame at a time after init
  int init_frames = 8;       // streaming batch-init window
  int per_frame_iters = 1;   // iterations per appended frame

  BAConfig ba;               // inner solver settings (n_iters = 2 default)

  int k_skip = 2;            // pose loss masked for inner_iter < k_skip
  bool balance = true;       // Eq.-style balanced total; false = 10/0.1 fixed
  int beta_period = 50;
  bool loss_on_every_iterate = true;

  double lr = 0.05;
  double momentum = 0.9;
  bool adam = false;         // adaptive optimizer behind a flag
  double grad_clip_min = -0.01;  // weight-gradient clamp
  double grad_clip_max = 0.01;

  int batch_size = 6;
  int total_iters = 400;
  int val_period = 20;
  int n_val_scenes = 6;
  int predictor_width = 16;
  std::uint64_t seed = 1;
  int jobs = 1;
};

struct InnerIterate {
  PatchGraph graph;  // state fed into this iterate's solve (targets/weights
                     // updated, poses/depths from the previous iterate)
  std::vector<FeatureVec> features;
  std::vector<Vec2d> delta;
  std::vector<Vec2d> sigma;
  BASolution sol;
};

// Runs the alternating inner loop from identity poses and seeded random
// depths. `alpha` is the ground-truth interpolation coefficient for the
// gt-interp strategy (ignored otherwise).
std::vector<InnerIterate> inner_loop(const PatchGraph& scene,
                                     const Eigen::VectorXd& theta,
                                     const TrainConfig& cfg,
                                     std::uint64_t scene_seed,
                                     double alpha = 0.0);

struct OuterStepOptions {
  double beta = 1.0;   // flow coefficient under the balanced total
  double alpha = 0.0;  // gt-interp anneal coefficient
  bool want_separated = false;       // pose/flow parameter-gradient norms
  bool want_flow_head_grads = false;  // per-scene flow-head gradient vectors
  bool apply_weight_clip = true;
};

struct OuterStepResult {
  Eigen::VectorXd grad;  // mean over surviving scenes
  std::vector<LossReport> reports;
  int n_failed = 0;
  // Filled when want_separated: full-chain parameter gradients of the pose
  // and flow loss terms alone.
  Eigen::VectorXd grad_pose_path;
  Eigen::VectorXd grad_flow_path;
  std::vector<Eigen::VectorXd> flow_head_grads;  // per surviving scene
};

OuterStepResult outer_step(const std::vector<PatchGraph>& batch,
                           const std::vector<std::uint64_t>& scene_seeds,
                           const Eigen::VectorXd& theta,
                           const TrainConfig& cfg,
                           const OuterStepOptions& opt);

struct TrainPoint {
  int iter = 0;
  double loss_flow = 0.0;
  double loss_pose = 0.0;
  double loss_total = 0.0;
  double beta = 1.0;
  bool has_val = false;
  double val_flow_err = 0.0;
  double val_ate = 0.0;
  double batch_snr_value = 0.0;
  bool batch_snr_sentinel = false;
};

struct TrainResult {
  std::vector<TrainPoint> curve;
  Eigen::VectorXd theta;
  bool diverged = false;
  std::string divergence_note;
};

TrainResult train(const TrainConfig& cfg);

// Validation metrics for a parameter vector: mean per-edge flow error
// against ground-truth targets at the final inner iterate, and mean
// Sim(3)-aligned ATE, over the config's held-out seeded scene set.
struct ValMetrics {
  double flow_err = 0.0;
  double ate = 0.0;
};
ValMetrics validate(const Eigen::VectorXd& theta, const TrainConfig& cfg);

// RMSE of camera-center residuals after Sim(3) alignment of the two
// trajectories.
double ate(const std::vector<Posed>& est, const std::vector<Posed>& gt);

// Strategy helpers (exposed for tests).
// Moves poses along the geodesic toward ground truth and targets toward
// the gt targets by fraction alpha; alpha = 0 is the identity.
void gt_interp_state(PatchGraph& g, double alpha);
// Zeroes flow-gradient components whose sign disagrees with the gradient
// of the distance to the ground-truth target, (target - gt_target)/||.||.
void grad_correct(InputGrads& grads, const PatchGraph& g);

// Deterministic seed derivation for training and validation scenes.
std::uint64_t train_scene_seed(const TrainConfig& cfg, int iter, int slot);
std::uint64_t val_scene_seed(const TrainConfig& cfg, int slot);

}  // namespace bagrad
