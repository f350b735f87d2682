// Copyright (c) 2026 The bagrad authors. All rights reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Gradient-variance analysis: SNR metrics, the linearization-noise sweep,
// flow-loss interference sweeps, the weighted-vs-unweighted batch SNR
// study, and the scalar weighted-least-squares toy model, plus the central
// finite-difference oracle shared by the test suites.

#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "bagrad/ba_solver.hpp"
#include "bagrad/csv.hpp"
#include "bagrad/synth.hpp"

namespace bagrad {

// Central finite differences of a scalar function, coordinate by
// coordinate. Throws ConfigError if the function returns a non-finite
// value anywhere on the stencil.
Eigen::VectorXd fd_gradient(
    const std::function<double(const Eigen::VectorXd&)>& f,
    const Eigen::VectorXd& x, double h);

// 10 log10(||clean|| / ||noisy - clean||). Returns +infinity when the
// deviation is zero; CSV emission maps that to a sentinel row.
double snr_db(const Eigen::VectorXd& clean_grad,
              const Eigen::VectorXd& noisy_grad);

// ||mean g|| / mean_i ||g_i - mean g||; +infinity when all gradients agree.
double batch_snr(const std::vector<Eigen::VectorXd>& grads);

struct SnrPoint {
  double noise_level = 0.0;  // sigma, or batch index for training-style runs
  std::string loss_tag;      // flow | pose | weighted-flow
  std::uint64_t seed = 0;
  double snr = 0.0;
  bool sentinel = false;
};

struct GradErrorPoint {
  double noise_level = 0.0;
  std::string group_tag;  // variable group the error is averaged over
  std::uint64_t seed = 0;
  double value = 0.0;
};

// ---------------------------------------------------------------------------
// Linearization-noise sweep: solve, then recompute only the backward-pass
// linearization at log-normally perturbed depths and compare the flow- and
// pose-loss input gradients against the unperturbed backward pass.
// Uses the block-separated backward form (the printed gradient
// expressions); upstream gradients always come from the unnoised losses.

struct LinearizationConfig {
  SynthConfig scene;
  std::vector<double> sigmas{0.0, 0.05, 0.1, 0.2, 0.4, 0.8, 1.6};
  std::vector<std::uint64_t> seeds;
  int ba_iters = 15;
  double damping = 1e-4;
  int jobs = 1;
};

std::vector<SnrPoint> exp_linearization(const LinearizationConfig& cfg);

// ---------------------------------------------------------------------------
// Flow-loss interference: perturb a subset of the solved state right before
// the flow loss and record the mean gradient deviation on the untouched
// variable groups.

enum class InterferenceTarget {
  kDepthSubset,  // log-normal noise on the first frame's patch depths
  kFirstPose,    // left-multiplied twist noise on frame 0's pose
};

struct InterferenceConfig {
  SynthConfig scene;
  InterferenceTarget target = InterferenceTarget::kDepthSubset;
  std::vector<double> sigmas{0.0, 0.02, 0.05, 0.1, 0.2, 0.4, 0.8};
  std::vector<std::uint64_t> seeds;
  int ba_iters = 15;
  double damping = 1e-4;
  // Rotation noise scale relative to sigma for the first-pose target.
  double rot_scale = 0.25;
  int jobs = 1;
};

std::vector<GradErrorPoint> exp_flow_interference(
    const InterferenceConfig& cfg);

// ---------------------------------------------------------------------------
// Batch SNR of the predictor flow-head gradients under the plain and
// weighted flow losses, over seeded batches of outlier-bearing scenes.
// Weights come either from the corruption labels (well-separated oracle
// weights) or from the predictor's weight head.

struct WeightedSnrConfig {
  SynthConfig scene;          // outlier_frac sets the planted outlier rate
  int batch_size = 32;        // members share geometry, differ in corruption
  int n_batches = 50;
  bool oracle_weights = true;
  double w_inlier = 0.95;
  double w_outlier = 0.01;
  int ba_iters = 1;
  double damping = 1e-4;
  // Shared mid-training state offset from ground truth per batch.
  double state_pose_offset = 0.10;   // meters (rotation takes half)
  double state_depth_offset = 0.30;  // log-depth units
  int predictor_width = 16;
  std::uint64_t theta_seed = 7;
  int jobs = 1;
};

std::vector<SnrPoint> exp_weighted_snr(const WeightedSnrConfig& cfg);

// ---------------------------------------------------------------------------
// Scalar weighted-least-squares toy model.

// Weighted mean (sum sigma_i fhat_i) / (sum sigma_i). Throws ConfigError on
// an all-zero weight vector.
double toy_wls_solve(const std::vector<double>& fhat,
                     const std::vector<double>& sigma);

// Gradient of |f_gt - f*| w.r.t. each weight:
//   -sign(f* - f_gt) * (1 / sum sigma) * (f* - fhat_i)
// All zeros at the f* == f_gt subgradient point.
std::vector<double> toy_weight_grad(const std::vector<double>& fhat,
                                    const std::vector<double>& sigma,
                                    double f_gt);

struct ToyBiasConfig {
  int n_points = 20;
  double outlier_frac = 0.2;
  double outlier_offset = 5.0;
  double sigma_inlier = 0.1;
  double f_gt = 0.0;
  double lr = 2.0;
  int steps = 1000;
  double clip_min = -0.01;
  double clip_max = 0.01;
  std::vector<std::uint64_t> seeds;
};

struct ToyBiasPoint {
  int step = 0;
  std::string arm;  // control | noclip | clip
  std::uint64_t seed = 0;
  double mean_weight = 0.0;
};

// Gradient descent on sigmoid-parameterized weights under the toy weight
// gradients, resampling the observations each step. Arms: control (no
// outliers), noclip (outliers, unclipped), clip (outliers, gradients
// clamped to [clip_min, clip_max] before the sigmoid chain rule).
std::vector<ToyBiasPoint> toy_bias_experiment(const ToyBiasConfig& cfg);

// ---------------------------------------------------------------------------
// CSV emission with the shared schema (one file per experiment).

std::vector<CsvRow> to_rows(const std::string& experiment,
                            const std::vector<SnrPoint>& points);
std::vector<CsvRow> to_rows(const std::string& experiment,
                            const std::vector<GradErrorPoint>& points);
std::vector<CsvRow> to_rows(const std::string& experiment,
                            const std::vector<ToyBiasPoint>& points);

}  // namespace bagrad
