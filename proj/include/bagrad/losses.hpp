// Copyright (c) 2026 The bagrad authors. All rights reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Training losses over BA outputs: per-edge flow error against ground-truth
// targets (plain and confidence-weighted with a stop-gradient on the
// weights), the pairwise relative pose loss, loss combination rules, and
// the heuristic down-weighting rule.

#pragma once

#include <vector>

#include "bagrad/ba_backward.hpp"
#include "bagrad/scene.hpp"

namespace bagrad {

struct LossResult {
  double value = 0.0;
  UpstreamGrads grads;  // w.r.t. BA output poses (twists) and depths
};

struct LossReport {
  double flow = 0.0;
  double pose = 0.0;
  double total = 0.0;
  double beta = 1.0;
  UpstreamGrads grads;
};

// Sum over edges of the Euclidean (not squared) distance between the
// ground-truth target and the reprojection at the graph's current
// estimates. Gradients aggregate per depth and per pose over all incident
// edges; edges with error below 1e-12 contribute zero gradient.
LossResult flow_loss(const PatchGraph& g);
LossResult flow_loss(const PatchGraph& g, const BASolution& sol);

// Weighted flow loss: per-edge sqrt(r^T diag(sigma) r) with r the error
// against the ground-truth target. sigma is treated as a constant
// (stop-gradient): this operation never reports gradients w.r.t. sigma.
LossResult weighted_flow_loss(const PatchGraph& g,
                              const std::vector<Vec2d>& sigma);
LossResult weighted_flow_loss(const PatchGraph& g, const BASolution& sol,
                              const std::vector<Vec2d>& sigma);

// Sum over unordered frame pairs of the twist norm of the relative pose
// error (G_i G_j^-1)^-1 (T_i T_j^-1).
LossResult pose_loss(const std::vector<Frame>& frames);
LossResult pose_loss(const std::vector<Frame>& frames, const BASolution& sol);

// Fixed combination 10 * flow + 0.1 * pose.
double total_loss_fixed(double flow, double pose);

// Balance coefficient: ratio of parameter-space gradient norms
// ||grad_pose|| / ||grad_flow||. Throws DegenerateBalanceError when the
// flow gradient norm is zero; callers keep the previous coefficient.
double balance_beta(const Eigen::VectorXd& grad_pose_params,
                    const Eigen::VectorXd& grad_flow_params);

// True once the pose loss should be included for this inner iteration.
inline bool pose_loss_mask(int inner_iter, int k_skip) {
  return inner_iter >= k_skip;
}

// Heuristic weights 1 / (4 e / m + 1) from per-edge error norms
// e = ||gt - estimate||, with m their median (middle pair averaged for
// even counts). m == 0 yields all-ones weights. Both weight components of
// an edge get the same value.
std::vector<Vec2d> heuristic_weights(const std::vector<Vec2d>& gt_targets,
                                     const std::vector<Vec2d>& estimates);

}  // namespace bagrad
