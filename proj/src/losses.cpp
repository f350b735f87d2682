// Copyright (c) 2026 The bagrad authors. All rights reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0

#include "bagrad/losses.hpp"

#include <algorithm>
#include <cmath>

#include "bagrad/errors.hpp"

namespace bagrad {

namespace {

constexpr double kZeroResidual = 1e-12;

// Shared accumulation for the plain and weighted flow losses. For each
// valid edge the per-edge value is sqrt(r^T diag(w) r) with r = gt - p_hat,
// and the cotangent on the reprojection is diag(w) (p_hat - gt) / value.
LossResult flow_loss_impl(const PatchGraph& g, const Vec2d* sigma,
                          size_t sigma_stride) {
  LossResult out;
  out.grads = UpstreamGrads::zero(static_cast<int>(g.frames.size()),
                                  static_cast<int>(g.patches.size()));
  for (size_t e = 0; e < g.edges.size(); ++e) {
    const Edge& edge = g.edges[e];
    const Patch& p = g.patches[edge.patch];
    const Vec2d w = sigma ? sigma[e * sigma_stride] : Vec2d::Ones();
    const ProjJacobians<double> jac =
        proj_jacobians(g.frames[p.source_frame].pose,
                       g.frames[edge.target_frame].pose, p.center, p.depth,
                       g.intrinsics);
    if (!jac.valid) continue;
    const Vec2d r = edge.gt_target - jac.reprojection;
    const double value = std::sqrt(r.dot(w.asDiagonal() * r));
    out.value += value;
    if (value < kZeroResidual) continue;  // norm subgradient at 0 taken as 0
    const Vec2d cot = w.cwiseProduct(-r) / value;
    out.grads.pose[p.source_frame] += jac.j_pose_source.transpose() * cot;
    out.grads.pose[edge.target_frame] += jac.j_pose_target.transpose() * cot;
    out.grads.depth[edge.patch] += jac.j_depth.dot(cot);
  }
  return out;
}

}  // namespace

LossResult flow_loss(const PatchGraph& g) {
  return flow_loss_impl(g, nullptr, 0);
}

LossResult flow_loss(const PatchGraph& g, const BASolution& sol) {
  return flow_loss(apply_solution(g, sol));
}

LossResult weighted_flow_loss(const PatchGraph& g,
                              const std::vector<Vec2d>& sigma) {
  if (sigma.size() != g.edges.size()) {
    throw ConfigError("weighted_flow_loss: one weight pair per edge required");
  }
  return flow_loss_impl(g, sigma.data(), 1);
}

LossResult weighted_flow_loss(const PatchGraph& g, const BASolution& sol,
                              const std::vector<Vec2d>& sigma) {
  return weighted_flow_loss(apply_solution(g, sol), sigma);
}

namespace {

LossResult pose_loss_impl(const std::vector<Frame>& frames,
                          const std::vector<Posed>& poses) {
  LossResult out;
  out.grads =
      UpstreamGrads::zero(static_cast<int>(frames.size()), 0);
  const int n = static_cast<int>(frames.size());
  for (int i = 0; i < n; ++i) {
    for (int j = i + 1; j < n; ++j) {
      const Posed gt_rel =
          pose_compose(frames[i].gt_pose, pose_inverse(frames[j].gt_pose));
      const Posed est_rel = pose_compose(poses[i], pose_inverse(poses[j]));
      const Posed err = pose_compose(pose_inverse(gt_rel), est_rel);
      const Twistd xi = se3_log(err);
      const double norm = xi.norm();
      out.value += norm;
      if (norm < kZeroResidual) continue;

      const Vec6d u = xi / norm;
      const Mat6d jl_inv = se3_left_jacobian_inv(xi);
      // Left-perturbing T_i turns err into exp(Adj(gt_rel^-1) eta) err;
      // left-perturbing T_j appends exp(-eta) on the right, i.e. the right
      // Jacobian with Jr^-1(xi) = Jl^-1(-xi).
      const Mat6d adj = se3_adjoint(pose_inverse(gt_rel));
      const Vec6d grad_i = adj.transpose() * (jl_inv.transpose() * u);
      const Mat6d jr_inv = se3_left_jacobian_inv<double>(-xi);
      const Vec6d grad_j = -(jr_inv.transpose() * u);
      out.grads.pose[i] += grad_i;
      out.grads.pose[j] += grad_j;
    }
  }
  return out;
}

}  // namespace

LossResult pose_loss(const std::vector<Frame>& frames) {
  std::vector<Posed> poses;
  poses.reserve(frames.size());
  for (const Frame& f : frames) poses.push_back(f.pose);
  return pose_loss_impl(frames, poses);
}

LossResult pose_loss(const std::vector<Frame>& frames,
                     const BASolution& sol) {
  return pose_loss_impl(frames, sol.poses);
}

double total_loss_fixed(double flow, double pose) {
  return 10.0 * flow + 0.1 * pose;
}

double balance_beta(const Eigen::VectorXd& grad_pose_params,
                    const Eigen::VectorXd& grad_flow_params) {
  const double flow_norm = grad_flow_params.norm();
  if (flow_norm == 0.0) {
    throw DegenerateBalanceError("balance_beta: zero flow gradient norm");
  }
  return grad_pose_params.norm() / flow_norm;
}

std::vector<Vec2d> heuristic_weights(const std::vector<Vec2d>& gt_targets,
                                     const std::vector<Vec2d>& estimates) {
  if (gt_targets.size() != estimates.size() || gt_targets.empty()) {
    throw ConfigError("heuristic_weights: need matching nonempty target lists");
  }
  std::vector<double> errs(gt_targets.size());
  for (size_t e = 0; e < gt_targets.size(); ++e) {
    errs[e] = (gt_targets[e] - estimates[e]).norm();
  }
  std::vector<double> sorted = errs;
  std::sort(sorted.begin(), sorted.end());
  const size_t n = sorted.size();
  const double m = (n % 2 == 1)
                       ? sorted[n / 2]
                       : 0.5 * (sorted[n / 2 - 1] + sorted[n / 2]);

  std::vector<Vec2d> weights(errs.size());
  for (size_t e = 0; e < errs.size(); ++e) {
    const double w =
        m == 0.0 ? 1.0 : std::clamp(1.0 / (4.0 * errs[e] / m + 1.0), 0.0, 1.0);
    weights[e] = Vec2d::Constant(w);
  }
  return weights;
}

}  // namespace bagrad
