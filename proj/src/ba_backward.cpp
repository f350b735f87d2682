// Copyright (c) 2026 The bagrad authors. All rights reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0

#include "bagrad/ba_backward.hpp"

#include <algorithm>

#include "bagrad/errors.hpp"

namespace bagrad {

UpstreamGrads& UpstreamGrads::operator+=(const UpstreamGrads& o) {
  for (size_t j = 0; j < pose.size(); ++j) pose[j] += o.pose[j];
  for (size_t k = 0; k < depth.size(); ++k) depth[k] += o.depth[k];
  return *this;
}

UpstreamGrads& UpstreamGrads::scale(double s) {
  for (Vec6d& g : pose) g *= s;
  for (double& g : depth) g *= s;
  return *this;
}

Eigen::VectorXd UpstreamGrads::flatten() const {
  Eigen::VectorXd out(6 * pose.size() + depth.size());
  for (size_t j = 0; j < pose.size(); ++j) {
    out.segment<6>(6 * static_cast<Eigen::Index>(j)) = pose[j];
  }
  for (size_t k = 0; k < depth.size(); ++k) {
    out(6 * pose.size() + k) = depth[k];
  }
  return out;
}

InputGrads ba_backward(const BASolution& sol, const UpstreamGrads& upstream,
                       BackwardMode mode) {
  if (!sol.has_cache) {
    throw MissingCacheError("ba_backward: solution carries no linearization");
  }
  const int n_free = sol.n_free_poses();
  const int np = 6 * std::max(n_free, 0);
  const int n_patches = static_cast<int>(sol.depths.size());
  const ReducedSystem& sys = sol.system;

  Eigen::VectorXd u_pose(np);
  for (int f = 0; f < n_free; ++f) {
    u_pose.segment<6>(6 * f) = upstream.pose[sol.config.n_fixed_poses + f];
  }
  Eigen::VectorXd u_depth(n_patches);
  for (int k = 0; k < n_patches; ++k) u_depth(k) = upstream.depth[k];

  // z = H^-1 u, either through the joint Schur system or with the pose and
  // depth blocks treated independently.
  Eigen::VectorXd z_pose(np);
  Eigen::VectorXd z_depth(n_patches);
  if (mode == BackwardMode::kJoint) {
    if (np > 0) {
      const Eigen::VectorXd rhs =
          u_pose - sys.h_pd * (sys.h_dd_inv.asDiagonal() * u_depth);
      z_pose = sys.schur_ldlt.solve(rhs);
    }
    z_depth = sys.h_dd_inv.asDiagonal() *
              (u_depth - sys.h_pd.transpose() * z_pose);
  } else {
    if (np > 0) z_pose = sys.pose_ldlt.solve(u_pose);
    z_depth = sys.h_dd_inv.asDiagonal() * u_depth;
  }
  if ((np > 0 && !z_pose.allFinite()) || !z_depth.allFinite()) {
    throw IllPosedWindowError("ba_backward: singular cached system");
  }

  InputGrads out;
  out.delta.assign(sol.edge_refs.size(), Vec2d::Zero());
  out.sigma.assign(sol.edge_refs.size(), Vec2d::Zero());

  const auto pose_block = [&](int frame) -> int {
    return frame < sol.config.n_fixed_poses
               ? -1
               : 6 * (frame - sol.config.n_fixed_poses);
  };

  for (size_t e = 0; e < sol.edge_refs.size(); ++e) {
    const EdgeLin& l = sol.lin[e];
    if (!l.valid) continue;
    const EdgeRef& ref = sol.edge_refs[e];
    Vec2d contraction = l.j_depth * z_depth(ref.patch);
    const int ci = pose_block(ref.src);
    const int cj = pose_block(ref.dst);
    if (ci >= 0) contraction += l.j_pose_src * z_pose.segment<6>(ci);
    if (cj >= 0) contraction += l.j_pose_dst * z_pose.segment<6>(cj);
    out.delta[e] = l.weight.cwiseProduct(contraction);
    out.sigma[e] = l.residual.cwiseProduct(contraction);
  }
  return out;
}

InputGrads clip_weight_grad(InputGrads g, double gamma_min, double gamma_max) {
  for (Vec2d& s : g.sigma) {
    s.x() = std::clamp(s.x(), gamma_min, gamma_max);
    s.y() = std::clamp(s.y(), gamma_min, gamma_max);
  }
  return g;
}

BASolution linearize_at(const BASolution& sol,
                        const std::vector<double>& depth_override) {
  if (!sol.has_cache) {
    throw MissingCacheError("linearize_at: solution carries no linearization");
  }
  BASolution out = sol;
  const std::vector<EdgeLin> fresh =
      linearize_edges(out.edge_refs, out.poses, depth_override,
                      out.intrinsics, out.config.z_min);
  // Jacobians come from the overridden depths; the residuals stay pinned at
  // the solved iterate so only the linearization changes.
  for (size_t e = 0; e < out.lin.size(); ++e) {
    const Vec2d residual = out.lin[e].residual;
    out.lin[e] = fresh[e];
    out.lin[e].residual = residual;
  }
  out.system = assemble_system(out.edge_refs, out.lin, out.config,
                               out.n_frames,
                               static_cast<int>(out.depths.size()));
  return out;
}

}  // namespace bagrad
