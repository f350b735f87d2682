// Copyright (c) 2026 The bagrad authors. All rights reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0

#include "bagrad/ba_solver.hpp"

#include <algorithm>
#include <cmath>

#include "bagrad/errors.hpp"

namespace bagrad {

double ba_objective(const PatchGraph& g, double z_min) {
  double total = 0.0;
  for (const Edge& e : g.edges) {
    const Patch& p = g.patches[e.patch];
    const Reprojection<double> r =
        try_reproject(g.frames[p.source_frame].pose,
                      g.frames[e.target_frame].pose, p.center, p.depth,
                      g.intrinsics, z_min);
    if (!r.valid) continue;
    const Vec2d res = e.target - r.uv;
    total += res.dot(e.weight.asDiagonal() * res);
  }
  return total;
}

std::vector<EdgeLin> linearize_edges(const std::vector<EdgeRef>& refs,
                                     const std::vector<Posed>& poses,
                                     const std::vector<double>& depths,
                                     const Intrinsicsd& k, double z_min) {
  std::vector<EdgeLin> out(refs.size());
  for (size_t e = 0; e < refs.size(); ++e) {
    const EdgeRef& ref = refs[e];
    const ProjJacobians<double> jac = proj_jacobians(
        poses[ref.src], poses[ref.dst], ref.center, depths[ref.patch], k,
        z_min);
    if (!jac.valid) continue;  // weight stays zero for this iteration
    EdgeLin& l = out[e];
    l.j_pose_src = jac.j_pose_source;
    l.j_pose_dst = jac.j_pose_target;
    l.j_depth = jac.j_depth;
    l.residual = ref.target - jac.reprojection;
    l.weight = ref.weight;
    l.valid = true;
  }
  return out;
}

ReducedSystem assemble_system(const std::vector<EdgeRef>& refs,
                              const std::vector<EdgeLin>& lin,
                              const BAConfig& cfg, int n_frames,
                              int n_patches) {
  const int n_free = n_frames - cfg.n_fixed_poses;
  const int np = 6 * std::max(n_free, 0);

  Eigen::MatrixXd h_pp = Eigen::MatrixXd::Zero(np, np);
  Eigen::MatrixXd h_pd = Eigen::MatrixXd::Zero(np, n_patches);
  Eigen::VectorXd h_dd = Eigen::VectorXd::Zero(n_patches);
  Eigen::VectorXd b_pose = Eigen::VectorXd::Zero(np);
  Eigen::VectorXd b_depth = Eigen::VectorXd::Zero(n_patches);

  // Offset of a frame's twist block in the pose vector; -1 if fixed.
  const auto pose_col = [&](int frame) {
    return frame < cfg.n_fixed_poses ? -1 : 6 * (frame - cfg.n_fixed_poses);
  };

  for (size_t e = 0; e < refs.size(); ++e) {
    const EdgeLin& l = lin[e];
    if (!l.valid) continue;
    const Eigen::DiagonalMatrix<double, 2> w(l.weight);
    const int ci = pose_col(refs[e].src);
    const int cj = pose_col(refs[e].dst);
    const int k = refs[e].patch;

    const Mat26d wj_i = w * l.j_pose_src;
    const Mat26d wj_j = w * l.j_pose_dst;
    const Vec2d wj_d = w * l.j_depth;

    if (ci >= 0) {
      h_pp.block<6, 6>(ci, ci) += l.j_pose_src.transpose() * wj_i;
      h_pd.block<6, 1>(ci, k) += l.j_pose_src.transpose() * wj_d;
      b_pose.segment<6>(ci) += l.j_pose_src.transpose() * (w * l.residual);
    }
    if (cj >= 0) {
      h_pp.block<6, 6>(cj, cj) += l.j_pose_dst.transpose() * wj_j;
      h_pd.block<6, 1>(cj, k) += l.j_pose_dst.transpose() * wj_d;
      b_pose.segment<6>(cj) += l.j_pose_dst.transpose() * (w * l.residual);
    }
    if (ci >= 0 && cj >= 0) {
      const Mat6d off = l.j_pose_src.transpose() * wj_j;
      h_pp.block<6, 6>(ci, cj) += off;
      h_pp.block<6, 6>(cj, ci) += off.transpose();
    }
    h_dd(k) += l.j_depth.dot(wj_d);
    b_depth(k) += l.j_depth.dot(w * l.residual);
  }

  // Levenberg-style multiplicative damping on the diagonal.
  h_pp.diagonal() *= 1.0 + cfg.damping;
  h_dd *= 1.0 + cfg.damping;

  ReducedSystem sys;
  sys.h_dd = h_dd;
  sys.h_dd_inv = Eigen::VectorXd::Zero(n_patches);
  for (int k = 0; k < n_patches; ++k) {
    if (h_dd(k) > 0.0) sys.h_dd_inv(k) = 1.0 / h_dd(k);
  }
  sys.h_pd = h_pd;
  sys.b_pose = b_pose;
  sys.b_depth = b_depth;
  sys.schur =
      h_pp - h_pd * sys.h_dd_inv.asDiagonal() * h_pd.transpose();
  sys.schur_ldlt.compute(sys.schur);
  sys.pose_ldlt.compute(h_pp);
  return sys;
}

namespace {

std::vector<EdgeRef> make_edge_refs(const PatchGraph& g) {
  std::vector<EdgeRef> refs;
  refs.reserve(g.edges.size());
  for (const Edge& e : g.edges) {
    EdgeRef r;
    r.patch = e.patch;
    r.src = g.patches[e.patch].source_frame;
    r.dst = e.target_frame;
    r.center = g.patches[e.patch].center;
    r.target = e.target;
    r.weight = e.weight;
    refs.push_back(r);
  }
  return refs;
}

std::vector<Posed> graph_poses(const PatchGraph& g) {
  std::vector<Posed> out;
  out.reserve(g.frames.size());
  for (const Frame& f : g.frames) out.push_back(f.pose);
  return out;
}

std::vector<double> graph_depths(const PatchGraph& g) {
  std::vector<double> out;
  out.reserve(g.patches.size());
  for (const Patch& p : g.patches) out.push_back(p.depth);
  return out;
}

// Solves the reduced system for (pose twists, depth increments).
std::pair<Eigen::VectorXd, Eigen::VectorXd> solve_system(
    const ReducedSystem& sys) {
  const int np = static_cast<int>(sys.b_pose.size());
  Eigen::VectorXd dx_pose(np);
  if (np > 0) {
    const Eigen::VectorXd rhs =
        sys.b_pose - sys.h_pd * (sys.h_dd_inv.asDiagonal() * sys.b_depth);
    if (sys.schur_ldlt.info() != Eigen::Success) {
      throw IllPosedWindowError("gn_step: Schur factorization failed");
    }
    dx_pose = sys.schur_ldlt.solve(rhs);
    if (!dx_pose.allFinite()) {
      throw IllPosedWindowError(
          "gn_step: reduced pose system singular after damping");
    }
  }
  const Eigen::VectorXd dx_depth =
      sys.h_dd_inv.asDiagonal() *
      (sys.b_depth - sys.h_pd.transpose() * dx_pose);
  return {dx_pose, dx_depth};
}

}  // namespace

std::pair<std::vector<Twistd>, std::vector<double>> gn_step(
    const PatchGraph& g, const BAConfig& cfg) {
  const int n_free = static_cast<int>(g.frames.size()) - cfg.n_fixed_poses;
  if (n_free < 0 || (n_free == 0 && g.patches.empty())) {
    throw IllPosedWindowError("gn_step: no free poses or depths");
  }
  const std::vector<EdgeRef> refs = make_edge_refs(g);
  const std::vector<EdgeLin> lin =
      linearize_edges(refs, graph_poses(g), graph_depths(g), g.intrinsics,
                      cfg.z_min);
  const ReducedSystem sys =
      assemble_system(refs, lin, cfg, static_cast<int>(g.frames.size()),
                      static_cast<int>(g.patches.size()));
  const auto [dx_pose, dx_depth] = solve_system(sys);

  std::vector<Twistd> twists(std::max(n_free, 0));
  for (int f = 0; f < n_free; ++f) twists[f] = dx_pose.segment<6>(6 * f);
  std::vector<double> depth_steps(g.patches.size());
  for (size_t k = 0; k < g.patches.size(); ++k) {
    depth_steps[k] = dx_depth(static_cast<int>(k));
  }
  return {twists, depth_steps};
}

BASolution ba_solve(const PatchGraph& g, const BAConfig& cfg) {
  BASolution sol;
  sol.intrinsics = g.intrinsics;
  sol.config = cfg;
  sol.n_frames = static_cast<int>(g.frames.size());
  sol.edge_refs = make_edge_refs(g);
  sol.poses = graph_poses(g);
  sol.depths = graph_depths(g);

  const int n_free = sol.n_frames - cfg.n_fixed_poses;
  if (n_free < 0 || (n_free == 0 && sol.depths.empty())) {
    throw IllPosedWindowError("ba_solve: no free poses or depths");
  }

  for (int it = 0; it < cfg.n_iters; ++it) {
    const std::vector<EdgeLin> lin = linearize_edges(
        sol.edge_refs, sol.poses, sol.depths, g.intrinsics, cfg.z_min);
    const ReducedSystem sys = assemble_system(
        sol.edge_refs, lin, cfg, sol.n_frames,
        static_cast<int>(sol.depths.size()));
    const auto [dx_pose, dx_depth] = solve_system(sys);

    for (int f = 0; f < n_free; ++f) {
      const int frame = cfg.n_fixed_poses + f;
      sol.poses[frame] =
          pose_compose(se3_exp<double>(dx_pose.segment<6>(6 * f)),
                       sol.poses[frame]);
    }
    for (size_t k = 0; k < sol.depths.size(); ++k) {
      sol.depths[k] = std::clamp(sol.depths[k] + dx_depth(static_cast<int>(k)),
                                 cfg.d_min, cfg.d_max);
    }
    sol.iters_run = it + 1;

    const double step_norm =
        std::sqrt(dx_pose.squaredNorm() + dx_depth.squaredNorm());
    if (cfg.step_norm_stop > 0.0 && step_norm < cfg.step_norm_stop) break;
  }

  // Cache the linearization and factorizations at the final iterate for the
  // backward pass.
  sol.lin = linearize_edges(sol.edge_refs, sol.poses, sol.depths, g.intrinsics,
                            cfg.z_min);
  sol.system =
      assemble_system(sol.edge_refs, sol.lin, cfg, sol.n_frames,
                      static_cast<int>(sol.depths.size()));
  sol.has_cache = true;
  return sol;
}

PatchGraph apply_solution(const PatchGraph& g, const BASolution& sol) {
  PatchGraph out = g;
  for (size_t j = 0; j < out.frames.size(); ++j) {
    out.frames[j].pose = sol.poses[j];
  }
  for (size_t k = 0; k < out.patches.size(); ++k) {
    out.patches[k].depth = sol.depths[k];
  }
  return out;
}

}  // namespace bagrad
