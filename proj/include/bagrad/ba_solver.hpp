// Copyright (c) 2026 The bagrad authors. All rights reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Weighted bundle adjustment over a patch-frame graph: damped Gauss-Newton
// on the weighted reprojection objective, eliminating the (scalar) depth
// blocks by Schur complement. The first n_fixed_poses poses are held
// constant; the revised targets stay fixed during the solve.

#pragma once

#include <memory>
#include <vector>

#include <Eigen/Cholesky>

#include "bagrad/scene.hpp"

namespace bagrad {

struct BAConfig {
  int n_iters = 2;
  double damping = 1e-4;  // multiplicative on the Hessian diagonal
  int n_fixed_poses = 1;
  double z_min = kDefaultZMin;
  double d_min = 0.1;
  double d_max = 1000.0;
  // When > 0, stop early once the combined step norm falls below this.
  // Convergence oracles use 1e-10 with a large n_iters.
  double step_norm_stop = 0.0;
};

// Per-edge linearization at a given state. Cheirality-masked edges keep
// zeroed Jacobians/residual and effective weight 0.
struct EdgeLin {
  Mat26d j_pose_src = Mat26d::Zero();
  Mat26d j_pose_dst = Mat26d::Zero();
  Vec2d j_depth = Vec2d::Zero();
  Vec2d residual = Vec2d::Zero();  // p_bar - p_hat
  Vec2d weight = Vec2d::Zero();    // effective weight used in the solve
  bool valid = false;
};

// Static per-edge description copied out of the graph so the solution is
// self-contained for the backward pass and relinearization.
struct EdgeRef {
  int patch = 0;
  int src = 0;
  int dst = 0;
  Vec2d center = Vec2d::Zero();
  Vec2d target = Vec2d::Zero();
  Vec2d weight = Vec2d::Zero();
};

// Damped reduced system at a linearization point. h_* blocks include the
// diagonal damping; the Schur factor eliminates depths from the pose system.
struct ReducedSystem {
  Eigen::MatrixXd schur;                       // damped S, 6*n_free square
  Eigen::LDLT<Eigen::MatrixXd> schur_ldlt;     // factor of schur
  Eigen::LDLT<Eigen::MatrixXd> pose_ldlt;      // factor of damped H_pp alone
  Eigen::VectorXd h_dd;                        // damped depth diagonal
  Eigen::VectorXd h_dd_inv;                    // 0 where h_dd is 0
  Eigen::MatrixXd h_pd;                        // pose-depth coupling
  Eigen::VectorXd b_pose;                      // J^T W r, pose block
  Eigen::VectorXd b_depth;                     // J^T W r, depth block
};

struct BASolution {
  std::vector<Posed> poses;
  std::vector<double> depths;
  Intrinsicsd intrinsics;
  BAConfig config;
  int n_frames = 0;
  std::vector<EdgeRef> edge_refs;
  std::vector<EdgeLin> lin;  // linearization at the final iterate
  ReducedSystem system;
  bool has_cache = false;
  int iters_run = 0;

  int n_free_poses() const { return n_frames - config.n_fixed_poses; }
};

// Weighted BA objective value at the graph's current estimates:
// sum over edges of r^T diag(weight) r. Cheirality-invalid edges
// contribute zero.
double ba_objective(const PatchGraph& g, double z_min = kDefaultZMin);

// Linearizes every edge at (poses, depths) and assembles the damped
// reduced system. Shared by the solver, the backward pass, and
// relinearization.
std::vector<EdgeLin> linearize_edges(const std::vector<EdgeRef>& refs,
                                     const std::vector<Posed>& poses,
                                     const std::vector<double>& depths,
                                     const Intrinsicsd& k, double z_min);

ReducedSystem assemble_system(const std::vector<EdgeRef>& refs,
                              const std::vector<EdgeLin>& lin,
                              const BAConfig& cfg, int n_frames,
                              int n_patches);

// One damped Gauss-Newton step: pose twists for the free frames (in frame
// order, starting at n_fixed_poses) and depth increments per patch.
// Throws IllPosedWindowError if the reduced pose system is singular after
// damping.
std::pair<std::vector<Twistd>, std::vector<double>> gn_step(
    const PatchGraph& g, const BAConfig& cfg);

// Runs cfg.n_iters Gauss-Newton steps from the graph's current estimates
// and caches the final linearization and factorizations for the backward
// pass.
BASolution ba_solve(const PatchGraph& g, const BAConfig& cfg);

// Writes a solution's poses/depths back into a copy of the graph.
PatchGraph apply_solution(const PatchGraph& g, const BASolution& sol);

}  // namespace bagrad
