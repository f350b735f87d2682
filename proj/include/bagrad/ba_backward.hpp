// Copyright (c) 2026 The bagrad authors. All rights reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Analytic backward pass through the BA layer. Treating the solve as a
// fixed point of the weighted normal equations, the gradient of an outer
// loss w.r.t. the revised targets (flow revisions) and the confidence
// weights contracts the upstream pose/depth gradients against the cached
// damped linearization:
//
//   grad_target = diag(weight) * J * H^-1 * upstream
//   grad_sigma  = diag(residual) * J * H^-1 * upstream
//
// i.e. the weight gradient is the target gradient with the trailing weight
// factor replaced by the residual.

#pragma once

#include <vector>

#include "bagrad/ba_solver.hpp"

namespace bagrad {

// Gradients of an outer loss at the BA outputs. pose[j] is a twist
// cotangent for frame j; entries for fixed frames are ignored by the
// backward pass (those poses are not solver variables).
struct UpstreamGrads {
  std::vector<Vec6d> pose;
  std::vector<double> depth;

  static UpstreamGrads zero(int n_frames, int n_patches) {
    UpstreamGrads u;
    u.pose.assign(n_frames, Vec6d::Zero());
    u.depth.assign(n_patches, 0.0);
    return u;
  }

  UpstreamGrads& operator+=(const UpstreamGrads& o);
  UpstreamGrads& scale(double s);
  Eigen::VectorXd flatten() const;
};

// Gradients at the BA inputs, per edge.
struct InputGrads {
  std::vector<Vec2d> delta;  // w.r.t. revised targets / flow revisions
  std::vector<Vec2d> sigma;  // w.r.t. confidence weights
};

enum class BackwardMode {
  // Solve the full damped normal equations (pose and depth blocks coupled
  // through the Schur complement). Default; matches the finite-difference
  // oracle on converged solves.
  kJoint,
  // Treat the pose and depth blocks independently, as in the printed
  // gradient expressions. Used by the linearization-fidelity experiments.
  kBlockSeparated,
};

InputGrads ba_backward(const BASolution& sol, const UpstreamGrads& upstream,
                       BackwardMode mode = BackwardMode::kJoint);

// Componentwise clamp of the weight gradients; flow gradients untouched.
InputGrads clip_weight_grad(InputGrads g, double gamma_min, double gamma_max);

// Rebuilds the cached Jacobians and factorizations at overridden depths,
// leaving the solution's poses, depths and residuals unchanged. Used to
// isolate linearization error in the backward pass.
BASolution linearize_at(const BASolution& sol,
                        const std::vector<double>& depth_override);

}  // namespace bagrad
