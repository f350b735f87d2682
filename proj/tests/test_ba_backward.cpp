// Copyright (c) 2026 The bagrad authors. All rights reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0

#include <doctest.h>

#include "bagrad/analysis.hpp"
#include "bagrad/ba_backward.hpp"
#include "bagrad/ba_solver.hpp"
#include "bagrad/losses.hpp"
#include "bagrad/rng.hpp"
#include "bagrad/synth.hpp"
#include "helpers.hpp"

using namespace bagrad;

namespace {

// Well-conditioned converged problem: two fixed poses (no gauge), small
// noise, interior weights, tiny damping.
struct OracleProblem {
  PatchGraph graph;
  BAConfig ba;
};

OracleProblem make_oracle_problem(std::uint64_t seed) {
  SynthConfig cfg = testing::tiny_scene_config(seed, /*n_frames=*/4,
                                               /*patches_per_frame=*/6);
  cfg.sigma_inlier = 0.001;  // near-zero-residual regime: the printed
  cfg.step_trans = 0.25;     // gradient expressions are exact at fixed points

  OracleProblem p;
  p.graph = generate_scene(cfg).graph;
  Philox rng(seed, stream_id(Stream::kExperiment, 99));
  for (Edge& e : p.graph.edges) {
    e.weight = Vec2d(rng.uniform(0.4, 0.9), rng.uniform(0.4, 0.9));
  }
  p.ba.n_iters = 60;
  p.ba.step_norm_stop = 1e-12;
  p.ba.damping = 1e-6;
  p.ba.n_fixed_poses = 2;
  p.ba.d_min = 0.5;
  p.ba.d_max = 100.0;
  return p;
}

// Smooth probe loss for the finite-difference oracle: squared flow error.
// It produces generic nonzero pose and depth cotangents without the norm
// loss's kink at zero per-edge error (the norm-loss gradients themselves
// are FD-checked in the losses suite).
LossResult squared_flow_loss(const PatchGraph& g, const BASolution& sol) {
  const PatchGraph solved = apply_solution(g, sol);
  LossResult out;
  out.grads = UpstreamGrads::zero(static_cast<int>(g.frames.size()),
                                  static_cast<int>(g.patches.size()));
  for (const Edge& e : solved.edges) {
    const Patch& p = solved.patches[e.patch];
    const ProjJacobians<double> jac = proj_jacobians(
        solved.frames[p.source_frame].pose,
        solved.frames[e.target_frame].pose, p.center, p.depth,
        solved.intrinsics);
    if (!jac.valid) continue;
    const Vec2d r = e.gt_target - jac.reprojection;
    out.value += r.squaredNorm();
    const Vec2d cot = -2.0 * r;
    out.grads.pose[p.source_frame] += jac.j_pose_source.transpose() * cot;
    out.grads.pose[e.target_frame] += jac.j_pose_target.transpose() * cot;
    out.grads.depth[e.patch] += jac.j_depth.dot(cot);
  }
  return out;
}

double solve_and_loss(const PatchGraph& g, const BAConfig& ba) {
  const BASolution sol = ba_solve(g, ba);
  return squared_flow_loss(g, sol).value;
}

UpstreamGrads total_upstream(const PatchGraph& g, const BASolution& sol) {
  return squared_flow_loss(g, sol).grads;
}

}  // namespace

TEST_SUITE_BEGIN("ba_backward");

TEST_CASE("zero upstream gives zero input gradients") {
  const OracleProblem p = make_oracle_problem(90);
  const BASolution sol = ba_solve(p.graph, p.ba);
  const InputGrads g = ba_backward(
      sol, UpstreamGrads::zero(static_cast<int>(p.graph.frames.size()),
                               static_cast<int>(p.graph.patches.size())));
  for (const Vec2d& d : g.delta) CHECK(d.norm() == 0.0);
  for (const Vec2d& s : g.sigma) CHECK(s.norm() == 0.0);
}

TEST_CASE("zero residual solves give zero weight gradients") {
  SynthConfig cfg = testing::tiny_scene_config(91);
  cfg.sigma_inlier = 0.0;
  const SynthScene s = generate_scene(cfg);
  BAConfig ba;
  ba.n_iters = 2;
  const BASolution sol = ba_solve(s.graph, ba);
  UpstreamGrads up = UpstreamGrads::zero(
      static_cast<int>(s.graph.frames.size()),
      static_cast<int>(s.graph.patches.size()));
  Philox rng(92, 0);
  for (Vec6d& g : up.pose) {
    for (int c = 0; c < 6; ++c) g(c) = rng.gaussian();
  }
  for (double& g : up.depth) g = rng.gaussian();
  const InputGrads in = ba_backward(sol, up);
  for (const Vec2d& g : in.sigma) CHECK(g.norm() < 1e-12);
}

TEST_CASE("backward requires a cached forward solve") {
  BASolution empty;
  CHECK_THROWS_AS(ba_backward(empty, UpstreamGrads::zero(0, 0)),
                  MissingCacheError);
}

TEST_CASE("input gradients match finite differences through re-solves") {
  const double h = 1e-5;
  for (std::uint64_t seed = 100; seed < 110; ++seed) {
    const OracleProblem p = make_oracle_problem(seed);
    const BASolution sol = ba_solve(p.graph, p.ba);
    const InputGrads analytic = ba_backward(sol, total_upstream(p.graph, sol));

    const size_t n_edges = p.graph.edges.size();
    Eigen::VectorXd fd_delta(2 * n_edges), an_delta(2 * n_edges);
    Eigen::VectorXd fd_sigma(2 * n_edges), an_sigma(2 * n_edges);
    for (size_t e = 0; e < n_edges; ++e) {
      for (int c = 0; c < 2; ++c) {
        PatchGraph g = p.graph;
        g.edges[e].target[c] += h;
        const double hi = solve_and_loss(g, p.ba);
        g.edges[e].target[c] -= 2 * h;
        const double lo = solve_and_loss(g, p.ba);
        fd_delta(2 * e + c) = (hi - lo) / (2 * h);
        an_delta(2 * e + c) = analytic.delta[e][c];

        g = p.graph;
        g.edges[e].weight[c] += h;
        const double whi = solve_and_loss(g, p.ba);
        g.edges[e].weight[c] -= 2 * h;
        const double wlo = solve_and_loss(g, p.ba);
        fd_sigma(2 * e + c) = (whi - wlo) / (2 * h);
        an_sigma(2 * e + c) = analytic.sigma[e][c];
      }
    }
    const double rel_delta = (fd_delta - an_delta).norm() / fd_delta.norm();
    const double rel_sigma = (fd_sigma - an_sigma).norm() / fd_sigma.norm();
    CHECK(rel_delta < 1e-3);
    CHECK(rel_sigma < 1e-3);
  }
}

TEST_CASE("weight gradient is the flow gradient with the trailing factor "
          "swapped for the residual") {
  const OracleProblem p = make_oracle_problem(120);
  const BASolution sol = ba_solve(p.graph, p.ba);
  const InputGrads g = ba_backward(sol, total_upstream(p.graph, sol));
  for (size_t e = 0; e < g.delta.size(); ++e) {
    const Vec2d lhs = g.delta[e].cwiseProduct(sol.lin[e].residual);
    const Vec2d rhs = g.sigma[e].cwiseProduct(sol.lin[e].weight);
    CHECK((lhs - rhs).norm() <= 1e-12 * std::max(1.0, lhs.norm()));
  }
}

TEST_CASE("zero-weight edges receive zero flow gradients") {
  OracleProblem p = make_oracle_problem(121);
  p.graph.edges[2].weight = Vec2d::Zero();
  const BASolution sol = ba_solve(p.graph, p.ba);
  const InputGrads g = ba_backward(sol, total_upstream(p.graph, sol));
  CHECK(g.delta[2].norm() == 0.0);
}

TEST_CASE("frozen linearization: weight gradients scale with the residual") {
  const OracleProblem p = make_oracle_problem(122);
  const BASolution sol = ba_solve(p.graph, p.ba);
  const UpstreamGrads up = total_upstream(p.graph, sol);
  const InputGrads base = ba_backward(sol, up);

  const double c = 3.5;
  BASolution scaled = sol;  // same Jacobians and factorization
  scaled.lin[4].residual *= c;
  const InputGrads mod = ba_backward(scaled, up);
  CHECK((mod.sigma[4] - c * base.sigma[4]).norm() <
        1e-12 * std::max(1.0, base.sigma[4].norm()));
  CHECK((mod.sigma[5] - base.sigma[5]).norm() == 0.0);
  CHECK((mod.delta[4] - base.delta[4]).norm() == 0.0);
}

TEST_CASE("clip_weight_grad clamps only the weight gradients") {
  InputGrads g;
  g.delta = {Vec2d(5.0, -5.0)};
  g.sigma = {Vec2d(5.0, -5.0)};
  const InputGrads within = clip_weight_grad(g, -10.0, 10.0);
  CHECK(within.sigma[0] == Vec2d(5.0, -5.0));
  const InputGrads clipped = clip_weight_grad(g, -0.01, 0.01);
  CHECK(clipped.sigma[0] == Vec2d(0.01, -0.01));
  CHECK(clipped.delta[0] == Vec2d(5.0, -5.0));
}

TEST_CASE("linearize_at with the solution depths is a bitwise no-op") {
  const OracleProblem p = make_oracle_problem(123);
  const BASolution sol = ba_solve(p.graph, p.ba);
  const BASolution relin = linearize_at(sol, sol.depths);
  const UpstreamGrads up = total_upstream(p.graph, sol);
  const InputGrads a = ba_backward(sol, up);
  const InputGrads b = ba_backward(relin, up);
  for (size_t e = 0; e < a.delta.size(); ++e) {
    CHECK(a.delta[e] == b.delta[e]);
    CHECK(a.sigma[e] == b.sigma[e]);
  }
}

TEST_CASE("linearize_at responds smoothly to small depth perturbations") {
  const OracleProblem p = make_oracle_problem(124);
  const BASolution sol = ba_solve(p.graph, p.ba);
  const UpstreamGrads up = total_upstream(p.graph, sol);
  const Eigen::VectorXd base = [&] {
    const InputGrads g = ba_backward(sol, up);
    Eigen::VectorXd v(2 * g.delta.size());
    for (size_t e = 0; e < g.delta.size(); ++e) v.segment<2>(2 * e) = g.delta[e];
    return v;
  }();

  Philox rng(124, 7);
  std::vector<double> direction(sol.depths.size());
  for (double& d : direction) d = rng.gaussian();

  double prev_change = 0.0;
  for (const double eps : {1e-4, 1e-3, 1e-2}) {
    std::vector<double> depths = sol.depths;
    for (size_t k = 0; k < depths.size(); ++k) {
      depths[k] *= std::exp(eps * direction[k]);
    }
    const InputGrads g = ba_backward(linearize_at(sol, depths), up);
    Eigen::VectorXd v(2 * g.delta.size());
    for (size_t e = 0; e < g.delta.size(); ++e) v.segment<2>(2 * e) = g.delta[e];
    const double change = (v - base).norm();
    CHECK(change < 50.0 * eps * base.norm());  // finite local Lipschitz bound
    CHECK(change >= prev_change);
    prev_change = change;
  }
}

TEST_CASE("block-separated mode matches the joint mode when the coupling "
          "vanishes") {
  // All poses fixed: only depth blocks remain and the two modes coincide.
  OracleProblem p = make_oracle_problem(125);
  p.ba.n_fixed_poses = static_cast<int>(p.graph.frames.size());
  const BASolution sol = ba_solve(p.graph, p.ba);
  const UpstreamGrads up = total_upstream(p.graph, sol);
  const InputGrads joint = ba_backward(sol, up, BackwardMode::kJoint);
  const InputGrads sep = ba_backward(sol, up, BackwardMode::kBlockSeparated);
  for (size_t e = 0; e < joint.delta.size(); ++e) {
    CHECK((joint.delta[e] - sep.delta[e]).norm() < 1e-14);
    CHECK((joint.sigma[e] - sep.sigma[e]).norm() < 1e-14);
  }
}

TEST_SUITE_END();
