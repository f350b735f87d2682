// Copyright (c) 2026 The bagrad authors. All rights reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0

#include "bagrad/trainer.hpp"

#include <algorithm>
#include <cmath>

#include "bagrad/analysis.hpp"
#include "bagrad/errors.hpp"
#include "bagrad/rng.hpp"

namespace bagrad {

Strategy parse_strategy(const std::string& name) {
  if (name == "unweighted") return Strategy::kUnweighted;
  if (name == "weighted") return Strategy::kWeighted;
  if (name == "gt-interp") return Strategy::kGtInterp;
  if (name == "grad-correct") return Strategy::kGradCorrect;
  if (name == "heuristic") return Strategy::kHeuristic;
  throw ConfigError("unknown strategy: " + name);
}

std::string strategy_name(Strategy s) {
  switch (s) {
    case Strategy::kUnweighted: return "unweighted";
    case Strategy::kWeighted: return "weighted";
    case Strategy::kGtInterp: return "gt-interp";
    case Strategy::kGradCorrect: return "grad-correct";
    case Strategy::kHeuristic: return "heuristic";
  }
  return "unweighted";
}

std::uint64_t train_scene_seed(const TrainConfig& cfg, int iter, int slot) {
  return cfg.scene.seed + 1000003ull * static_cast<std::uint64_t>(iter + 1) +
         static_cast<std::uint64_t>(slot);
}

std::uint64_t val_scene_seed(const TrainConfig& cfg, int slot) {
  return cfg.scene.seed + 900000000ull + static_cast<std::uint64_t>(slot);
}

void gt_interp_state(PatchGraph& g, double alpha) {
  if (alpha == 0.0) return;
  for (Frame& f : g.frames) {
    const Twistd to_gt = se3_log(pose_compose(f.gt_pose, pose_inverse(f.pose)));
    f.pose = pose_compose(se3_exp<double>(alpha * to_gt), f.pose);
  }
  for (Edge& e : g.edges) {
    e.target = alpha * e.gt_target + (1.0 - alpha) * e.target;
  }
}

void grad_correct(InputGrads& grads, const PatchGraph& g) {
  for (size_t e = 0; e < g.edges.size(); ++e) {
    const Vec2d ref = g.edges[e].target - g.edges[e].gt_target;
    for (int c = 0; c < 2; ++c) {
      if (ref[c] == 0.0) continue;
      if (grads.delta[e][c] * ref[c] < 0.0) grads.delta[e][c] = 0.0;
    }
  }
}

namespace {

std::vector<FeatureVec> build_features(const PatchGraph& g,
                                       const std::vector<Vec2d>& delta_prev,
                                       const std::vector<Vec2d>& sigma_prev) {
  std::vector<FeatureVec> features(g.edges.size());
  for (size_t e = 0; e < g.edges.size(); ++e) {
    const Edge& edge = g.edges[e];
    const Patch& p = g.patches[edge.patch];
    const Reprojection<double> r = try_reproject(
        g.frames[p.source_frame].pose, g.frames[edge.target_frame].pose,
        p.center, p.depth, g.intrinsics);
    const Vec2d err = r.valid ? Vec2d(edge.target - r.uv) : Vec2d::Zero();
    FeatureVec f;
    f << err.x() / kFeatureScale, err.y() / kFeatureScale,
        delta_prev[e].x() / kFeatureScale, delta_prev[e].y() / kFeatureScale,
        sigma_prev[e].x(), sigma_prev[e].y(), 1.0;
    features[e] = f;
  }
  return features;
}

// Runs one predict-solve iterate on `state`, appending the record and
// advancing the state (with optional gt interpolation).
void run_iterate(PatchGraph& state, const Predictor& predictor,
                 const Eigen::VectorXd& theta, const TrainConfig& cfg,
                 double alpha, std::vector<Vec2d>& delta_prev,
                 std::vector<Vec2d>& sigma_prev,
                 std::vector<InnerIterate>& out) {
  InnerIterate it;
  it.features = build_features(state, delta_prev, sigma_prev);
  const PredictorOutput pred = predictor.forward(theta, it.features);
  it.delta = pred.delta;
  it.sigma = pred.sigma;
  for (size_t e = 0; e < state.edges.size(); ++e) {
    state.edges[e].target += pred.delta[e];
    state.edges[e].weight = pred.sigma[e];
  }
  it.graph = state;
  it.sol = ba_solve(state, cfg.ba);
  state = apply_solution(state, it.sol);
  if (cfg.strategy == Strategy::kGtInterp) gt_interp_state(state, alpha);
  delta_prev = pred.delta;
  sigma_prev = pred.sigma;
  out.push_back(std::move(it));
}

// Copies window state (frames/patches/edges are prefixes when the window
// starts at frame 0) back into the full graph.
void write_back_prefix(PatchGraph& full, const PatchGraph& w,
                       const std::vector<size_t>& edge_map) {
  for (size_t j = 0; j < w.frames.size(); ++j) {
    full.frames[j].pose = w.frames[j].pose;
  }
  for (size_t k = 0; k < w.patches.size(); ++k) {
    full.patches[k].depth = w.patches[k].depth;
  }
  for (size_t e = 0; e < w.edges.size(); ++e) {
    full.edges[edge_map[e]].target = w.edges[e].target;
    full.edges[edge_map[e]].weight = w.edges[e].weight;
  }
}

std::vector<size_t> window_edge_map(const PatchGraph& full, int count) {
  std::vector<size_t> map;
  for (size_t e = 0; e < full.edges.size(); ++e) {
    const Edge& edge = full.edges[e];
    if (edge.target_frame < count &&
        full.patches[edge.patch].source_frame < count) {
      map.push_back(e);
    }
  }
  return map;
}

}  // namespace

std::vector<InnerIterate> inner_loop(const PatchGraph& scene,
                                     const Eigen::VectorXd& theta,
                                     const TrainConfig& cfg,
                                     std::uint64_t scene_seed, double alpha) {
  const Predictor predictor(cfg.predictor_width);

  PatchGraph full = scene;
  Philox rng(scene_seed, stream_id(Stream::kInnerInit));
  // Free poses start at identity and depths at random values; the fixed
  // poses keep the scene's estimates since they anchor the gauge.
  for (size_t j = cfg.ba.n_fixed_poses; j < full.frames.size(); ++j) {
    full.frames[j].pose = Posed::identity();
  }
  for (Patch& p : full.patches) {
    p.depth = rng.uniform(cfg.scene.depth_min, cfg.scene.depth_max);
  }

  std::vector<InnerIterate> iterates;

  if (!cfg.streaming) {
    std::vector<Vec2d> delta_prev(full.edges.size(), Vec2d::Zero());
    std::vector<Vec2d> sigma_prev(full.edges.size(), Vec2d::Constant(0.5));
    for (int n = 0; n < cfg.inner_iters; ++n) {
      run_iterate(full, predictor, theta, cfg, alpha, delta_prev, sigma_prev,
                  iterates);
    }
    return iterates;
  }

  // Streaming: batch-optimize the first init_frames, then extend one frame
  // at a time. Per-edge predictor state is tracked on the full edge set.
  std::vector<Vec2d> delta_prev_full(full.edges.size(), Vec2d::Zero());
  std::vector<Vec2d> sigma_prev_full(full.edges.size(),
                                     Vec2d::Constant(0.5));
  const int n_frames = static_cast<int>(full.frames.size());
  const int init = std::min(cfg.init_frames, n_frames);

  const auto run_phase = [&](int count, int iters) {
    const std::vector<size_t> edge_map = window_edge_map(full, count);
    PatchGraph w = window(full, 0, count);
    std::vector<Vec2d> delta_prev(edge_map.size());
    std::vector<Vec2d> sigma_prev(edge_map.size());
    for (size_t e = 0; e < edge_map.size(); ++e) {
      delta_prev[e] = delta_prev_full[edge_map[e]];
      sigma_prev[e] = sigma_prev_full[edge_map[e]];
    }
    for (int n = 0; n < iters; ++n) {
      run_iterate(w, predictor, theta, cfg, alpha, delta_prev, sigma_prev,
                  iterates);
    }
    write_back_prefix(full, w, edge_map);
    for (size_t e = 0; e < edge_map.size(); ++e) {
      delta_prev_full[edge_map[e]] = delta_prev[e];
      sigma_prev_full[edge_map[e]] = sigma_prev[e];
    }
  };

  run_phase(init, cfg.inner_iters);
  for (int count = init + 1; count <= n_frames; ++count) {
    // Warm-start the appended frame from its predecessor.
    full.frames[count - 1].pose = full.frames[count - 2].pose;
    run_phase(count, cfg.per_frame_iters);
  }
  return iterates;
}

namespace {

struct SceneGrads {
  Eigen::VectorXd combined;
  Eigen::VectorXd pose_path;
  Eigen::VectorXd flow_path;
  LossReport report;
};

// Full gradient chain for one scene: per-iterate losses -> upstream
// cotangents -> BA backward -> strategy correction and weight-gradient
// clipping -> predictor backward.
SceneGrads scene_gradients(const std::vector<InnerIterate>& iterates,
                           const Eigen::VectorXd& theta,
                           const TrainConfig& cfg,
                           const OuterStepOptions& opt) {
  const Predictor predictor(cfg.predictor_width);
  const int n_params = predictor.n_params();

  SceneGrads out;
  out.combined = Eigen::VectorXd::Zero(n_params);
  out.pose_path = Eigen::VectorXd::Zero(n_params);
  out.flow_path = Eigen::VectorXd::Zero(n_params);
  out.report.beta = opt.beta;

  const double w_flow = cfg.balance ? opt.beta : 10.0;
  const double w_pose = cfg.balance ? 1.0 : 0.1;

  const int last = static_cast<int>(iterates.size()) - 1;
  for (int n = 0; n <= last; ++n) {
    if (!cfg.loss_on_every_iterate && n != last) continue;
    const InnerIterate& it = iterates[n];
    const PatchGraph& g = it.graph;

    LossResult flow;
    switch (cfg.strategy) {
      case Strategy::kWeighted:
        flow = weighted_flow_loss(g, it.sol, it.sigma);
        break;
      case Strategy::kHeuristic: {
        const PatchGraph solved = apply_solution(g, it.sol);
        std::vector<Vec2d> gt(g.edges.size()), est(g.edges.size());
        for (size_t e = 0; e < g.edges.size(); ++e) {
          const Edge& edge = solved.edges[e];
          const Patch& p = solved.patches[edge.patch];
          const Reprojection<double> r = try_reproject(
              solved.frames[p.source_frame].pose,
              solved.frames[edge.target_frame].pose, p.center, p.depth,
              solved.intrinsics);
          gt[e] = edge.gt_target;
          est[e] = r.valid ? r.uv : edge.gt_target;
        }
        flow = weighted_flow_loss(g, it.sol, heuristic_weights(gt, est));
        break;
      }
      default:
        flow = flow_loss(g, it.sol);
        break;
    }

    const bool use_pose = pose_loss_mask(n, cfg.k_skip);
    LossResult pose;
    if (use_pose) {
      pose = pose_loss(g.frames, it.sol);
      pose.grads.depth.assign(g.patches.size(), 0.0);
    } else {
      pose.grads = UpstreamGrads::zero(static_cast<int>(g.frames.size()),
                                       static_cast<int>(g.patches.size()));
    }

    out.report.flow += flow.value;
    out.report.pose += pose.value;
    out.report.total += w_flow * flow.value + w_pose * pose.value;
    out.report.grads = flow.grads;
    out.report.grads.scale(w_flow);
    if (use_pose) {
      UpstreamGrads pg = pose.grads;
      pg.scale(w_pose);
      out.report.grads += pg;
    }

    const auto backprop = [&](const UpstreamGrads& upstream) {
      InputGrads in = ba_backward(it.sol, upstream);
      if (cfg.strategy == Strategy::kGradCorrect) grad_correct(in, g);
      if (opt.apply_weight_clip) {
        in = clip_weight_grad(std::move(in), cfg.grad_clip_min,
                              cfg.grad_clip_max);
      }
      return predictor.backward(theta, it.features, in.delta, in.sigma);
    };

    out.combined += backprop(out.report.grads);
    if (opt.want_separated || opt.want_flow_head_grads) {
      out.flow_path += backprop(flow.grads);
      if (use_pose) out.pose_path += backprop(pose.grads);
    }
  }
  return out;
}

}  // namespace

OuterStepResult outer_step(const std::vector<PatchGraph>& batch,
                           const std::vector<std::uint64_t>& scene_seeds,
                           const Eigen::VectorXd& theta,
                           const TrainConfig& cfg,
                           const OuterStepOptions& opt) {
  if (batch.empty() || batch.size() != scene_seeds.size()) {
    throw ConfigError("outer_step: empty batch or seed mismatch");
  }
  const Predictor predictor(cfg.predictor_width);
  OuterStepResult result;
  result.grad = Eigen::VectorXd::Zero(predictor.n_params());
  result.grad_pose_path = Eigen::VectorXd::Zero(predictor.n_params());
  result.grad_flow_path = Eigen::VectorXd::Zero(predictor.n_params());

  int survived = 0;
  for (size_t s = 0; s < batch.size(); ++s) {
    try {
      const std::vector<InnerIterate> iterates =
          inner_loop(batch[s], theta, cfg, scene_seeds[s], opt.alpha);
      const SceneGrads grads = scene_gradients(iterates, theta, cfg, opt);
      result.grad += grads.combined;
      result.grad_pose_path += grads.pose_path;
      result.grad_flow_path += grads.flow_path;
      result.reports.push_back(grads.report);
      if (opt.want_flow_head_grads) {
        result.flow_head_grads.push_back(grads.flow_path.segment(
            predictor.flow_head_offset(), predictor.flow_head_size()));
      }
      ++survived;
    } catch (const IllPosedWindowError&) {
      ++result.n_failed;
    } catch (const CheiralityError&) {
      ++result.n_failed;
    }
  }
  if (survived * 2 < static_cast<int>(batch.size())) {
    throw IllPosedWindowError(
        "outer_step: batch failure, fewer than half the scenes solvable");
  }
  const double inv = 1.0 / static_cast<double>(survived);
  result.grad *= inv;
  result.grad_pose_path *= inv;
  result.grad_flow_path *= inv;
  return result;
}

double ate(const std::vector<Posed>& est, const std::vector<Posed>& gt) {
  if (est.size() != gt.size() || est.size() < 3) {
    throw DegenerateAlignmentError("ate: need >= 3 matched poses");
  }
  std::vector<Vec3d> est_c, gt_c;
  est_c.reserve(est.size());
  gt_c.reserve(gt.size());
  for (const Posed& p : est) est_c.push_back(p.center());
  for (const Posed& p : gt) gt_c.push_back(p.center());
  const Sim3d align = umeyama_sim3(est_c, gt_c);
  double sq = 0.0;
  for (size_t i = 0; i < est_c.size(); ++i) {
    sq += (gt_c[i] - align * est_c[i]).squaredNorm();
  }
  return std::sqrt(sq / static_cast<double>(est_c.size()));
}

namespace {

double final_flow_error(const std::vector<InnerIterate>& iterates) {
  if (iterates.empty()) return 0.0;
  const InnerIterate& last = iterates.back();
  const PatchGraph solved = apply_solution(last.graph, last.sol);
  double total = 0.0;
  int count = 0;
  for (const Edge& e : solved.edges) {
    const Patch& p = solved.patches[e.patch];
    const Reprojection<double> r = try_reproject(
        solved.frames[p.source_frame].pose,
        solved.frames[e.target_frame].pose, p.center, p.depth,
        solved.intrinsics);
    if (!r.valid) continue;
    total += (e.gt_target - r.uv).norm();
    ++count;
  }
  return count > 0 ? total / count : 0.0;
}

}  // namespace

ValMetrics validate(const Eigen::VectorXd& theta, const TrainConfig& cfg) {
  ValMetrics out;
  int n = 0;
  for (int v = 0; v < cfg.n_val_scenes; ++v) {
    SynthConfig scfg = cfg.scene;
    scfg.seed = val_scene_seed(cfg, v);
    const SynthScene scene = generate_scene(scfg);
    try {
      const std::vector<InnerIterate> iterates =
          inner_loop(scene.graph, theta, cfg, scfg.seed, 0.0);
      out.flow_err += final_flow_error(iterates);
      const InnerIterate& last = iterates.back();
      std::vector<Posed> gt;
      for (const Frame& f : last.graph.frames) gt.push_back(f.gt_pose);
      out.ate += ate(last.sol.poses, gt);
      ++n;
    } catch (const IllPosedWindowError&) {
    } catch (const DegenerateAlignmentError&) {
    }
  }
  if (n > 0) {
    out.flow_err /= n;
    out.ate /= n;
  }
  return out;
}

TrainResult train(const TrainConfig& cfg) {
  const Predictor predictor(cfg.predictor_width);
  TrainResult result;
  result.theta = predictor.initial_theta(cfg.seed);

  Eigen::VectorXd velocity = Eigen::VectorXd::Zero(predictor.n_params());
  Eigen::VectorXd adam_m = Eigen::VectorXd::Zero(predictor.n_params());
  Eigen::VectorXd adam_v = Eigen::VectorXd::Zero(predictor.n_params());
  double beta = 1.0;

  const auto record_val = [&](int iter, TrainPoint& pt,
                              const OuterStepResult* step) {
    const ValMetrics vm = validate(result.theta, cfg);
    pt.has_val = true;
    pt.val_flow_err = vm.flow_err;
    pt.val_ate = vm.ate;
    if (step != nullptr && step->flow_head_grads.size() >= 2) {
      const double snr = batch_snr(step->flow_head_grads);
      pt.batch_snr_value = std::isfinite(snr) ? snr : 0.0;
      pt.batch_snr_sentinel = !std::isfinite(snr);
    } else {
      pt.batch_snr_sentinel = true;
    }
    (void)iter;
  };

  {
    // Initial validation point before any update.
    TrainPoint pt;
    pt.iter = -1;
    pt.beta = beta;
    record_val(-1, pt, nullptr);
    result.curve.push_back(pt);
  }

  for (int iter = 0; iter < cfg.total_iters; ++iter) {
    std::vector<PatchGraph> batch;
    std::vector<std::uint64_t> seeds;
    for (int s = 0; s < cfg.batch_size; ++s) {
      SynthConfig scfg = cfg.scene;
      scfg.seed = train_scene_seed(cfg, iter, s);
      batch.push_back(generate_scene(scfg).graph);
      seeds.push_back(scfg.seed);
    }

    OuterStepOptions opt;
    opt.beta = beta;
    opt.alpha = cfg.strategy == Strategy::kGtInterp
                    ? 1.0 - static_cast<double>(iter) /
                                std::max(cfg.total_iters - 1, 1)
                    : 0.0;
    const bool refresh_beta =
        cfg.balance && (iter % std::max(cfg.beta_period, 1) == 0);
    const bool val_iter =
        iter % std::max(cfg.val_period, 1) == 0 || iter + 1 == cfg.total_iters;
    opt.want_separated = refresh_beta;
    opt.want_flow_head_grads = val_iter;

    const OuterStepResult step =
        outer_step(batch, seeds, result.theta, cfg, opt);

    if (refresh_beta) {
      try {
        beta = balance_beta(step.grad_pose_path, step.grad_flow_path);
      } catch (const DegenerateBalanceError&) {
        // keep the previous coefficient
      }
    }

    // The combined gradient was taken at the pre-refresh beta; recombine
    // from the separated paths when a refresh happened this iteration.
    Eigen::VectorXd grad = step.grad;
    if (refresh_beta) {
      grad = step.grad_pose_path + beta * step.grad_flow_path;
    }

    double mean_total = 0.0, mean_flow = 0.0, mean_pose = 0.0;
    for (const LossReport& r : step.reports) {
      mean_total += r.total;
      mean_flow += r.flow;
      mean_pose += r.pose;
    }
    const double inv = 1.0 / std::max<size_t>(step.reports.size(), 1);
    mean_total *= inv;
    mean_flow *= inv;
    mean_pose *= inv;

    if (!std::isfinite(mean_total) || mean_total > 1e6) {
      result.diverged = true;
      result.divergence_note =
          "loss diverged at iteration " + std::to_string(iter);
      break;
    }

    if (cfg.adam) {
      adam_m = 0.9 * adam_m + 0.1 * grad;
      adam_v = 0.999 * adam_v.array() + 0.001 * grad.array().square();
      const double bc1 = 1.0 - std::pow(0.9, iter + 1);
      const double bc2 = 1.0 - std::pow(0.999, iter + 1);
      result.theta -=
          (cfg.lr * (adam_m / bc1).array() /
           ((adam_v / bc2).array().sqrt() + 1e-8))
              .matrix();
    } else {
      velocity = cfg.momentum * velocity + grad;
      result.theta -= cfg.lr * velocity;
    }

    TrainPoint pt;
    pt.iter = iter;
    pt.loss_flow = mean_flow;
    pt.loss_pose = mean_pose;
    pt.loss_total = mean_total;
    pt.beta = beta;
    if (val_iter) record_val(iter, pt, &step);
    result.curve.push_back(pt);
  }
  return result;
}

}  // namespace bagrad
