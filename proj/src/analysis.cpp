// Copyright (c) 2026 The bagrad authors. All rights reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0

#include "bagrad/analysis.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <thread>

#include "bagrad/ba_backward.hpp"
#include "bagrad/errors.hpp"
#include "bagrad/losses.hpp"
#include "bagrad/predictor.hpp"
#include "bagrad/rng.hpp"

namespace bagrad {

namespace {

// Runs fn(i) for i in [0, n) on `jobs` threads; each cell writes only its
// own output slot, so ordering is independent of the thread count.
void parallel_cells(int n, int jobs, const std::function<void(int)>& fn) {
  if (jobs <= 1 || n <= 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<int> next{0};
  const int n_threads = std::min(jobs, n);
  std::vector<std::thread> pool;
  pool.reserve(n_threads);
  for (int t = 0; t < n_threads; ++t) {
    pool.emplace_back([&] {
      for (int i = next.fetch_add(1); i < n; i = next.fetch_add(1)) fn(i);
    });
  }
  for (std::thread& t : pool) t.join();
}

Eigen::VectorXd flatten_delta(const InputGrads& g) {
  Eigen::VectorXd out(2 * g.delta.size());
  for (size_t e = 0; e < g.delta.size(); ++e) {
    out.segment<2>(2 * static_cast<Eigen::Index>(e)) = g.delta[e];
  }
  return out;
}

}  // namespace

Eigen::VectorXd fd_gradient(
    const std::function<double(const Eigen::VectorXd&)>& f,
    const Eigen::VectorXd& x, double h) {
  Eigen::VectorXd grad(x.size());
  Eigen::VectorXd probe = x;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    probe(i) = x(i) + h;
    const double hi = f(probe);
    probe(i) = x(i) - h;
    const double lo = f(probe);
    probe(i) = x(i);
    if (!std::isfinite(hi) || !std::isfinite(lo)) {
      throw ConfigError("fd_gradient: non-finite function value on stencil");
    }
    grad(i) = (hi - lo) / (2.0 * h);
  }
  return grad;
}

double snr_db(const Eigen::VectorXd& clean_grad,
              const Eigen::VectorXd& noisy_grad) {
  const double noise = (noisy_grad - clean_grad).norm();
  if (noise == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(clean_grad.norm() / noise);
}

double batch_snr(const std::vector<Eigen::VectorXd>& grads) {
  if (grads.size() < 2) {
    throw ConfigError("batch_snr: need at least two gradients");
  }
  Eigen::VectorXd mean = Eigen::VectorXd::Zero(grads[0].size());
  for (const Eigen::VectorXd& g : grads) mean += g;
  mean /= static_cast<double>(grads.size());
  double dev = 0.0;
  for (const Eigen::VectorXd& g : grads) dev += (g - mean).norm();
  dev /= static_cast<double>(grads.size());
  if (dev == 0.0) return std::numeric_limits<double>::infinity();
  return mean.norm() / dev;
}

// ---------------------------------------------------------------------------

std::vector<SnrPoint> exp_linearization(const LinearizationConfig& cfg) {
  const int n_cells = static_cast<int>(cfg.sigmas.size() * cfg.seeds.size());
  std::vector<std::vector<SnrPoint>> cells(n_cells);

  parallel_cells(n_cells, cfg.jobs, [&](int cell) {
    const size_t si = cell % cfg.sigmas.size();
    const size_t ri = cell / cfg.sigmas.size();
    const double sigma = cfg.sigmas[si];
    const std::uint64_t seed = cfg.seeds[ri];

    SynthConfig scfg = cfg.scene;
    scfg.seed = seed;
    const SynthScene scene = generate_scene(scfg);

    BAConfig ba;
    ba.n_iters = cfg.ba_iters;
    ba.damping = cfg.damping;
    ba.step_norm_stop = 1e-12;
    const BASolution sol = ba_solve(scene.graph, ba);

    // Upstream gradients from the unnoised losses at the solution.
    const LossResult flow = flow_loss(scene.graph, sol);
    LossResult pose = pose_loss(scene.graph.frames, sol);
    pose.grads.depth.assign(scene.graph.patches.size(), 0.0);

    const InputGrads clean_flow =
        ba_backward(sol, flow.grads, BackwardMode::kBlockSeparated);
    const InputGrads clean_pose =
        ba_backward(sol, pose.grads, BackwardMode::kBlockSeparated);

    // Noise enters only the relinearized backward pass.
    std::vector<double> noisy_depths = sol.depths;
    Philox rng(seed, stream_id(Stream::kExperiment, si));
    for (double& d : noisy_depths) d *= std::exp(sigma * rng.gaussian());
    const BASolution relin = linearize_at(sol, noisy_depths);

    const InputGrads noisy_flow =
        ba_backward(relin, flow.grads, BackwardMode::kBlockSeparated);
    const InputGrads noisy_pose =
        ba_backward(relin, pose.grads, BackwardMode::kBlockSeparated);

    const double flow_snr =
        snr_db(flatten_delta(clean_flow), flatten_delta(noisy_flow));
    const double pose_snr =
        snr_db(flatten_delta(clean_pose), flatten_delta(noisy_pose));
    cells[cell] = {
        {sigma, "flow", seed, flow_snr, !std::isfinite(flow_snr)},
        {sigma, "pose", seed, pose_snr, !std::isfinite(pose_snr)},
    };
  });

  std::vector<SnrPoint> out;
  for (const auto& cell : cells) out.insert(out.end(), cell.begin(),
                                            cell.end());
  return out;
}

// ---------------------------------------------------------------------------

namespace {

double mean_pose_grad_err(const UpstreamGrads& a, const UpstreamGrads& b,
                          const std::vector<int>& frames) {
  if (frames.empty()) return 0.0;
  double total = 0.0;
  for (const int j : frames) total += (a.pose[j] - b.pose[j]).norm();
  return total / static_cast<double>(frames.size());
}

double mean_depth_grad_err(const UpstreamGrads& a, const UpstreamGrads& b,
                           const std::vector<int>& patches) {
  if (patches.empty()) return 0.0;
  double total = 0.0;
  for (const int k : patches) total += std::abs(a.depth[k] - b.depth[k]);
  return total / static_cast<double>(patches.size());
}

}  // namespace

std::vector<GradErrorPoint> exp_flow_interference(
    const InterferenceConfig& cfg) {
  const int n_cells = static_cast<int>(cfg.sigmas.size() * cfg.seeds.size());
  std::vector<std::vector<GradErrorPoint>> cells(n_cells);

  parallel_cells(n_cells, cfg.jobs, [&](int cell) {
    const size_t si = cell % cfg.sigmas.size();
    const size_t ri = cell / cfg.sigmas.size();
    const double sigma = cfg.sigmas[si];
    const std::uint64_t seed = cfg.seeds[ri];

    SynthConfig scfg = cfg.scene;
    scfg.seed = seed;
    const SynthScene scene = generate_scene(scfg);

    BAConfig ba;
    ba.n_iters = cfg.ba_iters;
    ba.damping = cfg.damping;
    ba.step_norm_stop = 1e-12;
    const BASolution sol = ba_solve(scene.graph, ba);
    const PatchGraph solved = apply_solution(scene.graph, sol);

    const UpstreamGrads clean = flow_loss(solved).grads;

    PatchGraph noisy = solved;
    std::vector<int> dirty_patches;
    if (cfg.target == InterferenceTarget::kDepthSubset) {
      for (int k = 0; k < static_cast<int>(solved.patches.size()); ++k) {
        if (solved.patches[k].source_frame == 0) dirty_patches.push_back(k);
      }
      noisy = perturb_depths(solved, dirty_patches, sigma, seed);
    } else {
      noisy = perturb_pose(solved, 0, sigma, cfg.rot_scale * sigma, seed);
    }
    const UpstreamGrads corrupted = flow_loss(noisy).grads;

    std::vector<GradErrorPoint> rows;
    if (cfg.target == InterferenceTarget::kDepthSubset) {
      std::vector<int> all_frames(solved.frames.size());
      for (size_t j = 0; j < all_frames.size(); ++j) {
        all_frames[j] = static_cast<int>(j);
      }
      std::vector<int> clean_patches;
      for (int k = 0; k < static_cast<int>(solved.patches.size()); ++k) {
        if (solved.patches[k].source_frame != 0) clean_patches.push_back(k);
      }
      rows.push_back({sigma, "pose_grad_err", seed,
                      mean_pose_grad_err(corrupted, clean, all_frames)});
      rows.push_back({sigma, "clean_depth_grad_err", seed,
                      mean_depth_grad_err(corrupted, clean, clean_patches)});
    } else {
      std::vector<int> other_frames;
      for (size_t j = 1; j < solved.frames.size(); ++j) {
        other_frames.push_back(static_cast<int>(j));
      }
      std::vector<int> all_patches(solved.patches.size());
      for (size_t k = 0; k < all_patches.size(); ++k) {
        all_patches[k] = static_cast<int>(k);
      }
      rows.push_back({sigma, "other_pose_grad_err", seed,
                      mean_pose_grad_err(corrupted, clean, other_frames)});
      rows.push_back({sigma, "depth_grad_err", seed,
                      mean_depth_grad_err(corrupted, clean, all_patches)});
    }
    cells[cell] = std::move(rows);
  });

  std::vector<GradErrorPoint> out;
  for (const auto& cell : cells) out.insert(out.end(), cell.begin(),
                                            cell.end());
  return out;
}

// ---------------------------------------------------------------------------

std::vector<SnrPoint> exp_weighted_snr(const WeightedSnrConfig& cfg) {
  const Predictor predictor(cfg.predictor_width);
  const Eigen::VectorXd theta = predictor.initial_theta(cfg.theta_seed);
  const int head_off = predictor.flow_head_offset();
  const int head_size = predictor.flow_head_size();

  std::vector<std::vector<SnrPoint>> cells(cfg.n_batches);
  parallel_cells(cfg.n_batches, cfg.jobs, [&](int b) {
    std::vector<Eigen::VectorXd> grads_flow, grads_weighted;
    for (int s = 0; s < cfg.batch_size; ++s) {
      // One geometry per batch; members differ in the planted corruption,
      // so the batch mean is the geometry-driven signal and the deviations
      // measure corruption-induced gradient noise.
      SynthConfig scfg = cfg.scene;
      scfg.seed = cfg.scene.seed + static_cast<std::uint64_t>(b);
      scfg.noise_seed =
          1 + scfg.seed * 1009 + static_cast<std::uint64_t>(s);
      const SynthScene scene = generate_scene(scfg);
      PatchGraph g = scene.graph;

      // Mid-training-style state: a fixed-magnitude, random-direction
      // offset from ground truth shared by all members of the batch, so
      // the batch mean gradient is the state-driven signal and deviations
      // measure corruption-induced noise.
      Philox rng(scfg.seed, stream_id(Stream::kInnerInit));
      for (Frame& f : g.frames) {
        Twistd xi;
        for (int c = 0; c < 6; ++c) xi(c) = rng.gaussian();
        xi.head<3>() *= cfg.state_pose_offset /
                        std::max(xi.head<3>().norm(), 1e-12);
        xi.tail<3>() *= 0.5 * cfg.state_pose_offset /
                        std::max(xi.tail<3>().norm(), 1e-12);
        f.pose = pose_compose(se3_exp(xi), f.pose);
      }
      for (Patch& p : g.patches) {
        p.depth *= std::exp(rng.uniform() < 0.5 ? cfg.state_depth_offset
                                                : -cfg.state_depth_offset);
      }

      // Features at the initial state; the predictor supplies the flow
      // revisions whose head the SNR is measured on.
      std::vector<FeatureVec> features(g.edges.size());
      for (size_t e = 0; e < g.edges.size(); ++e) {
        const Edge& edge = g.edges[e];
        const Patch& p = g.patches[edge.patch];
        const Reprojection<double> r = try_reproject(
            g.frames[p.source_frame].pose, g.frames[edge.target_frame].pose,
            p.center, p.depth, g.intrinsics);
        const Vec2d err = r.valid ? Vec2d(edge.target - r.uv) : Vec2d::Zero();
        FeatureVec f;
        f << err.x() / kFeatureScale, err.y() / kFeatureScale, 0.0, 0.0, 0.5,
            0.5, 1.0;
        features[e] = f;
      }
      const PredictorOutput pred = predictor.forward(theta, features);

      std::vector<Vec2d> sigma(g.edges.size());
      for (size_t e = 0; e < g.edges.size(); ++e) {
        if (cfg.oracle_weights) {
          sigma[e] = Vec2d::Constant(scene.labels.outlier[e] ? cfg.w_outlier
                                                             : cfg.w_inlier);
        } else {
          sigma[e] = pred.sigma[e];
        }
        g.edges[e].target += pred.delta[e];
        g.edges[e].weight = sigma[e];
      }

      BAConfig ba;
      ba.n_iters = cfg.ba_iters;
      ba.damping = cfg.damping;
      const BASolution sol = ba_solve(g, ba);

      for (const bool weighted : {false, true}) {
        const LossResult loss = weighted ? weighted_flow_loss(g, sol, sigma)
                                         : flow_loss(g, sol);
        const InputGrads in = ba_backward(sol, loss.grads);
        const Eigen::VectorXd grad_theta = predictor.backward(
            theta, features, in.delta,
            std::vector<Vec2d>(g.edges.size(), Vec2d::Zero()));
        (weighted ? grads_weighted : grads_flow)
            .push_back(grad_theta.segment(head_off, head_size));
      }
    }
    const double snr_flow = batch_snr(grads_flow);
    const double snr_weighted = batch_snr(grads_weighted);
    cells[b] = {
        {static_cast<double>(b), "flow", static_cast<std::uint64_t>(b),
         snr_flow, !std::isfinite(snr_flow)},
        {static_cast<double>(b), "weighted-flow",
         static_cast<std::uint64_t>(b), snr_weighted,
         !std::isfinite(snr_weighted)},
    };
  });

  std::vector<SnrPoint> out;
  for (const auto& cell : cells) out.insert(out.end(), cell.begin(),
                                            cell.end());
  return out;
}

// ---------------------------------------------------------------------------

double toy_wls_solve(const std::vector<double>& fhat,
                     const std::vector<double>& sigma) {
  if (fhat.size() != sigma.size() || fhat.empty()) {
    throw ConfigError("toy_wls_solve: size mismatch");
  }
  double num = 0.0, den = 0.0;
  for (size_t i = 0; i < fhat.size(); ++i) {
    num += sigma[i] * fhat[i];
    den += sigma[i];
  }
  if (den == 0.0) throw ConfigError("toy_wls_solve: all weights are zero");
  return num / den;
}

std::vector<double> toy_weight_grad(const std::vector<double>& fhat,
                                    const std::vector<double>& sigma,
                                    double f_gt) {
  const double f_star = toy_wls_solve(fhat, sigma);
  std::vector<double> grad(fhat.size(), 0.0);
  if (f_star == f_gt) return grad;  // zero-subgradient point
  double den = 0.0;
  for (const double s : sigma) den += s;
  const double sgn = f_star > f_gt ? 1.0 : -1.0;
  for (size_t i = 0; i < fhat.size(); ++i) {
    grad[i] = -sgn * (f_star - fhat[i]) / den;
  }
  return grad;
}

std::vector<ToyBiasPoint> toy_bias_experiment(const ToyBiasConfig& cfg) {
  std::vector<ToyBiasPoint> out;
  const auto sigmoid = [](double x) { return 1.0 / (1.0 + std::exp(-x)); };

  for (const std::uint64_t seed : cfg.seeds) {
    for (const std::string& arm : {std::string("control"),
                                   std::string("noclip"),
                                   std::string("clip")}) {
      const bool with_outliers = arm != "control";
      const bool with_clip = arm == "clip";
      // Stream keyed by the data configuration only, so the clipped and
      // unclipped arms see identical draws.
      Philox rng(seed, stream_id(Stream::kToyBias, with_outliers ? 1 : 0));
      std::vector<double> w(cfg.n_points, 0.0);  // sigmoid(0) = 0.5
      for (int step = 0; step < cfg.steps; ++step) {
        std::vector<double> fhat(cfg.n_points);
        std::vector<double> s(cfg.n_points);
        for (int i = 0; i < cfg.n_points; ++i) {
          const bool outlier =
              with_outliers && rng.uniform() < cfg.outlier_frac;
          fhat[i] = cfg.f_gt + cfg.sigma_inlier * rng.gaussian() +
                    (outlier ? cfg.outlier_offset : 0.0);
          s[i] = sigmoid(w[i]);
        }
        std::vector<double> grad = toy_weight_grad(fhat, s, cfg.f_gt);
        if (with_clip) {
          for (double& gi : grad) {
            gi = std::clamp(gi, cfg.clip_min, cfg.clip_max);
          }
        }
        double mean_weight = 0.0;
        for (int i = 0; i < cfg.n_points; ++i) {
          w[i] -= cfg.lr * grad[i] * s[i] * (1.0 - s[i]);
          mean_weight += sigmoid(w[i]);
        }
        out.push_back({step, arm, seed,
                       mean_weight / static_cast<double>(cfg.n_points)});
      }
    }
  }
  return out;
}

// ---------------------------------------------------------------------------

std::vector<CsvRow> to_rows(const std::string& experiment,
                            const std::vector<SnrPoint>& points) {
  std::vector<CsvRow> rows;
  rows.reserve(points.size());
  for (const SnrPoint& p : points) {
    rows.push_back({experiment, p.noise_level, p.loss_tag, p.seed,
                    p.sentinel ? 0.0 : p.snr, p.sentinel});
  }
  return rows;
}

std::vector<CsvRow> to_rows(const std::string& experiment,
                            const std::vector<GradErrorPoint>& points) {
  std::vector<CsvRow> rows;
  rows.reserve(points.size());
  for (const GradErrorPoint& p : points) {
    rows.push_back({experiment, p.noise_level, p.group_tag, p.seed, p.value,
                    false});
  }
  return rows;
}

std::vector<CsvRow> to_rows(const std::string& experiment,
                            const std::vector<ToyBiasPoint>& points) {
  std::vector<CsvRow> rows;
  rows.reserve(points.size());
  for (const ToyBiasPoint& p : points) {
    rows.push_back({experiment, static_cast<double>(p.step), p.arm, p.seed,
                    p.mean_weight, false});
  }
  return rows;
}

}  // namespace bagrad
