// Copyright (c) 2026 The bagrad authors. All rights reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Minimal per-edge flow/weight predictor with a hand-derived backward pass
// (no autodiff). Per edge:
//
//   f     = [err/s, delta_prev/s, sigma_prev, 1]          (7 inputs)
//   h     = tanh(W1 f + b1)                               (hidden width)
//   delta = s * (W2 h + b2)                               (flow head)
//   sigma = sigmoid(W3 h + b3)                            (weight head)
//
// s = kFeatureScale keeps pixel-valued inputs and outputs O(1) in
// parameter space. Parameters live in one flat vector, ordered
// [W1 row-major, b1, W2, b2, W3, b3].

#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Core>

#include "bagrad/lie.hpp"

namespace bagrad {

using FeatureVec = Eigen::Matrix<double, 7, 1>;

inline constexpr double kFeatureScale = 10.0;  // pixels

struct PredictorOutput {
  std::vector<Vec2d> delta;
  std::vector<Vec2d> sigma;
};

class Predictor {
 public:
  static constexpr int kInDim = 7;

  explicit Predictor(int width = 16);

  int width() const { return width_; }
  int n_params() const;

  // Offset and size of the flow-head block (W2, b2) inside theta; the
  // batch-SNR analysis reads gradients of exactly this block.
  int flow_head_offset() const;
  int flow_head_size() const { return 2 * width_ + 2; }

  // W1 drawn from a seeded stream, scaled by 1/sqrt(in); both heads start
  // at zero so the initial outputs are delta = 0, sigma = 0.5.
  Eigen::VectorXd initial_theta(std::uint64_t seed) const;

  PredictorOutput forward(const Eigen::VectorXd& theta,
                          const std::vector<FeatureVec>& features) const;

  // Exact gradient of the forward map contracted with the upstream
  // cotangents on delta and sigma.
  Eigen::VectorXd backward(const Eigen::VectorXd& theta,
                           const std::vector<FeatureVec>& features,
                           const std::vector<Vec2d>& up_delta,
                           const std::vector<Vec2d>& up_sigma) const;

 private:
  int width_;
};

}  // namespace bagrad
