// Copyright (c) 2026 The bagrad authors. All rights reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0

#include "bagrad/predictor.hpp"

#include <cmath>

#include "bagrad/errors.hpp"
#include "bagrad/rng.hpp"

namespace bagrad {

namespace {

struct ParamViews {
  Eigen::Map<const Eigen::MatrixXd> w1;
  Eigen::Map<const Eigen::VectorXd> b1;
  Eigen::Map<const Eigen::MatrixXd> w2;
  Eigen::Map<const Eigen::VectorXd> b2;
  Eigen::Map<const Eigen::MatrixXd> w3;
  Eigen::Map<const Eigen::VectorXd> b3;
};

// Maps the flat parameter vector onto the layer blocks. Matrices are
// stored row-major in the flat vector but mapped column-major as their
// transpose-with-swapped-dims, which works out because we only ever use
// them through Eigen maps sized (rows, cols) in storage order below.
ParamViews view_params(const Eigen::VectorXd& theta, int width) {
  const double* p = theta.data();
  const int w1n = width * Predictor::kInDim;
  return ParamViews{
      {p, Predictor::kInDim, width},           // W1^T, kInDim x width
      {p + w1n, width},                        // b1
      {p + w1n + width, width, 2},             // W2^T, width x 2
      {p + w1n + width + 2 * width, 2},        // b2
      {p + w1n + width + 2 * width + 2, width, 2},  // W3^T
      {p + w1n + width + 4 * width + 2, 2},    // b3
  };
}

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace

Predictor::Predictor(int width) : width_(width) {
  if (width < 1) throw ConfigError("Predictor: width must be >= 1");
}

int Predictor::n_params() const {
  return width_ * kInDim + width_ + (2 * width_ + 2) + (2 * width_ + 2);
}

int Predictor::flow_head_offset() const { return width_ * kInDim + width_; }

Eigen::VectorXd Predictor::initial_theta(std::uint64_t seed) const {
  Eigen::VectorXd theta = Eigen::VectorXd::Zero(n_params());
  Philox rng(seed, stream_id(Stream::kPredictorInit));
  const double scale = 0.5 / std::sqrt(static_cast<double>(kInDim));
  for (int i = 0; i < width_ * kInDim; ++i) {
    theta(i) = scale * rng.gaussian();
  }
  return theta;
}

PredictorOutput Predictor::forward(
    const Eigen::VectorXd& theta,
    const std::vector<FeatureVec>& features) const {
  if (theta.size() != n_params()) {
    throw ConfigError("Predictor::forward: parameter vector size mismatch");
  }
  const ParamViews v = view_params(theta, width_);
  PredictorOutput out;
  out.delta.resize(features.size());
  out.sigma.resize(features.size());
  for (size_t e = 0; e < features.size(); ++e) {
    const Eigen::VectorXd h =
        (v.w1.transpose() * features[e] + v.b1).array().tanh().matrix();
    const Vec2d d = v.w2.transpose() * h + v.b2;
    const Vec2d a3 = v.w3.transpose() * h + v.b3;
    out.delta[e] = kFeatureScale * d;
    out.sigma[e] = Vec2d(sigmoid(a3.x()), sigmoid(a3.y()));
  }
  return out;
}

Eigen::VectorXd Predictor::backward(const Eigen::VectorXd& theta,
                                    const std::vector<FeatureVec>& features,
                                    const std::vector<Vec2d>& up_delta,
                                    const std::vector<Vec2d>& up_sigma) const {
  if (theta.size() != n_params() || up_delta.size() != features.size() ||
      up_sigma.size() != features.size()) {
    throw ConfigError("Predictor::backward: size mismatch");
  }
  const ParamViews v = view_params(theta, width_);
  Eigen::VectorXd grad = Eigen::VectorXd::Zero(n_params());
  const int w1n = width_ * kInDim;
  Eigen::Map<Eigen::MatrixXd> g_w1(grad.data(), kInDim, width_);
  Eigen::Map<Eigen::VectorXd> g_b1(grad.data() + w1n, width_);
  Eigen::Map<Eigen::MatrixXd> g_w2(grad.data() + w1n + width_, width_, 2);
  Eigen::Map<Eigen::VectorXd> g_b2(grad.data() + w1n + width_ + 2 * width_, 2);
  Eigen::Map<Eigen::MatrixXd> g_w3(grad.data() + w1n + width_ + 2 * width_ + 2,
                                   width_, 2);
  Eigen::Map<Eigen::VectorXd> g_b3(
      grad.data() + w1n + width_ + 4 * width_ + 2, 2);

  for (size_t e = 0; e < features.size(); ++e) {
    const Eigen::VectorXd a1 = v.w1.transpose() * features[e] + v.b1;
    const Eigen::VectorXd h = a1.array().tanh().matrix();
    const Vec2d a3 = v.w3.transpose() * h + v.b3;
    const Vec2d s(sigmoid(a3.x()), sigmoid(a3.y()));

    const Vec2d gd = kFeatureScale * up_delta[e];
    const Vec2d ga3 = up_sigma[e].cwiseProduct(
        s.cwiseProduct(Vec2d::Ones() - s));

    g_w2 += h * gd.transpose();
    g_b2 += gd;
    g_w3 += h * ga3.transpose();
    g_b3 += ga3;

    const Eigen::VectorXd gh = v.w2 * gd + v.w3 * ga3;
    const Eigen::VectorXd ga1 =
        gh.cwiseProduct((1.0 - h.array().square()).matrix());
    g_w1 += features[e] * ga1.transpose();
    g_b1 += ga1;
  }
  return grad;
}

}  // namespace bagrad
