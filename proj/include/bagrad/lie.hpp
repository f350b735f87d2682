// Copyright (c) 2026 The bagrad authors. All rights reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// SO(3)/SE(3)/Sim(3) elements and tangent-space maps.
//
// Conventions used throughout the project:
//   * A Pose maps points into the camera frame: x_cam = q * x + t
//     (world-to-camera storage).
//   * Twists are ordered [v; w] with the translational block first.
//   * All pose Jacobians are taken w.r.t. the left perturbation
//     T <- exp(xi) * T.

#pragma once

#include <cmath>
#include <vector>

#include <Eigen/Core>
#include <Eigen/Geometry>
#include <Eigen/SVD>

#include "bagrad/errors.hpp"

namespace bagrad {

template <typename S> using Vec2 = Eigen::Matrix<S, 2, 1>;
template <typename S> using Vec3 = Eigen::Matrix<S, 3, 1>;
template <typename S> using Vec6 = Eigen::Matrix<S, 6, 1>;
template <typename S> using Mat2 = Eigen::Matrix<S, 2, 2>;
template <typename S> using Mat3 = Eigen::Matrix<S, 3, 3>;
template <typename S> using Mat6 = Eigen::Matrix<S, 6, 6>;
template <typename S> using Mat23 = Eigen::Matrix<S, 2, 3>;
template <typename S> using Mat26 = Eigen::Matrix<S, 2, 6>;

using Vec2d = Vec2<double>;
using Vec3d = Vec3<double>;
using Vec6d = Vec6<double>;
using Mat2d = Mat2<double>;
using Mat3d = Mat3<double>;
using Mat6d = Mat6<double>;
using Mat23d = Mat23<double>;
using Mat26d = Mat26<double>;

// Tangent vector of SE(3), [v; w].
template <typename S> using Twist = Vec6<S>;
using Twistd = Twist<double>;

template <typename S>
Mat3<S> skew(const Vec3<S>& v) {
  Mat3<S> m;
  // clang-format off
  m <<  S(0), -v.z(),  v.y(),
       v.z(),   S(0), -v.x(),
      -v.y(),  v.x(),   S(0);
  // clang-format on
  return m;
}

// Rigid transform with unit-quaternion rotation. Renormalized after every
// composition so the unit-norm invariant survives long iteration chains.
template <typename S>
struct Pose {
  Eigen::Quaternion<S> q{S(1), S(0), S(0), S(0)};
  Vec3<S> t{S(0), S(0), S(0)};

  static Pose identity() { return Pose{}; }

  Vec3<S> operator*(const Vec3<S>& x) const { return q * x + t; }

  Mat3<S> rotation() const { return q.toRotationMatrix(); }

  // Camera center for world-to-camera poses: -R^T t.
  Vec3<S> center() const { return -(q.conjugate() * t); }
};

using Posed = Pose<double>;

template <typename S>
Pose<S> pose_compose(const Pose<S>& a, const Pose<S>& b) {
  Pose<S> out;
  out.q = a.q * b.q;
  out.q.normalize();
  out.t = a.q * b.t + a.t;
  return out;
}

template <typename S>
Pose<S> pose_inverse(const Pose<S>& a) {
  Pose<S> out;
  out.q = a.q.conjugate();
  out.t = -(out.q * a.t);
  return out;
}

template <typename S>
Eigen::Quaternion<S> so3_exp_quat(const Vec3<S>& w) {
  const S theta2 = w.squaredNorm();
  const S theta = std::sqrt(theta2);
  S half_sinc;  // sin(theta/2)/theta
  S cos_half;
  if (theta < S(1e-8)) {
    half_sinc = S(0.5) - theta2 / S(48);
    cos_half = S(1) - theta2 / S(8);
  } else {
    half_sinc = std::sin(S(0.5) * theta) / theta;
    cos_half = std::cos(S(0.5) * theta);
  }
  Eigen::Quaternion<S> q(cos_half, half_sinc * w.x(), half_sinc * w.y(),
                         half_sinc * w.z());
  q.normalize();
  return q;
}

// Rotation-vector logarithm; angle in [0, pi]. Throws once the angle is
// within 1e-6 of pi, where the logarithm branch is ambiguous.
template <typename S>
Vec3<S> so3_log(const Eigen::Quaternion<S>& q_in) {
  Eigen::Quaternion<S> q = q_in;
  if (q.w() < S(0)) q.coeffs() = -q.coeffs();
  const Vec3<S> v = q.vec();
  const S vn = v.norm();
  const S angle = S(2) * std::atan2(vn, q.w());
  if (angle > S(M_PI) - S(1e-6)) {
    throw LogDomainError("so3_log: rotation angle within 1e-6 of pi");
  }
  if (vn < S(1e-9)) {
    // sin(theta/2) ~ theta/2: log ~ 2 v / w with a cubic correction.
    return v * (S(2) / q.w()) * (S(1) - vn * vn / (S(3) * q.w() * q.w()));
  }
  return v * (angle / vn);
}

// Scalar coefficient helpers with series fallbacks below theta = 1e-2.
namespace lie_detail {

template <typename S>
S coef_one_minus_cos(S theta) {  // (1 - cos t) / t^2
  const S t2 = theta * theta;
  if (theta < S(1e-2)) return S(0.5) - t2 / S(24) + t2 * t2 / S(720);
  return (S(1) - std::cos(theta)) / t2;
}

template <typename S>
S coef_theta_minus_sin(S theta) {  // (t - sin t) / t^3
  const S t2 = theta * theta;
  if (theta < S(1e-2))
    return S(1) / S(6) - t2 / S(120) + t2 * t2 / S(5040);
  return (theta - std::sin(theta)) / (t2 * theta);
}

template <typename S>
S coef_cos_deficit(S theta) {  // (1 - t^2/2 - cos t) / t^4
  const S t2 = theta * theta;
  if (theta < S(1e-2))
    return S(1) / S(24) - t2 / S(720) + t2 * t2 / S(40320);
  return (S(1) - S(0.5) * t2 - std::cos(theta)) / (t2 * t2);
}

template <typename S>
S coef_sin_deficit(S theta) {  // (t - sin t - t^3/6) / t^5
  const S t2 = theta * theta;
  if (theta < S(1e-2))
    return -S(1) / S(120) + t2 / S(5040) - t2 * t2 / S(362880);
  return (theta - std::sin(theta) - t2 * theta / S(6)) / (t2 * t2 * theta);
}

}  // namespace lie_detail

template <typename S>
Mat3<S> so3_left_jacobian(const Vec3<S>& w) {
  const S theta = w.norm();
  const Mat3<S> wx = skew(w);
  return Mat3<S>::Identity() + lie_detail::coef_one_minus_cos(theta) * wx +
         lie_detail::coef_theta_minus_sin(theta) * wx * wx;
}

template <typename S>
Mat3<S> so3_left_jacobian_inv(const Vec3<S>& w) {
  const S theta = w.norm();
  const Mat3<S> wx = skew(w);
  S c;
  if (theta < S(1e-2)) {
    const S t2 = theta * theta;
    c = S(1) / S(12) + t2 / S(720) + t2 * t2 / S(30240);
  } else {
    c = (S(1) / (theta * theta)) -
        (S(1) + std::cos(theta)) / (S(2) * theta * std::sin(theta));
  }
  return Mat3<S>::Identity() - S(0.5) * wx + c * wx * wx;
}

template <typename S>
Pose<S> se3_exp(const Twist<S>& xi) {
  const Vec3<S> v = xi.template head<3>();
  const Vec3<S> w = xi.template tail<3>();
  Pose<S> out;
  out.q = so3_exp_quat(w);
  out.t = so3_left_jacobian(w) * v;
  return out;
}

template <typename S>
Twist<S> se3_log(const Pose<S>& p) {
  const Vec3<S> w = so3_log(p.q);
  Twist<S> xi;
  xi.template tail<3>() = w;
  xi.template head<3>() = so3_left_jacobian_inv(w) * p.t;
  return xi;
}

// d(Q^-1 P) as a twist norm.
template <typename S>
S geodesic_distance(const Pose<S>& p, const Pose<S>& q) {
  return se3_log(pose_compose(pose_inverse(q), p)).norm();
}

// Adjoint: exp(adjoint(T) * xi) == T * exp(xi) * T^-1.
template <typename S>
Mat6<S> se3_adjoint(const Pose<S>& p) {
  const Mat3<S> r = p.rotation();
  Mat6<S> adj = Mat6<S>::Zero();
  adj.template block<3, 3>(0, 0) = r;
  adj.template block<3, 3>(0, 3) = skew(p.t) * r;
  adj.template block<3, 3>(3, 3) = r;
  return adj;
}

// Coupling block of the SE(3) left Jacobian (Barfoot's Q matrix).
template <typename S>
Mat3<S> se3_jacobian_q(const Vec3<S>& v, const Vec3<S>& w) {
  const S theta = w.norm();
  const Mat3<S> vx = skew(v);
  const Mat3<S> wx = skew(w);
  const S c1 = lie_detail::coef_theta_minus_sin(theta);
  const S c2 = lie_detail::coef_cos_deficit(theta);
  const S c3 = S(0.5) * (c2 - S(3) * lie_detail::coef_sin_deficit(theta));
  const Mat3<S> wxvx = wx * vx;
  const Mat3<S> vxwx = vx * wx;
  const Mat3<S> wxvxwx = wxvx * wx;
  return S(0.5) * vx + c1 * (wxvx + vxwx + wxvxwx) -
         c2 * (wx * wxvx + vxwx * wx - S(3) * wxvxwx) -
         c3 * (wxvxwx * wx + wx * wxvxwx);
}

// Inverse left Jacobian of SE(3): d/d eta Log(exp(eta) * T) at eta = 0
// equals se3_left_jacobian_inv(Log(T)).
template <typename S>
Mat6<S> se3_left_jacobian_inv(const Twist<S>& xi) {
  const Vec3<S> v = xi.template head<3>();
  const Vec3<S> w = xi.template tail<3>();
  const Mat3<S> jli = so3_left_jacobian_inv(w);
  const Mat3<S> q = se3_jacobian_q(v, w);
  Mat6<S> out = Mat6<S>::Zero();
  out.template block<3, 3>(0, 0) = jli;
  out.template block<3, 3>(3, 3) = jli;
  out.template block<3, 3>(0, 3) = -jli * q * jli;
  return out;
}

// Similarity transform x -> s * (q * x) + t.
template <typename S>
struct Sim3 {
  S scale{S(1)};
  Pose<S> pose;

  Vec3<S> operator*(const Vec3<S>& x) const {
    return scale * (pose.q * x) + pose.t;
  }
};

using Sim3d = Sim3<double>;

// Closed-form similarity alignment: returns the Sim3 minimizing
// sum_i || gt_i - (s R est_i + t) ||^2. Requires >= 3 well-spread points;
// collinear or coincident sets raise DegenerateAlignmentError.
template <typename S>
Sim3<S> umeyama_sim3(const std::vector<Vec3<S>>& est,
                     const std::vector<Vec3<S>>& gt) {
  if (est.size() != gt.size() || est.size() < 3) {
    throw DegenerateAlignmentError("umeyama_sim3: need >= 3 point pairs");
  }
  const S n = static_cast<S>(est.size());
  Vec3<S> mu_e = Vec3<S>::Zero();
  Vec3<S> mu_g = Vec3<S>::Zero();
  for (size_t i = 0; i < est.size(); ++i) {
    mu_e += est[i];
    mu_g += gt[i];
  }
  mu_e /= n;
  mu_g /= n;

  Mat3<S> cov = Mat3<S>::Zero();  // gt-centered times est-centered^T
  S var_e = S(0);
  for (size_t i = 0; i < est.size(); ++i) {
    const Vec3<S> de = est[i] - mu_e;
    const Vec3<S> dg = gt[i] - mu_g;
    cov += dg * de.transpose();
    var_e += de.squaredNorm();
  }
  cov /= n;
  var_e /= n;
  if (var_e < S(1e-18)) {
    throw DegenerateAlignmentError("umeyama_sim3: coincident source points");
  }

  Eigen::JacobiSVD<Mat3<S>> svd(cov,
                                Eigen::ComputeFullU | Eigen::ComputeFullV);
  const Vec3<S> sv = svd.singularValues();
  if (sv(1) < S(1e-12) * std::max(sv(0), S(1e-30))) {
    throw DegenerateAlignmentError("umeyama_sim3: collinear point set");
  }
  Vec3<S> flip = Vec3<S>::Ones();
  if ((svd.matrixU() * svd.matrixV().transpose()).determinant() < S(0)) {
    flip(2) = S(-1);
  }
  const Mat3<S> rot =
      svd.matrixU() * flip.asDiagonal() * svd.matrixV().transpose();
  const S scale = sv.dot(flip) / var_e;
  if (!(scale > S(0))) {
    throw DegenerateAlignmentError("umeyama_sim3: nonpositive scale");
  }

  Sim3<S> out;
  out.scale = scale;
  out.pose.q = Eigen::Quaternion<S>(rot);
  out.pose.q.normalize();
  out.pose.t = mu_g - scale * (out.pose.q * mu_e);
  return out;
}

}  // namespace bagrad
