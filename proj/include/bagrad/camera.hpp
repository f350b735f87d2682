// Copyright (c) 2026 The bagrad authors. All rights reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Pinhole projection, inverse projection, and the analytic Jacobians of a
// reprojected patch center w.r.t. the two camera poses and the patch depth.
//
// Relative-transform convention: poses are world-to-camera, and the
// transform taking camera-i points to camera-j points is
//   T_ij = T_j * T_i^-1.

#pragma once

#include <cmath>

#include "bagrad/errors.hpp"
#include "bagrad/lie.hpp"

namespace bagrad {

template <typename S>
struct Intrinsics {
  S fx{S(1)}, fy{S(1)};
  S cx{S(0)}, cy{S(0)};
};

using Intrinsicsd = Intrinsics<double>;

inline constexpr double kDefaultZMin = 1e-3;

// Ray direction through pixel p at unit depth.
template <typename S>
Vec3<S> pixel_ray(const Vec2<S>& p, const Intrinsics<S>& k) {
  return Vec3<S>((p.x() - k.cx) / k.fx, (p.y() - k.cy) / k.fy, S(1));
}

template <typename S>
Vec3<S> unproject(const Vec2<S>& p, S depth, const Intrinsics<S>& k) {
  if (!(depth > S(0))) {
    throw InvalidDepthError("unproject: depth must be positive");
  }
  return depth * pixel_ray(p, k);
}

template <typename S>
Vec2<S> pinhole(const Vec3<S>& x, const Intrinsics<S>& k) {
  return Vec2<S>(k.fx * x.x() / x.z() + k.cx, k.fy * x.y() / x.z() + k.cy);
}

// Projection of a transformed point; throws behind the camera so callers
// can decide whether to drop the edge or clamp.
template <typename S>
Vec2<S> project(const Pose<S>& t, const Vec3<S>& x, const Intrinsics<S>& k,
                S z_min = S(kDefaultZMin)) {
  const Vec3<S> y = t * x;
  if (!(y.z() > z_min)) {
    throw CheiralityError("project: point behind camera");
  }
  return pinhole(y, k);
}

// Non-throwing reprojection used inside iterative solvers: carries the
// camera-frame depth and a validity flag instead of failing.
template <typename S>
struct Reprojection {
  Vec2<S> uv{S(0), S(0)};
  S z{S(0)};
  bool valid{false};
};

template <typename S>
Reprojection<S> try_reproject(const Pose<S>& pose_src, const Pose<S>& pose_dst,
                              const Vec2<S>& center, S depth,
                              const Intrinsics<S>& k,
                              S z_min = S(kDefaultZMin)) {
  const Pose<S> t_ij = pose_compose(pose_dst, pose_inverse(pose_src));
  const Vec3<S> y = t_ij * (depth * pixel_ray(center, k));
  Reprojection<S> out;
  out.z = y.z();
  if (y.z() > z_min) {
    out.uv = pinhole(y, k);
    out.valid = true;
  }
  return out;
}

// Full reprojection pipeline for one patch-frame edge.
template <typename S>
Vec2<S> reproject(const Pose<S>& pose_src, const Pose<S>& pose_dst,
                  const Vec2<S>& center, S depth, const Intrinsics<S>& k,
                  S z_min = S(kDefaultZMin)) {
  if (!(depth > S(0))) {
    throw InvalidDepthError("reproject: depth must be positive");
  }
  const Reprojection<S> r =
      try_reproject(pose_src, pose_dst, center, depth, k, z_min);
  if (!r.valid) {
    throw CheiralityError("reproject: point behind target camera");
  }
  return r.uv;
}

// Jacobians of the reprojected pixel w.r.t. the left-perturbation twists of
// the target pose T_j and source pose T_i, and w.r.t. the patch depth.
template <typename S>
struct ProjJacobians {
  Mat26<S> j_pose_target = Mat26<S>::Zero();
  Mat26<S> j_pose_source = Mat26<S>::Zero();
  Vec2<S> j_depth = Vec2<S>::Zero();
  Vec2<S> reprojection = Vec2<S>::Zero();
  bool valid = false;
};

using ProjJacobiansd = ProjJacobians<double>;

template <typename S>
ProjJacobians<S> proj_jacobians(const Pose<S>& pose_src,
                                const Pose<S>& pose_dst, const Vec2<S>& center,
                                S depth, const Intrinsics<S>& k,
                                S z_min = S(kDefaultZMin)) {
  ProjJacobians<S> out;
  const Pose<S> t_ij = pose_compose(pose_dst, pose_inverse(pose_src));
  const Vec3<S> ray = pixel_ray(center, k);
  const Vec3<S> x_src = depth * ray;
  const Vec3<S> y = t_ij * x_src;
  if (!(y.z() > z_min)) {
    return out;  // invalid; Jacobians stay zero
  }

  const S iz = S(1) / y.z();
  Mat23<S> dpi;  // d pinhole / d point
  // clang-format off
  dpi << k.fx * iz, S(0),      -k.fx * y.x() * iz * iz,
         S(0),      k.fy * iz, -k.fy * y.y() * iz * iz;
  // clang-format on

  const Mat3<S> r_ij = t_ij.rotation();

  // Left perturbation of T_j moves y by [I | -skew(y)] xi.
  out.j_pose_target.template block<2, 3>(0, 0) = dpi;
  out.j_pose_target.template block<2, 3>(0, 3) = -dpi * skew(y);

  // Left perturbation of T_i moves y by -R_ij [I | -skew(x_src)] xi.
  const Mat23<S> dpi_r = dpi * r_ij;
  out.j_pose_source.template block<2, 3>(0, 0) = -dpi_r;
  out.j_pose_source.template block<2, 3>(0, 3) = dpi_r * skew(x_src);

  out.j_depth = dpi_r * ray;
  out.reprojection = pinhole(y, k);
  out.valid = true;
  return out;
}

}  // namespace bagrad
