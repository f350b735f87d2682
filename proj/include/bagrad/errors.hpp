// Copyright (c) 2026 The bagrad authors. All rights reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace bagrad {

// A point reprojected behind the camera (z <= z_min).
struct CheiralityError : std::runtime_error {
  explicit CheiralityError(const std::string& msg) : std::runtime_error(msg) {}
};

// Nonpositive depth fed to unprojection.
struct InvalidDepthError : std::runtime_error {
  explicit InvalidDepthError(const std::string& msg)
      : std::runtime_error(msg) {}
};

// SE(3) logarithm requested at a rotation angle too close to pi.
struct LogDomainError : std::runtime_error {
  explicit LogDomainError(const std::string& msg) : std::runtime_error(msg) {}
};

// Collinear / coincident point sets in similarity alignment.
struct DegenerateAlignmentError : std::runtime_error {
  explicit DegenerateAlignmentError(const std::string& msg)
      : std::runtime_error(msg) {}
};

// Reduced pose system still singular after damping.
struct IllPosedWindowError : std::runtime_error {
  explicit IllPosedWindowError(const std::string& msg)
      : std::runtime_error(msg) {}
};

// Backward pass invoked on a solution without a cached linearization.
struct MissingCacheError : std::runtime_error {
  explicit MissingCacheError(const std::string& msg)
      : std::runtime_error(msg) {}
};

// Scene generation could not place valid patches within the retry budget.
struct InfeasibleConfigError : std::runtime_error {
  explicit InfeasibleConfigError(const std::string& msg)
      : std::runtime_error(msg) {}
};

// Zero flow-gradient norm in loss balancing; callers keep the previous
// coefficient.
struct DegenerateBalanceError : std::runtime_error {
  explicit DegenerateBalanceError(const std::string& msg)
      : std::runtime_error(msg) {}
};

// Malformed or inconsistent configuration / input file.
struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace bagrad
