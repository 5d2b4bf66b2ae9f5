// Copyright 2026 The mbra2d Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <vector>

#include <Eigen/Core>

namespace mbra2d {

struct Pose2;

/// Differentiable soft obstacle-proximity field over a set of surface sample
/// points. Each point contributes sigmoid((footprint_radius - dist)/tau), so
/// the value approaches the hard in-footprint point count as tau -> 0 while
/// staying smooth in the pose.
struct CollisionField {
  std::vector<Eigen::Vector2d> points;
  double footprint_radius = 0.25;  // m
  double temperature = 0.0125;     // m, default footprint_radius / 20

  /// Soft count at a pose. Total function: empty fields evaluate to zero.
  double value(const Pose2& pose) const;

  /// Soft count plus its gradient with respect to the pose position. The
  /// footprint is circular, so the heading component of the gradient is zero.
  double value_with_gradient(const Pose2& pose,
                             Eigen::Vector2d* grad_xy) const;

  /// Number of points strictly inside the footprint disc.
  int hard_count(const Pose2& pose) const;

  bool empty() const { return points.empty(); }
};

}  // namespace mbra2d
