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

#include "mbra2d/collision_field.hpp"

#include <cmath>

#include "mbra2d/geometry.hpp"

namespace mbra2d {

namespace {
// sigmoid((r - d)/tau) is below 2e-16 once d exceeds r + 36 tau; points past
// that contribute nothing representable, so they are skipped after a cheap
// squared-distance test.
constexpr double kTailWidths = 36.0;
}  // namespace

double CollisionField::value(const Pose2& pose) const {
  return value_with_gradient(pose, nullptr);
}

double CollisionField::value_with_gradient(const Pose2& pose,
                                           Eigen::Vector2d* grad_xy) const {
  const double r = footprint_radius;
  const double tau = temperature;
  const double cutoff = r + kTailWidths * tau;
  const double cutoff2 = cutoff * cutoff;
  const Eigen::Vector2d center(pose.x, pose.y);

  double sum = 0.0;
  Eigen::Vector2d g = Eigen::Vector2d::Zero();
  for (const Eigen::Vector2d& p : points) {
    const Eigen::Vector2d d = p - center;
    const double d2 = d.squaredNorm();
    if (d2 > cutoff2) continue;
    const double dist = std::sqrt(d2);
    const double z = (r - dist) / tau;
    const double s = 1.0 / (1.0 + std::exp(-z));
    sum += s;
    if (grad_xy && dist > 1e-12) {
      // Moving the footprint toward the point raises the soft count.
      g += (s * (1.0 - s) / (tau * dist)) * d;
    }
  }
  if (grad_xy) *grad_xy = g;
  return sum;
}

int CollisionField::hard_count(const Pose2& pose) const {
  const double r2 = footprint_radius * footprint_radius;
  const Eigen::Vector2d center(pose.x, pose.y);
  int count = 0;
  for (const Eigen::Vector2d& p : points) {
    if ((p - center).squaredNorm() < r2) ++count;
  }
  return count;
}

}  // namespace mbra2d
