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

#include "mbra2d/geometry.hpp"
#include "mbra2d/world.hpp"

namespace mbra2d {

struct BeliefState {
  Pose2 mean;
  Eigen::Matrix3d cov = Eigen::Matrix3d::Identity();
};

/// Per-frame fused beliefs plus back-derived body rates, aligned 1:1 with the
/// input log's frames.
struct SmoothedTrajectory {
  std::vector<BeliefState> states;
  std::vector<Action> rates;
  bool regularized = false;  // some innovation covariance needed jitter
};

struct EkfConfig {
  double gps_sigma = 0.5;
  double compass_sigma = 0.05;
  // Per-step noise of the blended body-rate input.
  double rate_sigma_v = 0.07;
  double rate_sigma_omega = 0.19;
  double process_pos_floor = 1e-8;
  double process_theta_floor = 1e-8;
  double init_pos_sigma = 0.7;
  double init_theta_sigma = 0.15;
  // 0 = trust commanded rates only, 1 = wheel measurements only. Commanded
  // rates are shifted by delay_steps before blending so both inputs describe
  // the same interval.
  double command_blend = 0.5;
  int delay_steps = 0;
  double dt = kControlDt;

  /// The smoother is handed the generator's true sigmas; the GPS bias walk is
  /// absorbed into the position measurement noise.
  static EkfConfig from_noise_profile(const NoiseProfile& profile);
};

/// Causal pass: predict with the blended commanded/wheel rates, update with
/// GPS (x, y) and compass (angle-wrapped innovation). Covariances stay
/// symmetric positive-definite via Joseph-form updates plus symmetrization.
std::vector<BeliefState> ekf_forward(const TrajectoryLog& log,
                                     const EkfConfig& config,
                                     bool* regularized = nullptr);

/// Identical filter run over the time-reversed log with negated body rates;
/// the output is returned in forward time order.
std::vector<BeliefState> ekf_backward(const TrajectoryLog& log,
                                      const EkfConfig& config,
                                      bool* regularized = nullptr);

/// Per-frame information-form fusion of the two passes; headings are fused
/// on the circle. Throws std::invalid_argument on length mismatch.
SmoothedTrajectory fuse_bidirectional(const std::vector<BeliefState>& forward,
                                      const std::vector<BeliefState>& backward);

/// forward + backward + fusion + rate extraction in one call.
SmoothedTrajectory smooth_trajectory(const TrajectoryLog& log,
                                     const EkfConfig& config);

/// Pose of frame j expressed in frame i's coordinates (fused means).
/// Requires 0 <= i <= j < length.
Pose2 relative_pose(const SmoothedTrajectory& smoothed, int i, int j);

/// Pose track obtained by integrating the commanded actions only.
std::vector<Pose2> dead_reckon(const TrajectoryLog& log, double dt = kControlDt);

/// RMS position error of an estimated track against the log's ground truth.
double position_rmse(const std::vector<Pose2>& estimate, const TrajectoryLog& log);
double position_rmse(const std::vector<BeliefState>& estimate,
                     const TrajectoryLog& log);

/// RMS error of the raw GPS fixes against ground truth.
double gps_rmse(const TrajectoryLog& log);

}  // namespace mbra2d
