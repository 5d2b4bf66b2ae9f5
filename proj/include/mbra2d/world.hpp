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

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "mbra2d/collision_field.hpp"
#include "mbra2d/geometry.hpp"
#include "mbra2d/rng.hpp"

namespace mbra2d {

struct CircleObstacle {
  Eigen::Vector2d center;
  double radius = 0.0;
};

struct SegmentObstacle {
  Eigen::Vector2d a;
  Eigen::Vector2d b;
};

/// Deterministic 2D environment: obstacle primitives, surface sample points
/// at fixed linear density, and the route the scripted operator follows.
struct WorldModel {
  std::uint64_t seed = 0;
  Eigen::Vector2d bounds_min{0.0, 0.0};
  Eigen::Vector2d bounds_max{24.0, 24.0};
  std::vector<CircleObstacle> circles;
  std::vector<SegmentObstacle> segments;
  std::vector<Eigen::Vector2d> surface_points;
  std::vector<Pose2> path_waypoints;
};

struct WorldConfig {
  Eigen::Vector2d bounds_min{0.0, 0.0};
  Eigen::Vector2d bounds_max{24.0, 24.0};
  int obstacle_count = 12;
  double obstacle_radius_min = 0.3;
  double obstacle_radius_max = 0.7;
  int segment_count = 2;
  double segment_length = 1.5;
  // Minimum distance from the route polyline to any obstacle surface. The
  // route is collision-free by construction because obstacles are only
  // accepted outside this corridor.
  double route_clearance = 0.8;
  int route_waypoint_count = 14;
  double route_step = 1.2;          // m between consecutive waypoints
  double route_margin = 2.0;        // keep the route this far from the walls
  double max_heading_change = 0.7;  // rad per route step
  double surface_point_spacing = 0.15;
  int max_retries = 400;
};

struct WorldGenerationError : std::runtime_error {
  explicit WorldGenerationError(const std::string& what)
      : std::runtime_error(what) {}
};

/// Deterministic in seed; throws WorldGenerationError (naming the seed) if an
/// obstacle cannot be placed outside the route corridor after max_retries.
WorldModel generate_world(std::uint64_t seed, const WorldConfig& config);

/// Exact signed distance from a point to the nearest obstacle surface.
/// Positive outside all obstacles; +inf in an empty world.
double clearance(const WorldModel& world, const Eigen::Vector2d& position);

/// Robot disc overlaps some obstacle primitive.
bool in_collision(const WorldModel& world, const Pose2& pose,
                  double footprint_radius);

/// Soft collision count over the world's surface points (see CollisionField).
double soft_collision(const WorldModel& world, const Pose2& pose,
                      double footprint_radius, double temperature);

/// Collision field over all of the world's surface points.
CollisionField make_collision_field(const WorldModel& world,
                                    double footprint_radius = 0.25,
                                    double temperature = 0.0125);

/// Field restricted to surface points within `radius` of `center`, expressed
/// in `frame`'s coordinates (the privileged local field used at deployment).
CollisionField make_local_collision_field(const WorldModel& world,
                                          const Pose2& frame, double radius,
                                          double footprint_radius = 0.25,
                                          double temperature = 0.0125);

/// Field built from a range scan taken at the chunk's start frame: beam
/// endpoints short of max_range are treated as obstacle surface samples in
/// the robot frame. This is the observation-derived field the relabeler uses.
CollisionField scan_to_collision_field(const std::vector<double>& scan,
                                       double max_range,
                                       double footprint_radius = 0.25,
                                       double temperature = 0.0125);

struct ScanConfig {
  int beam_count = 64;
  double max_range = 5.0;
  double range_sigma = 0.02;
};

/// K beams evenly spaced over 360 degrees, first beam along the heading.
/// Ranges are clipped to (0, max_range]; noise comes from `rng` (pass null
/// for the pure geometric scan).
std::vector<double> raycast_scan(const WorldModel& world, const Pose2& pose,
                                 const ScanConfig& config, Rng* rng);

/// Everything that corrupts the logged data, in one bundle.
struct NoiseProfile {
  double gps_sigma = 0.5;            // m
  double gps_bias_walk_sigma = 0.01; // m/sqrt(s)
  double compass_sigma = 0.05;       // rad
  double wheel_speed_sigma = 0.05;   // m/s (and rad/s for the rate channel)
  double slip_factor_min = 0.6;      // executed omega scale while slipping
  double slip_factor_max = 1.0;
  double slip_omega_threshold = 0.3; // rad/s; slip only during real turns
  double actuator_sigma_v = 0.05;    // m/s
  double actuator_sigma_omega = 0.1; // rad/s
  int delay_steps = 2;               // L
  double teleop_ou_sigma = 0.4;      // rad/s scale of the operator wobble
  double teleop_ou_theta = 0.5;      // 1/s mean reversion

  void validate() const;
};

/// One timestamped log record. gt_pose is ground truth, for evaluation only.
struct SensorFrame {
  double t = 0.0;
  Action commanded;
  double wheel_v = 0.0;
  double wheel_omega = 0.0;
  Eigen::Vector2d gps{0.0, 0.0};
  double compass = 0.0;
  std::vector<double> scan;
  Pose2 gt_pose;
};

struct TrajectoryLog {
  std::string trajectory_id;
  std::uint64_t world_seed = 0;
  std::uint64_t episode_seed = 0;
  NoiseProfile noise;
  std::vector<SensorFrame> frames;
};

struct TeleopConfig {
  double cruise_speed = 0.5;    // m/s; goals sampled ~7 s out stay ~3 m away
  double lookahead = 1.0;       // m along the route
  double heading_gain = 2.0;    // rad/s per rad of bearing error
  double slow_cos_floor = 0.15; // never slow below this fraction of cruise
  double arrive_radius = 0.5;   // m, route considered finished
  double overcorrect_prob = 0.05;
  int overcorrect_steps = 3;
  double overcorrect_mag = 0.6; // rad/s bias during an event
  double pause_prob = 0.0;      // chance per step of the operator pausing
  int pause_steps_min = 12;
  int pause_steps_max = 40;
};

struct TeleopState {
  double route_progress = 0.0;  // arc length along the route polyline
  double ou_v = 0.0;
  double ou_omega = 0.0;
  int overcorrect_left = 0;
  double overcorrect_bias = 0.0;
  int pause_left = 0;
  bool done = false;
};

/// Scripted noisy operator: pure pursuit toward the lookahead point on the
/// route, plus an Ornstein-Uhlenbeck wobble and occasional overcorrections.
Action scripted_teleoperator(const WorldModel& world, const Pose2& gt_pose,
                             const NoiseProfile& noise,
                             const TeleopConfig& config, TeleopState& state,
                             Rng& rng);

/// The true plant: commands pass through an L-step delay buffer, pick up
/// actuator noise, and lose turn rate to slip while turning hard.
struct PlantState {
  Pose2 gt;
  DelayBuffer buffer;
  bool slipping = false;
  double slip_factor = 1.0;
};

Action plant_execute(PlantState& state, const Action& commanded,
                     const NoiseProfile& noise, const ActionBounds& bounds,
                     Rng& plant_rng);

struct EpisodeConfig {
  TeleopConfig teleop;
  ActionBounds bounds;
  ScanConfig scan;
  int max_steps = 600;
  double dt = kControlDt;
};

/// Runs the scripted operator through the true plant and records frames at
/// 3 Hz. Deterministic in (world, episode_seed): the operator, plant, and
/// sensors draw from three independent derived streams.
TrajectoryLog simulate_episode(const WorldModel& world,
                               std::uint64_t episode_seed,
                               const NoiseProfile& noise,
                               const EpisodeConfig& config);

/// Re-executes the log's commanded actions through the plant stream derived
/// from the stored seed and returns the ground-truth poses that produces.
/// Bit-identical to the logged gt poses.
std::vector<Pose2> replay_ground_truth(const TrajectoryLog& log,
                                       const EpisodeConfig& config);

struct DatasetConfig {
  int world_count = 4;
  int episodes_per_world = 2;
  WorldConfig world;
  NoiseProfile noise;
  EpisodeConfig episode;
};

struct Dataset {
  std::uint64_t seed = 0;
  DatasetConfig config;
  std::vector<WorldModel> worlds;
  std::vector<TrajectoryLog> logs;          // ordered by (world, episode)
  std::vector<int> log_world_index;         // parallel to logs
};

/// Generates worlds and episodes, parallel over episodes with per-episode
/// derived seeds; output order is by (world index, episode index) regardless
/// of scheduling.
Dataset generate_dataset(std::uint64_t seed, const DatasetConfig& config,
                         int jobs);

/// Removes maximal sub-intervals where the windowed mean wheel speed stays
/// below speed_floor for longer than `window` seconds, splitting the log at
/// the removal boundaries. May return an empty list.
std::vector<TrajectoryLog> pause_filter(const TrajectoryLog& log,
                                        double speed_floor, double window);

/// Frame index ranges [first, last) kept by pause_filter, in order.
std::vector<std::pair<int, int>> pause_filter_intervals(
    const TrajectoryLog& log, double speed_floor, double window);

}  // namespace mbra2d
