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

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "mbra2d/world.hpp"
#include "oracles.hpp"

using namespace mbra2d;

namespace {

bool worlds_equal(const WorldModel& a, const WorldModel& b) {
  if (a.circles.size() != b.circles.size()) return false;
  for (std::size_t i = 0; i < a.circles.size(); ++i) {
    if (a.circles[i].center != b.circles[i].center ||
        a.circles[i].radius != b.circles[i].radius)
      return false;
  }
  if (a.path_waypoints.size() != b.path_waypoints.size()) return false;
  for (std::size_t i = 0; i < a.path_waypoints.size(); ++i) {
    if (a.path_waypoints[i].x != b.path_waypoints[i].x ||
        a.path_waypoints[i].y != b.path_waypoints[i].y ||
        a.path_waypoints[i].theta != b.path_waypoints[i].theta)
      return false;
  }
  return a.surface_points == b.surface_points;
}

// Dense sampling along the route; independent of the construction-time check.
double min_route_clearance(const WorldModel& world) {
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t i = 1; i < world.path_waypoints.size(); ++i) {
    const Eigen::Vector2d a = world.path_waypoints[i - 1].position();
    const Eigen::Vector2d b = world.path_waypoints[i].position();
    const int steps = std::max(2, static_cast<int>((b - a).norm() / 0.02));
    for (int s = 0; s <= steps; ++s) {
      const Eigen::Vector2d p = a + (b - a) * (static_cast<double>(s) / steps);
      best = std::min(best, clearance(world, p));
    }
  }
  return best;
}

}  // namespace

TEST_CASE("generate_world: empty world has zero soft collision everywhere") {
  WorldConfig cfg;
  cfg.obstacle_count = 0;
  cfg.segment_count = 0;
  const WorldModel world = generate_world(3, cfg);
  CHECK(world.surface_points.empty());
  Rng rng(5);
  for (int i = 0; i < 50; ++i) {
    const Pose2 p{rng.uniform(0, 24), rng.uniform(0, 24), 0.0};
    CHECK(soft_collision(world, p, 0.25, 0.0125) == 0.0);
  }
}

TEST_CASE("generate_world: deterministic in seed") {
  const WorldConfig cfg;
  CHECK(worlds_equal(generate_world(42, cfg), generate_world(42, cfg)));
  CHECK_FALSE(worlds_equal(generate_world(42, cfg), generate_world(43, cfg)));
}

TEST_CASE("generate_world: 100-seed sweep keeps routes clear") {
  const WorldConfig cfg;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const WorldModel world = generate_world(seed, cfg);
    CHECK(min_route_clearance(world) >= cfg.route_clearance - 1e-9);
    for (const Pose2& w : world.path_waypoints) {
      CHECK(w.x >= cfg.bounds_min.x());
      CHECK(w.x <= cfg.bounds_max.x());
      CHECK(w.y >= cfg.bounds_min.y());
      CHECK(w.y <= cfg.bounds_max.y());
    }
  }
}

TEST_CASE("soft_collision: approaches the hard count at low temperature") {
  const WorldModel world = generate_world(7, WorldConfig{});
  const CollisionField field = make_collision_field(world, 0.25, 0.25 / 20.0);
  Rng rng(9);
  for (int i = 0; i < 100; ++i) {
    const Pose2 p{rng.uniform(0, 24), rng.uniform(0, 24), 0.0};
    const double soft = field.value(p);
    const int hard = field.hard_count(p);
    CHECK(std::abs(soft - hard) < 0.5);
  }
}

TEST_CASE("raycast_scan: empty world returns max range") {
  WorldConfig cfg;
  cfg.obstacle_count = 0;
  cfg.segment_count = 0;
  const WorldModel world = generate_world(1, cfg);
  const auto scan = raycast_scan(world, {5, 5, 1.0}, ScanConfig{}, nullptr);
  for (double r : scan) CHECK(r == 5.0);
}

TEST_CASE("raycast_scan: wall two meters ahead") {
  WorldModel world;
  world.segments.push_back({{2.0, -3.0}, {2.0, 3.0}});
  ScanConfig cfg;
  cfg.range_sigma = 0.0;
  const auto scan = raycast_scan(world, {0, 0, 0}, cfg, nullptr);
  CHECK(std::abs(scan[0] - 2.0) < 1e-9);
  // The reverse beam sees nothing.
  CHECK(scan[cfg.beam_count / 2] == cfg.max_range);
}

TEST_CASE("raycast_scan: rotating by one beam pitch shifts readings") {
  const WorldModel world = generate_world(11, WorldConfig{});
  ScanConfig cfg;
  cfg.range_sigma = 0.0;
  const Pose2 center{12.0, 12.0, 0.3};
  const auto base = raycast_scan(world, center, cfg, nullptr);
  const Pose2 rotated{12.0, 12.0,
                      wrap_angle(0.3 + 2.0 * kPi / cfg.beam_count)};
  const auto shifted = raycast_scan(world, rotated, cfg, nullptr);
  for (int k = 0; k < cfg.beam_count - 1; ++k) {
    CHECK(shifted[k] == doctest::Approx(base[k + 1]).epsilon(1e-9));
  }
}

TEST_CASE("scripted_teleoperator: noise-free pursuit is deterministic and converges") {
  // Straight route so the lookahead direction stays put while the heading
  // error burns down.
  WorldModel world;
  for (int i = 0; i < 12; ++i) world.path_waypoints.push_back({1.0 + i, 5.0, 0.0});
  NoiseProfile noise;
  noise.teleop_ou_sigma = 0.0;
  TeleopConfig tcfg;
  tcfg.overcorrect_prob = 0.0;

  TeleopState s1, s2;
  Rng r1(99), r2(99);
  Pose2 pose = world.path_waypoints.front();
  pose.theta = 0.8;  // start misaligned
  double prev_bearing = 1e9;
  double final_bearing = 1e9;
  for (int i = 0; i < 20; ++i) {
    const Action a = scripted_teleoperator(world, pose, noise, tcfg, s1, r1);
    const Action b = scripted_teleoperator(world, pose, noise, tcfg, s2, r2);
    CHECK(a.v == b.v);
    CHECK(a.omega == b.omega);
    if (s1.done) break;
    pose = step(pose, a, kControlDt);
    s2 = s1;
    r2 = r1;
    // Heading error toward the lookahead shrinks monotonically while large;
    // tiny pure-pursuit overshoot wiggles are allowed once nearly aligned.
    const double bearing = std::abs(a.omega) / tcfg.heading_gain;
    if (prev_bearing > 0.15) CHECK(bearing <= prev_bearing + 1e-9);
    prev_bearing = bearing;
    final_bearing = bearing;
  }
  CHECK(final_bearing < 0.1);
}

TEST_CASE("scripted_teleoperator: default noise still completes routes") {
  WorldConfig wcfg;
  wcfg.obstacle_count = 6;
  const NoiseProfile noise;
  EpisodeConfig ecfg;

  int done = 0;
  int total = 0;
  double noise_free_steps = 0.0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const WorldModel world = generate_world(derive_seed(777, {seed}), wcfg);

    NoiseProfile clean = noise;
    clean.teleop_ou_sigma = 0.0;
    clean.actuator_sigma_v = 0.0;
    clean.actuator_sigma_omega = 0.0;
    clean.slip_factor_min = 1.0;
    clean.slip_factor_max = 1.0;
    EpisodeConfig clean_cfg = ecfg;
    clean_cfg.teleop.overcorrect_prob = 0.0;
    const TrajectoryLog ref = simulate_episode(world, 5, clean, clean_cfg);
    noise_free_steps = static_cast<double>(ref.frames.size());

    const TrajectoryLog log = simulate_episode(world, seed + 1, noise, ecfg);
    ++total;
    if (static_cast<double>(log.frames.size()) <= 2.0 * noise_free_steps &&
        static_cast<int>(log.frames.size()) < ecfg.max_steps) {
      ++done;
    }
  }
  CHECK(done >= 95);
  CHECK(total == 100);
}

TEST_CASE("simulate_episode: zero noise dead-reckons exactly") {
  WorldConfig wcfg;
  wcfg.obstacle_count = 4;
  const WorldModel world = generate_world(21, wcfg);
  NoiseProfile clean;
  clean.gps_sigma = 0.0;
  clean.gps_bias_walk_sigma = 0.0;
  clean.compass_sigma = 0.0;
  clean.wheel_speed_sigma = 0.0;
  clean.actuator_sigma_v = 0.0;
  clean.actuator_sigma_omega = 0.0;
  clean.slip_factor_min = 1.0;
  clean.slip_factor_max = 1.0;
  clean.delay_steps = 0;
  clean.teleop_ou_sigma = 0.0;
  EpisodeConfig cfg;
  cfg.teleop.overcorrect_prob = 0.0;

  const TrajectoryLog log = simulate_episode(world, 33, clean, cfg);
  REQUIRE(log.frames.size() > 10);
  Pose2 dead = log.frames.front().gt_pose;
  for (std::size_t i = 0; i + 1 < log.frames.size(); ++i) {
    dead = step(dead, log.frames[i].commanded, cfg.dt);
    CHECK(std::abs(dead.x - log.frames[i + 1].gt_pose.x) < 1e-9);
    CHECK(std::abs(dead.y - log.frames[i + 1].gt_pose.y) < 1e-9);
  }
}

TEST_CASE("simulate_episode: replay reproduces ground truth bit-exactly") {
  WorldConfig wcfg;
  const WorldModel world = generate_world(23, wcfg);
  const NoiseProfile noise;
  const EpisodeConfig cfg;
  const TrajectoryLog log = simulate_episode(world, 17, noise, cfg);
  REQUIRE(log.frames.size() > 10);
  const auto replayed = replay_ground_truth(log, cfg);
  REQUIRE(replayed.size() == log.frames.size());
  for (std::size_t i = 0; i < replayed.size(); ++i) {
    CHECK(replayed[i].x == log.frames[i].gt_pose.x);
    CHECK(replayed[i].y == log.frames[i].gt_pose.y);
    CHECK(replayed[i].theta == log.frames[i].gt_pose.theta);
  }
}

TEST_CASE("generate_dataset: deterministic and parallel-equal") {
  DatasetConfig cfg;
  cfg.world_count = 2;
  cfg.episodes_per_world = 2;
  cfg.world.obstacle_count = 5;
  const Dataset serial = generate_dataset(909, cfg, 1);
  const Dataset parallel = generate_dataset(909, cfg, 4);
  REQUIRE(serial.logs.size() == 4);
  REQUIRE(parallel.logs.size() == 4);
  for (std::size_t i = 0; i < serial.logs.size(); ++i) {
    REQUIRE(serial.logs[i].frames.size() == parallel.logs[i].frames.size());
    for (std::size_t j = 0; j < serial.logs[i].frames.size(); ++j) {
      const auto& a = serial.logs[i].frames[j];
      const auto& b = parallel.logs[i].frames[j];
      CHECK(a.gt_pose.x == b.gt_pose.x);
      CHECK(a.gps == b.gps);
      CHECK(a.scan == b.scan);
    }
  }
}

TEST_CASE("generate_dataset: GPS error statistics match the profile") {
  DatasetConfig cfg;
  cfg.world_count = 2;
  cfg.episodes_per_world = 25;
  cfg.world.obstacle_count = 4;
  cfg.noise.gps_bias_walk_sigma = 0.0;  // isolate the white component
  const Dataset ds = generate_dataset(4242, cfg, 1);
  double se = 0.0;
  int n = 0;
  for (const auto& log : ds.logs) {
    for (const auto& f : log.frames) {
      const Eigen::Vector2d err = f.gps - f.gt_pose.position();
      se += err.squaredNorm();
      n += 2;
    }
  }
  const double rmse = std::sqrt(se / n);
  CHECK(rmse == doctest::Approx(cfg.noise.gps_sigma).epsilon(0.2));
}

TEST_CASE("pause_filter: constant-speed log is unchanged") {
  TrajectoryLog log;
  log.trajectory_id = "t";
  for (int i = 0; i < 60; ++i) {
    SensorFrame f;
    f.t = i * kControlDt;
    f.wheel_v = 0.8;
    log.frames.push_back(f);
  }
  const auto parts = pause_filter(log, 0.05, 5.0);
  REQUIRE(parts.size() == 1);
  CHECK(parts[0].frames.size() == 60);
  CHECK(parts[0].trajectory_id == "t");
}

TEST_CASE("pause_filter: stationary middle splits the log in two") {
  TrajectoryLog log;
  log.trajectory_id = "t";
  for (int i = 0; i < 90; ++i) {
    SensorFrame f;
    f.t = i * kControlDt;
    // 10 s stationary stretch in the middle of a 30 s log.
    f.wheel_v = (i >= 30 && i < 60) ? 0.0 : 0.9;
    log.frames.push_back(f);
  }
  const auto parts = pause_filter(log, 0.05, 5.0);
  REQUIRE(parts.size() == 2);
  CHECK(parts[0].trajectory_id == "t_s0");
  CHECK(parts[1].trajectory_id == "t_s1");
  CHECK(parts[0].frames.size() >= 25);
  CHECK(parts[1].frames.size() >= 25);
}

TEST_CASE("pause_filter: fuzzed logs satisfy the post-hoc window scan") {
  Rng rng(555);
  for (int trial = 0; trial < 50; ++trial) {
    TrajectoryLog log;
    int i = 0;
    const int segments = rng.uniform_int(2, 6);
    for (int s = 0; s < segments; ++s) {
      const bool paused = rng.uniform() < 0.4;
      const int len = rng.uniform_int(5, 40);
      for (int k = 0; k < len; ++k, ++i) {
        SensorFrame f;
        f.t = i * kControlDt;
        f.wheel_v = paused ? std::abs(rng.normal(0.0, 0.01))
                           : 0.6 + 0.3 * rng.uniform();
        log.frames.push_back(f);
      }
    }
    const double floor = 0.05;
    const double window = 4.0;
    for (const auto& part : pause_filter(log, floor, window)) {
      const int n = static_cast<int>(part.frames.size());
      for (int a = 0; a < n; ++a) {
        double sum = 0.0;
        int count = 0;
        for (int b = a; b < n; ++b) {
          sum += std::abs(part.frames[b].wheel_v);
          ++count;
          if (part.frames[b].t - part.frames[a].t >= window) {
            CHECK(sum / count >= floor);
          }
        }
      }
    }
  }
}

TEST_CASE("scan_to_collision_field: endpoints land on obstacle surfaces") {
  WorldModel world;
  world.circles.push_back({{3.0, 0.0}, 0.5});
  ScanConfig cfg;
  cfg.range_sigma = 0.0;
  const Pose2 pose{0, 0, 0};
  const auto scan = raycast_scan(world, pose, cfg, nullptr);
  const CollisionField field = scan_to_collision_field(scan, cfg.max_range);
  REQUIRE(!field.empty());
  for (const auto& p : field.points) {
    CHECK(std::abs((p - Eigen::Vector2d(3.0, 0.0)).norm() - 0.5) < 1e-6);
  }
}
