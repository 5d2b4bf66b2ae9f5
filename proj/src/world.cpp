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

#include "mbra2d/world.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "mbra2d/parallel.hpp"

namespace mbra2d {

namespace {

double cross2(const Eigen::Vector2d& a, const Eigen::Vector2d& b) {
  return a.x() * b.y() - a.y() * b.x();
}

double point_segment_distance(const Eigen::Vector2d& p, const Eigen::Vector2d& a,
                              const Eigen::Vector2d& b) {
  const Eigen::Vector2d ab = b - a;
  const double len2 = ab.squaredNorm();
  if (len2 < 1e-18) return (p - a).norm();
  const double u = std::clamp((p - a).dot(ab) / len2, 0.0, 1.0);
  return (p - (a + u * ab)).norm();
}

double segment_segment_distance(const Eigen::Vector2d& a1,
                                const Eigen::Vector2d& a2,
                                const Eigen::Vector2d& b1,
                                const Eigen::Vector2d& b2) {
  const Eigen::Vector2d da = a2 - a1;
  const Eigen::Vector2d db = b2 - b1;
  const double denom = cross2(da, db);
  if (std::abs(denom) > 1e-12) {
    const double t = cross2(b1 - a1, db) / denom;
    const double u = cross2(b1 - a1, da) / denom;
    if (t >= 0.0 && t <= 1.0 && u >= 0.0 && u <= 1.0) return 0.0;
  }
  return std::min({point_segment_distance(a1, b1, b2),
                   point_segment_distance(a2, b1, b2),
                   point_segment_distance(b1, a1, a2),
                   point_segment_distance(b2, a1, a2)});
}

// Arc-length bookkeeping along the route waypoints.
struct RoutePolyline {
  explicit RoutePolyline(const std::vector<Pose2>& waypoints) {
    points.reserve(waypoints.size());
    for (const Pose2& w : waypoints) points.push_back(w.position());
    cumulative.resize(points.size(), 0.0);
    for (std::size_t i = 1; i < points.size(); ++i) {
      cumulative[i] = cumulative[i - 1] + (points[i] - points[i - 1]).norm();
    }
  }

  double total() const { return cumulative.empty() ? 0.0 : cumulative.back(); }

  Eigen::Vector2d point_at(double s) const {
    if (points.size() == 1 || s <= 0.0) return points.front();
    if (s >= total()) return points.back();
    const auto it =
        std::upper_bound(cumulative.begin(), cumulative.end(), s);
    const std::size_t i = static_cast<std::size_t>(it - cumulative.begin());
    const double seg_start = cumulative[i - 1];
    const double seg_len = cumulative[i] - seg_start;
    const double u = seg_len > 1e-12 ? (s - seg_start) / seg_len : 0.0;
    return points[i - 1] + u * (points[i] - points[i - 1]);
  }

  // Arc length of the closest route point, searched in a forward window so
  // progress cannot jump backward or across a self-crossing.
  double project_forward(const Eigen::Vector2d& p, double from_s,
                         double backtrack = 0.25, double ahead = 4.0) const {
    const double lo = std::max(0.0, from_s - backtrack);
    const double hi = std::min(total(), from_s + ahead);
    double best_s = from_s;
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t i = 1; i < points.size(); ++i) {
      if (cumulative[i] < lo || cumulative[i - 1] > hi) continue;
      const Eigen::Vector2d a = points[i - 1];
      const Eigen::Vector2d ab = points[i] - a;
      const double len2 = ab.squaredNorm();
      double u = len2 > 1e-18 ? (p - a).dot(ab) / len2 : 0.0;
      u = std::clamp(u, 0.0, 1.0);
      double s = cumulative[i - 1] + u * std::sqrt(len2);
      s = std::clamp(s, lo, hi);
      const double d = (p - point_at(s)).norm();
      if (d < best_d) {
        best_d = d;
        best_s = s;
      }
    }
    return best_s;
  }

  double min_distance(const Eigen::Vector2d& p) const {
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t i = 1; i < points.size(); ++i) {
      best = std::min(best, point_segment_distance(p, points[i - 1], points[i]));
    }
    if (points.size() == 1) best = (p - points.front()).norm();
    return best;
  }

  double min_distance_segment(const Eigen::Vector2d& a,
                              const Eigen::Vector2d& b) const {
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t i = 1; i < points.size(); ++i) {
      best = std::min(best,
                      segment_segment_distance(a, b, points[i - 1], points[i]));
    }
    return best;
  }

  std::vector<Eigen::Vector2d> points;
  std::vector<double> cumulative;
};

std::vector<Pose2> generate_route(Rng& rng, const WorldConfig& cfg) {
  const Eigen::Vector2d lo = cfg.bounds_min.array() + cfg.route_margin;
  const Eigen::Vector2d hi = cfg.bounds_max.array() - cfg.route_margin;
  const Eigen::Vector2d center = 0.5 * (lo + hi);

  std::vector<Pose2> route;
  Eigen::Vector2d p(rng.uniform(lo.x(), hi.x()), rng.uniform(lo.y(), hi.y()));
  double heading = rng.uniform(-kPi, kPi);
  route.push_back({p.x(), p.y(), heading});

  for (int i = 1; i < cfg.route_waypoint_count; ++i) {
    heading = wrap_angle(heading + rng.uniform(-cfg.max_heading_change,
                                               cfg.max_heading_change));
    Eigen::Vector2d next =
        p + cfg.route_step * Eigen::Vector2d(std::cos(heading), std::sin(heading));
    int guard = 0;
    while ((next.x() < lo.x() || next.x() > hi.x() || next.y() < lo.y() ||
            next.y() > hi.y()) &&
           guard++ < 32) {
      // Steer back toward the middle of the arena.
      heading = wrap_angle(std::atan2(center.y() - p.y(), center.x() - p.x()) +
                           rng.uniform(-0.4, 0.4));
      next = p + cfg.route_step *
                     Eigen::Vector2d(std::cos(heading), std::sin(heading));
    }
    next.x() = std::clamp(next.x(), lo.x(), hi.x());
    next.y() = std::clamp(next.y(), lo.y(), hi.y());
    heading = std::atan2(next.y() - p.y(), next.x() - p.x());
    p = next;
    route.push_back({p.x(), p.y(), heading});
  }
  return route;
}

void append_circle_surface(const CircleObstacle& c, double spacing,
                           std::vector<Eigen::Vector2d>* out) {
  const int n = std::max(3, static_cast<int>(
                                std::ceil(2.0 * kPi * c.radius / spacing)));
  for (int k = 0; k < n; ++k) {
    const double a = 2.0 * kPi * k / n;
    out->push_back(c.center +
                   c.radius * Eigen::Vector2d(std::cos(a), std::sin(a)));
  }
}

void append_segment_surface(const SegmentObstacle& s, double spacing,
                            std::vector<Eigen::Vector2d>* out) {
  const double len = (s.b - s.a).norm();
  const int n = std::max(2, static_cast<int>(std::ceil(len / spacing)) + 1);
  for (int k = 0; k < n; ++k) {
    const double u = static_cast<double>(k) / (n - 1);
    out->push_back(s.a + u * (s.b - s.a));
  }
}

}  // namespace

void NoiseProfile::validate() const {
  const bool sigmas_ok = gps_sigma >= 0 && gps_bias_walk_sigma >= 0 &&
                         compass_sigma >= 0 && wheel_speed_sigma >= 0 &&
                         actuator_sigma_v >= 0 && actuator_sigma_omega >= 0 &&
                         teleop_ou_sigma >= 0 && teleop_ou_theta >= 0;
  if (!sigmas_ok) throw std::invalid_argument("NoiseProfile: negative sigma");
  if (slip_factor_min <= 0 || slip_factor_max > 1.0 ||
      slip_factor_min > slip_factor_max) {
    throw std::invalid_argument("NoiseProfile: slip factors must be in (0, 1]");
  }
  if (delay_steps < 0) throw std::invalid_argument("NoiseProfile: delay < 0");
}

WorldModel generate_world(std::uint64_t seed, const WorldConfig& cfg) {
  if (cfg.obstacle_count < 0 || cfg.segment_count < 0) {
    throw std::invalid_argument("WorldConfig: negative obstacle count");
  }
  if ((cfg.bounds_max - cfg.bounds_min).minCoeff() <= 2.0 * cfg.route_margin) {
    throw std::invalid_argument("WorldConfig: degenerate bounds");
  }

  Rng rng(derive_seed(seed, {0x776f726c64ULL}));
  WorldModel world;
  world.seed = seed;
  world.bounds_min = cfg.bounds_min;
  world.bounds_max = cfg.bounds_max;
  // Routes that loop back onto their own start confuse arrival detection;
  // redraw until the endpoints are decently separated.
  const double min_separation =
      std::min(3.0, 0.3 * cfg.route_step * (cfg.route_waypoint_count - 1));
  for (int attempt = 0; attempt < cfg.max_retries; ++attempt) {
    world.path_waypoints = generate_route(rng, cfg);
    const double sep = (world.path_waypoints.back().position() -
                        world.path_waypoints.front().position())
                           .norm();
    if (sep >= min_separation) break;
    if (attempt + 1 == cfg.max_retries) {
      throw WorldGenerationError(
          "generate_world: no well-separated route (seed " +
          std::to_string(seed) + ")");
    }
  }
  const RoutePolyline route(world.path_waypoints);

  for (int k = 0; k < cfg.obstacle_count; ++k) {
    bool placed = false;
    for (int attempt = 0; attempt < cfg.max_retries && !placed; ++attempt) {
      CircleObstacle c;
      c.radius = rng.uniform(cfg.obstacle_radius_min, cfg.obstacle_radius_max);
      c.center.x() = rng.uniform(cfg.bounds_min.x() + c.radius,
                                 cfg.bounds_max.x() - c.radius);
      c.center.y() = rng.uniform(cfg.bounds_min.y() + c.radius,
                                 cfg.bounds_max.y() - c.radius);
      if (route.min_distance(c.center) < c.radius + cfg.route_clearance) continue;
      bool overlaps = false;
      for (const CircleObstacle& other : world.circles) {
        if ((c.center - other.center).norm() < c.radius + other.radius + 0.1) {
          overlaps = true;
          break;
        }
      }
      if (overlaps) continue;
      world.circles.push_back(c);
      placed = true;
    }
    if (!placed) {
      throw WorldGenerationError(
          "generate_world: could not place obstacle " + std::to_string(k) +
          " outside the route corridor (seed " + std::to_string(seed) + ")");
    }
  }

  for (int k = 0; k < cfg.segment_count; ++k) {
    bool placed = false;
    for (int attempt = 0; attempt < cfg.max_retries && !placed; ++attempt) {
      const double half = 0.5 * cfg.segment_length;
      Eigen::Vector2d c(rng.uniform(cfg.bounds_min.x() + half,
                                    cfg.bounds_max.x() - half),
                        rng.uniform(cfg.bounds_min.y() + half,
                                    cfg.bounds_max.y() - half));
      const double a = rng.uniform(-kPi, kPi);
      const Eigen::Vector2d dir(std::cos(a), std::sin(a));
      SegmentObstacle seg{c - half * dir, c + half * dir};
      if (route.min_distance_segment(seg.a, seg.b) < cfg.route_clearance) continue;
      bool overlaps = false;
      for (const CircleObstacle& other : world.circles) {
        if (point_segment_distance(other.center, seg.a, seg.b) <
            other.radius + 0.1) {
          overlaps = true;
          break;
        }
      }
      if (overlaps) continue;
      world.segments.push_back(seg);
      placed = true;
    }
    if (!placed) {
      throw WorldGenerationError(
          "generate_world: could not place wall segment " + std::to_string(k) +
          " outside the route corridor (seed " + std::to_string(seed) + ")");
    }
  }

  for (const CircleObstacle& c : world.circles) {
    append_circle_surface(c, cfg.surface_point_spacing, &world.surface_points);
  }
  for (const SegmentObstacle& s : world.segments) {
    append_segment_surface(s, cfg.surface_point_spacing, &world.surface_points);
  }
  return world;
}

double clearance(const WorldModel& world, const Eigen::Vector2d& position) {
  double best = std::numeric_limits<double>::infinity();
  for (const CircleObstacle& c : world.circles) {
    best = std::min(best, (position - c.center).norm() - c.radius);
  }
  for (const SegmentObstacle& s : world.segments) {
    best = std::min(best, point_segment_distance(position, s.a, s.b));
  }
  return best;
}

bool in_collision(const WorldModel& world, const Pose2& pose,
                  double footprint_radius) {
  return clearance(world, pose.position()) < footprint_radius;
}

double soft_collision(const WorldModel& world, const Pose2& pose,
                      double footprint_radius, double temperature) {
  const CollisionField view{world.surface_points, footprint_radius, temperature};
  return view.value(pose);
}

CollisionField make_collision_field(const WorldModel& world,
                                    double footprint_radius,
                                    double temperature) {
  return CollisionField{world.surface_points, footprint_radius, temperature};
}

CollisionField make_local_collision_field(const WorldModel& world,
                                          const Pose2& frame, double radius,
                                          double footprint_radius,
                                          double temperature) {
  CollisionField field;
  field.footprint_radius = footprint_radius;
  field.temperature = temperature;
  const Pose2 inv = inverse(frame);
  const double r2 = radius * radius;
  for (const Eigen::Vector2d& p : world.surface_points) {
    if ((p - frame.position()).squaredNorm() > r2) continue;
    const Pose2 local = compose(inv, Pose2{p.x(), p.y(), 0.0});
    field.points.emplace_back(local.x, local.y);
  }
  return field;
}

CollisionField scan_to_collision_field(const std::vector<double>& scan,
                                       double max_range,
                                       double footprint_radius,
                                       double temperature) {
  CollisionField field;
  field.footprint_radius = footprint_radius;
  field.temperature = temperature;
  const int k = static_cast<int>(scan.size());
  for (int i = 0; i < k; ++i) {
    if (scan[i] >= max_range - 1e-6) continue;  // no return on this beam
    const double a = 2.0 * kPi * i / k;
    field.points.emplace_back(scan[i] * std::cos(a), scan[i] * std::sin(a));
  }
  return field;
}

std::vector<double> raycast_scan(const WorldModel& world, const Pose2& pose,
                                 const ScanConfig& cfg, Rng* rng) {
  if (cfg.beam_count < 1) throw std::invalid_argument("raycast_scan: K < 1");
  std::vector<double> out(static_cast<std::size_t>(cfg.beam_count));
  const Eigen::Vector2d origin = pose.position();
  for (int k = 0; k < cfg.beam_count; ++k) {
    const double a = pose.theta + 2.0 * kPi * k / cfg.beam_count;
    const Eigen::Vector2d dir(std::cos(a), std::sin(a));
    double best = cfg.max_range;

    for (const CircleObstacle& c : world.circles) {
      const Eigen::Vector2d oc = c.center - origin;
      const double b = dir.dot(oc);
      const double disc = b * b - oc.squaredNorm() + c.radius * c.radius;
      if (disc < 0.0) continue;
      const double sq = std::sqrt(disc);
      double t = b - sq;
      if (t < 1e-9) t = b + sq;
      if (t > 1e-9) best = std::min(best, t);
    }
    for (const SegmentObstacle& s : world.segments) {
      const Eigen::Vector2d sd = s.b - s.a;
      const double denom = cross2(dir, sd);
      if (std::abs(denom) < 1e-12) continue;
      const Eigen::Vector2d ao = s.a - origin;
      const double t = cross2(ao, sd) / denom;
      const double u = cross2(ao, dir) / denom;
      if (t > 1e-9 && u >= 0.0 && u <= 1.0) best = std::min(best, t);
    }

    if (rng && cfg.range_sigma > 0.0) best += rng->normal(0.0, cfg.range_sigma);
    out[static_cast<std::size_t>(k)] =
        std::clamp(best, 1e-6, cfg.max_range);
  }
  return out;
}

Action scripted_teleoperator(const WorldModel& world, const Pose2& gt_pose,
                             const NoiseProfile& noise,
                             const TeleopConfig& cfg, TeleopState& state,
                             Rng& rng) {
  const RoutePolyline route(world.path_waypoints);
  const double dt = kControlDt;

  state.route_progress =
      std::max(state.route_progress,
               route.project_forward(gt_pose.position(), state.route_progress));
  const Eigen::Vector2d goal_point = route.points.back();
  const bool near_goal =
      (gt_pose.position() - goal_point).norm() < cfg.arrive_radius &&
      state.route_progress > 0.5 * route.total();
  if (near_goal || state.route_progress >= route.total() - 1e-6) {
    state.done = true;
    return {0.0, 0.0};
  }

  // Operator pause: controls released entirely for a while.
  if (state.pause_left > 0) {
    --state.pause_left;
    return {0.0, 0.0};
  }
  if (cfg.pause_prob > 0.0 && rng.uniform() < cfg.pause_prob) {
    state.pause_left = rng.uniform_int(cfg.pause_steps_min, cfg.pause_steps_max);
    return {0.0, 0.0};
  }

  const Eigen::Vector2d target =
      route.point_at(state.route_progress + cfg.lookahead);
  const double bearing = wrap_angle(
      std::atan2(target.y() - gt_pose.y, target.x() - gt_pose.x) -
      gt_pose.theta);

  double v = cfg.cruise_speed *
             std::clamp(std::cos(bearing), cfg.slow_cos_floor, 1.0);
  double omega = cfg.heading_gain * bearing;

  // Ornstein-Uhlenbeck operator wobble; the linear channel wobbles less.
  const double sq = std::sqrt(dt);
  state.ou_omega += noise.teleop_ou_theta * (-state.ou_omega) * dt +
                    noise.teleop_ou_sigma * sq * rng.normal();
  state.ou_v += noise.teleop_ou_theta * (-state.ou_v) * dt +
                0.25 * noise.teleop_ou_sigma * sq * rng.normal();
  v += state.ou_v;
  omega += state.ou_omega;

  if (state.overcorrect_left > 0) {
    omega += state.overcorrect_bias;
    --state.overcorrect_left;
  } else if (cfg.overcorrect_prob > 0.0 && rng.uniform() < cfg.overcorrect_prob) {
    state.overcorrect_left = cfg.overcorrect_steps;
    state.overcorrect_bias =
        (rng.uniform() < 0.5 ? -1.0 : 1.0) * cfg.overcorrect_mag;
    omega += state.overcorrect_bias;
    --state.overcorrect_left;
  }

  return ActionBounds{}.clamp({v, omega});
}

Action plant_execute(PlantState& state, const Action& commanded,
                     const NoiseProfile& noise, const ActionBounds& bounds,
                     Rng& plant_rng) {
  Action executing = state.buffer.push(commanded);
  executing.v += plant_rng.normal(0.0, noise.actuator_sigma_v);
  executing.omega += plant_rng.normal(0.0, noise.actuator_sigma_omega);

  if (std::abs(executing.omega) > noise.slip_omega_threshold) {
    if (!state.slipping) {
      state.slipping = true;
      state.slip_factor =
          plant_rng.uniform(noise.slip_factor_min, noise.slip_factor_max);
    }
    executing.omega *= state.slip_factor;
  } else {
    state.slipping = false;
  }
  return bounds.clamp(executing);
}

TrajectoryLog simulate_episode(const WorldModel& world,
                               std::uint64_t episode_seed,
                               const NoiseProfile& noise,
                               const EpisodeConfig& cfg) {
  noise.validate();
  Rng teleop_rng(derive_seed(episode_seed, {1}));
  Rng plant_rng(derive_seed(episode_seed, {2}));
  Rng sensor_rng(derive_seed(episode_seed, {3}));

  TrajectoryLog log;
  log.world_seed = world.seed;
  log.episode_seed = episode_seed;
  log.noise = noise;

  PlantState plant;
  plant.gt = world.path_waypoints.front();
  plant.buffer = DelayBuffer(noise.delay_steps);
  TeleopState teleop;
  Eigen::Vector2d gps_bias = Eigen::Vector2d::Zero();
  const double sqdt = std::sqrt(cfg.dt);

  for (int step_idx = 0; step_idx < cfg.max_steps; ++step_idx) {
    const Action cmd = scripted_teleoperator(world, plant.gt, noise,
                                             cfg.teleop, teleop, teleop_rng);
    if (teleop.done) break;
    const Action exec = plant_execute(plant, cmd, noise, cfg.bounds, plant_rng);

    SensorFrame frame;
    frame.t = step_idx * cfg.dt;
    frame.commanded = cmd;
    frame.wheel_v = exec.v + sensor_rng.normal(0.0, noise.wheel_speed_sigma);
    frame.wheel_omega =
        exec.omega + sensor_rng.normal(0.0, noise.wheel_speed_sigma);
    gps_bias.x() += sensor_rng.normal(0.0, noise.gps_bias_walk_sigma * sqdt);
    gps_bias.y() += sensor_rng.normal(0.0, noise.gps_bias_walk_sigma * sqdt);
    frame.gps = plant.gt.position() + gps_bias +
                Eigen::Vector2d(sensor_rng.normal(0.0, noise.gps_sigma),
                                sensor_rng.normal(0.0, noise.gps_sigma));
    frame.compass =
        wrap_angle(plant.gt.theta + sensor_rng.normal(0.0, noise.compass_sigma));
    frame.scan = raycast_scan(world, plant.gt, cfg.scan, &sensor_rng);
    frame.gt_pose = plant.gt;
    log.frames.push_back(std::move(frame));

    plant.gt = step(plant.gt, exec, cfg.dt);
  }
  return log;
}

std::vector<Pose2> replay_ground_truth(const TrajectoryLog& log,
                                       const EpisodeConfig& cfg) {
  Rng plant_rng(derive_seed(log.episode_seed, {2}));
  PlantState plant;
  plant.buffer = DelayBuffer(log.noise.delay_steps);
  if (!log.frames.empty()) plant.gt = log.frames.front().gt_pose;

  std::vector<Pose2> poses;
  poses.reserve(log.frames.size());
  for (const SensorFrame& frame : log.frames) {
    poses.push_back(plant.gt);
    const Action exec =
        plant_execute(plant, frame.commanded, log.noise, cfg.bounds, plant_rng);
    plant.gt = step(plant.gt, exec, cfg.dt);
  }
  return poses;
}

Dataset generate_dataset(std::uint64_t seed, const DatasetConfig& cfg,
                         int jobs) {
  if (cfg.world_count < 1 || cfg.episodes_per_world < 1) {
    throw std::invalid_argument("generate_dataset: counts must be >= 1");
  }
  Dataset ds;
  ds.seed = seed;
  ds.config = cfg;

  ds.worlds.resize(static_cast<std::size_t>(cfg.world_count));
  parallel_for(static_cast<std::size_t>(cfg.world_count), jobs, [&](std::size_t w) {
    ds.worlds[w] = generate_world(derive_seed(seed, {0, w}), cfg.world);
  });

  const std::size_t total =
      static_cast<std::size_t>(cfg.world_count) * cfg.episodes_per_world;
  ds.logs.resize(total);
  ds.log_world_index.resize(total);
  parallel_for(total, jobs, [&](std::size_t i) {
    const int w = static_cast<int>(i) / cfg.episodes_per_world;
    const int e = static_cast<int>(i) % cfg.episodes_per_world;
    TrajectoryLog log = simulate_episode(
        ds.worlds[static_cast<std::size_t>(w)],
        derive_seed(seed, {1, static_cast<std::uint64_t>(w),
                           static_cast<std::uint64_t>(e)}),
        cfg.noise, cfg.episode);
    char id[32];
    std::snprintf(id, sizeof(id), "traj_%03d_%02d", w, e);
    log.trajectory_id = id;
    ds.logs[i] = std::move(log);
    ds.log_world_index[i] = w;
  });
  return ds;
}

std::vector<std::pair<int, int>> pause_filter_intervals(
    const TrajectoryLog& log, double speed_floor, double window) {
  if (window <= 0.0) throw std::invalid_argument("pause_filter: window <= 0");
  const int n = static_cast<int>(log.frames.size());
  std::vector<bool> keep(static_cast<std::size_t>(n), true);

  // Prefix sums of |wheel_v| over kept frames are rebuilt each sweep; sweeps
  // repeat until no kept window of duration >= window falls below the floor.
  bool changed = true;
  while (changed) {
    changed = false;
    int i = 0;
    while (i < n) {
      if (!keep[static_cast<std::size_t>(i)]) {
        ++i;
        continue;
      }
      int end = i;
      while (end < n && keep[static_cast<std::size_t>(end)]) ++end;
      //

      for (int a = i; a < end; ++a) {
        double sum = 0.0;
        int count = 0;
        for (int b = a; b < end; ++b) {
          sum += std::abs(log.frames[static_cast<std::size_t>(b)].wheel_v);
          ++count;
          const double span =
              log.frames[static_cast<std::size_t>(b)].t -
              log.frames[static_cast<std::size_t>(a)].t;
          if (span < window) continue;
          if (sum / count < speed_floor) {
            for (int k = a; k <= b; ++k) keep[static_cast<std::size_t>(k)] = false;
            changed = true;
          }
        }
      }
      i = end;
    }
  }

  std::vector<std::pair<int, int>> intervals;
  int i = 0;
  while (i < n) {
    if (!keep[static_cast<std::size_t>(i)]) {
      ++i;
      continue;
    }
    int end = i;
    while (end < n && keep[static_cast<std::size_t>(end)]) ++end;
    intervals.emplace_back(i, end);
    i = end;
  }
  return intervals;
}

std::vector<TrajectoryLog> pause_filter(const TrajectoryLog& log,
                                        double speed_floor, double window) {
  const auto intervals = pause_filter_intervals(log, speed_floor, window);
  std::vector<TrajectoryLog> out;
  if (intervals.size() == 1 && intervals[0].first == 0 &&
      intervals[0].second == static_cast<int>(log.frames.size())) {
    out.push_back(log);
    return out;
  }
  int k = 0;
  for (const auto& [first, last] : intervals) {
    TrajectoryLog part;
    part.trajectory_id = log.trajectory_id + "_s" + std::to_string(k++);
    part.world_seed = log.world_seed;
    part.episode_seed = log.episode_seed;
    part.noise = log.noise;
    part.frames.assign(log.frames.begin() + first, log.frames.begin() + last);
    out.push_back(std::move(part));
  }
  return out;
}

}  // namespace mbra2d
