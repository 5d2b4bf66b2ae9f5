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

#include "mbra2d/smoothing.hpp"

#include <cmath>
#include <stdexcept>

#include <Eigen/Cholesky>
#include <Eigen/Dense>

namespace mbra2d {

namespace {

constexpr double kJitter = 1e-9;

void symmetrize(Eigen::Matrix3d& m) { m = 0.5 * (m + m.transpose()).eval(); }

Eigen::Matrix3d safe_inverse(const Eigen::Matrix3d& m, bool* regularized) {
  Eigen::Matrix3d a = m;
  Eigen::LLT<Eigen::Matrix3d> llt(a);
  if (llt.info() != Eigen::Success) {
    a += kJitter * Eigen::Matrix3d::Identity();
    llt.compute(a);
    if (regularized) *regularized = true;
  }
  return llt.solve(Eigen::Matrix3d::Identity());
}

struct Filter {
  BeliefState belief;
  const EkfConfig& cfg;
  bool regularized = false;

  explicit Filter(const EkfConfig& c) : cfg(c) {}

  void init(const SensorFrame& frame) {
    belief.mean = {frame.gps.x(), frame.gps.y(), frame.compass};
    belief.cov = Eigen::Vector3d(std::pow(cfg.gps_sigma + cfg.init_pos_sigma, 2),
                                 std::pow(cfg.gps_sigma + cfg.init_pos_sigma, 2),
                                 std::pow(cfg.compass_sigma + cfg.init_theta_sigma, 2))
                     .asDiagonal();
  }

  void predict(const Action& rate) {
    StepJacobians jac;
    belief.mean = step_with_jacobians(belief.mean, rate, cfg.dt, &jac);
    const Eigen::Matrix2d q_rate =
        Eigen::Vector2d(cfg.rate_sigma_v * cfg.rate_sigma_v,
                        cfg.rate_sigma_omega * cfg.rate_sigma_omega)
            .asDiagonal();
    belief.cov = jac.wrt_pose * belief.cov * jac.wrt_pose.transpose() +
                 jac.wrt_action * q_rate * jac.wrt_action.transpose();
    belief.cov.diagonal() += Eigen::Vector3d(cfg.process_pos_floor * cfg.dt,
                                             cfg.process_pos_floor * cfg.dt,
                                             cfg.process_theta_floor * cfg.dt);
    symmetrize(belief.cov);
  }

  void update_gps(const Eigen::Vector2d& gps) {
    Eigen::Matrix<double, 2, 3> h = Eigen::Matrix<double, 2, 3>::Zero();
    h(0, 0) = 1.0;
    h(1, 1) = 1.0;
    const Eigen::Matrix2d r =
        cfg.gps_sigma * cfg.gps_sigma * Eigen::Matrix2d::Identity();
    Eigen::Matrix2d s = h * belief.cov * h.transpose() + r;
    Eigen::LLT<Eigen::Matrix2d> llt(s);
    if (llt.info() != Eigen::Success) {
      s += kJitter * Eigen::Matrix2d::Identity();
      llt.compute(s);
      regularized = true;
    }
    const Eigen::Matrix<double, 3, 2> k =
        belief.cov * h.transpose() * llt.solve(Eigen::Matrix2d::Identity());
    const Eigen::Vector2d innov =
        gps - Eigen::Vector2d(belief.mean.x, belief.mean.y);
    const Eigen::Vector3d dx = k * innov;
    belief.mean.x += dx(0);
    belief.mean.y += dx(1);
    belief.mean.theta = wrap_angle(belief.mean.theta + dx(2));
    const Eigen::Matrix3d ikh = Eigen::Matrix3d::Identity() - k * h;
    belief.cov = ikh * belief.cov * ikh.transpose() + k * r * k.transpose();
    symmetrize(belief.cov);
  }

  void update_compass(double compass) {
    const double s = belief.cov(2, 2) + cfg.compass_sigma * cfg.compass_sigma;
    double denom = s;
    if (!(denom > 0.0)) {
      denom = s + kJitter;
      regularized = true;
    }
    const Eigen::Vector3d k = belief.cov.col(2) / denom;
    const double innov = wrap_angle(compass - belief.mean.theta);
    belief.mean.x += k(0) * innov;
    belief.mean.y += k(1) * innov;
    belief.mean.theta = wrap_angle(belief.mean.theta + k(2) * innov);
    Eigen::Matrix3d ikh = Eigen::Matrix3d::Identity();
    ikh.col(2) -= k;
    belief.cov = ikh * belief.cov * ikh.transpose() +
                 cfg.compass_sigma * cfg.compass_sigma * k * k.transpose();
    symmetrize(belief.cov);
  }
};

// Rate that moved the robot from frame i to frame i+1: the blend of the
// command actually executing during that interval and the wheel measurement.
Action blended_rate(const TrajectoryLog& log, int i, const EkfConfig& cfg) {
  const int src = i - cfg.delay_steps;
  const Action cmd =
      src >= 0 ? log.frames[static_cast<std::size_t>(src)].commanded : Action{};
  const SensorFrame& f = log.frames[static_cast<std::size_t>(i)];
  const double b = cfg.command_blend;
  return {(1.0 - b) * cmd.v + b * f.wheel_v,
          (1.0 - b) * cmd.omega + b * f.wheel_omega};
}

}  // namespace

EkfConfig EkfConfig::from_noise_profile(const NoiseProfile& profile) {
  EkfConfig cfg;
  // A minute of bias walk is folded into the white position noise.
  cfg.gps_sigma = std::hypot(profile.gps_sigma,
                             profile.gps_bias_walk_sigma * std::sqrt(60.0));
  cfg.compass_sigma = profile.compass_sigma;
  cfg.rate_sigma_v =
      std::hypot(profile.actuator_sigma_v, profile.wheel_speed_sigma);
  const double slip_allowance =
      0.5 * (1.0 - profile.slip_factor_min) * 0.75;
  cfg.rate_sigma_omega =
      std::sqrt(profile.actuator_sigma_omega * profile.actuator_sigma_omega +
                profile.wheel_speed_sigma * profile.wheel_speed_sigma +
                slip_allowance * slip_allowance);
  cfg.delay_steps = profile.delay_steps;
  return cfg;
}

std::vector<BeliefState> ekf_forward(const TrajectoryLog& log,
                                     const EkfConfig& cfg, bool* regularized) {
  if (log.frames.empty()) throw std::invalid_argument("ekf_forward: empty log");
  const int n = static_cast<int>(log.frames.size());
  std::vector<BeliefState> out(static_cast<std::size_t>(n));

  Filter filter(cfg);
  filter.init(log.frames.front());
  out[0] = filter.belief;
  for (int k = 1; k < n; ++k) {
    filter.predict(blended_rate(log, k - 1, cfg));
    filter.update_gps(log.frames[static_cast<std::size_t>(k)].gps);
    filter.update_compass(log.frames[static_cast<std::size_t>(k)].compass);
    out[static_cast<std::size_t>(k)] = filter.belief;
  }
  if (regularized) *regularized = filter.regularized;
  return out;
}

std::vector<BeliefState> ekf_backward(const TrajectoryLog& log,
                                      const EkfConfig& cfg, bool* regularized) {
  if (log.frames.empty()) throw std::invalid_argument("ekf_backward: empty log");
  const int n = static_cast<int>(log.frames.size());
  std::vector<BeliefState> out(static_cast<std::size_t>(n));

  Filter filter(cfg);
  filter.init(log.frames.back());
  out[static_cast<std::size_t>(n - 1)] = filter.belief;
  for (int k = n - 2; k >= 0; --k) {
    const Action fwd = blended_rate(log, k, cfg);
    filter.predict({-fwd.v, -fwd.omega});
    filter.update_gps(log.frames[static_cast<std::size_t>(k)].gps);
    filter.update_compass(log.frames[static_cast<std::size_t>(k)].compass);
    out[static_cast<std::size_t>(k)] = filter.belief;
  }
  if (regularized) *regularized = filter.regularized;
  return out;
}

SmoothedTrajectory fuse_bidirectional(const std::vector<BeliefState>& forward,
                                      const std::vector<BeliefState>& backward) {
  if (forward.size() != backward.size()) {
    throw std::invalid_argument("fuse_bidirectional: length mismatch");
  }
  SmoothedTrajectory sm;
  sm.states.resize(forward.size());

  for (std::size_t i = 0; i < forward.size(); ++i) {
    const BeliefState& f = forward[i];
    const BeliefState& b = backward[i];
    bool reg = false;
    const Eigen::Matrix3d info_f = safe_inverse(f.cov, &reg);
    const Eigen::Matrix3d info_b = safe_inverse(b.cov, &reg);
    Eigen::Matrix3d cov = safe_inverse(info_f + info_b, &reg);
    symmetrize(cov);
    sm.regularized = sm.regularized || reg;

    // Fuse headings in a chart centered on the forward estimate so the
    // combination happens on the shortest arc.
    const Eigen::Vector3d mu_f(f.mean.x, f.mean.y, f.mean.theta);
    const Eigen::Vector3d mu_b(b.mean.x, b.mean.y,
                               f.mean.theta + wrap_angle(b.mean.theta - f.mean.theta));
    const Eigen::Vector3d mu = cov * (info_f * mu_f + info_b * mu_b);
    sm.states[i].mean = {mu(0), mu(1), wrap_angle(mu(2))};
    sm.states[i].cov = cov;
  }

  sm.rates.resize(forward.size());
  const double dt = kControlDt;
  for (std::size_t i = 0; i + 1 < sm.states.size(); ++i) {
    const Pose2 rel = between(sm.states[i].mean, sm.states[i + 1].mean);
    sm.rates[i] = {rel.x / dt, wrap_angle(sm.states[i + 1].mean.theta -
                                          sm.states[i].mean.theta) /
                                   dt};
  }
  if (sm.rates.size() >= 2) sm.rates.back() = sm.rates[sm.rates.size() - 2];
  return sm;
}

SmoothedTrajectory smooth_trajectory(const TrajectoryLog& log,
                                     const EkfConfig& cfg) {
  bool reg_f = false;
  bool reg_b = false;
  const auto fwd = ekf_forward(log, cfg, &reg_f);
  const auto bwd = ekf_backward(log, cfg, &reg_b);
  SmoothedTrajectory sm = fuse_bidirectional(fwd, bwd);
  sm.regularized = sm.regularized || reg_f || reg_b;
  return sm;
}

Pose2 relative_pose(const SmoothedTrajectory& smoothed, int i, int j) {
  const int n = static_cast<int>(smoothed.states.size());
  if (i < 0 || j < i || j >= n) {
    throw std::out_of_range("relative_pose: indices out of range");
  }
  return between(smoothed.states[static_cast<std::size_t>(i)].mean,
                 smoothed.states[static_cast<std::size_t>(j)].mean);
}

std::vector<Pose2> dead_reckon(const TrajectoryLog& log, double dt) {
  std::vector<Pose2> poses;
  poses.reserve(log.frames.size());
  if (log.frames.empty()) return poses;
  Pose2 pose = {log.frames.front().gps.x(), log.frames.front().gps.y(),
                log.frames.front().compass};
  for (const SensorFrame& f : log.frames) {
    poses.push_back(pose);
    pose = step(pose, f.commanded, dt);
  }
  return poses;
}

double position_rmse(const std::vector<Pose2>& estimate,
                     const TrajectoryLog& log) {
  double se = 0.0;
  const std::size_t n = std::min(estimate.size(), log.frames.size());
  for (std::size_t i = 0; i < n; ++i) {
    se += (estimate[i].position() - log.frames[i].gt_pose.position())
              .squaredNorm();
  }
  return n == 0 ? 0.0 : std::sqrt(se / static_cast<double>(n));
}

double position_rmse(const std::vector<BeliefState>& estimate,
                     const TrajectoryLog& log) {
  std::vector<Pose2> poses;
  poses.reserve(estimate.size());
  for (const BeliefState& b : estimate) poses.push_back(b.mean);
  return position_rmse(poses, log);
}

double gps_rmse(const TrajectoryLog& log) {
  double se = 0.0;
  for (const SensorFrame& f : log.frames) {
    se += (f.gps - f.gt_pose.position()).squaredNorm();
  }
  return log.frames.empty()
             ? 0.0
             : std::sqrt(se / static_cast<double>(log.frames.size()));
}

}  // namespace mbra2d
