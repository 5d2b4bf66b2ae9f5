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

#include "mbra2d/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace mbra2d {

namespace {
// Series branch takes over where the arc expressions lose precision.
constexpr double kOmegaSeriesThreshold = 1e-6;

bool finite_pose(const Pose2& p) {
  return std::isfinite(p.x) && std::isfinite(p.y) && std::isfinite(p.theta);
}
}  // namespace

double wrap_angle(double a) {
  if (a > -kPi && a <= kPi) return a;  // already in range, keep bits intact
  double t = std::fmod(a + kPi, 2.0 * kPi);
  if (t <= 0.0) t += 2.0 * kPi;
  return t - kPi;
}

Pose2 compose(const Pose2& a, const Pose2& b) {
  const double c = std::cos(a.theta);
  const double s = std::sin(a.theta);
  return {a.x + c * b.x - s * b.y, a.y + s * b.x + c * b.y,
          wrap_angle(a.theta + b.theta)};
}

Pose2 inverse(const Pose2& p) {
  const double c = std::cos(p.theta);
  const double s = std::sin(p.theta);
  return {-c * p.x - s * p.y, s * p.x - c * p.y, wrap_angle(-p.theta)};
}

Pose2 between(const Pose2& a, const Pose2& b) { return compose(inverse(a), b); }

Action ActionBounds::clamp(const Action& a) const {
  return {std::clamp(a.v, v_min, v_max),
          std::clamp(a.omega, -omega_max, omega_max)};
}

bool ActionBounds::contains(const Action& a, double tol) const {
  return a.v >= v_min - tol && a.v <= v_max + tol &&
         std::abs(a.omega) <= omega_max + tol;
}

Action DelayBuffer::push(const Action& issued) {
  if (actions_.empty()) return issued;
  Action out = actions_.front();
  actions_.erase(actions_.begin());
  actions_.push_back(issued);
  return out;
}

namespace detail {

Pose2 step_arc(const Pose2& pose, const Action& action, double dt) {
  // sin(t+h)-sin(t) = 2 cos(t+h/2) sin(h/2); the product form avoids the
  // cancellation that otherwise dominates for small h.
  const double half = 0.5 * action.omega * dt;
  const double chord = 2.0 * (action.v / action.omega) * std::sin(half);
  const double mid = pose.theta + half;
  return {pose.x + chord * std::cos(mid), pose.y + chord * std::sin(mid),
          wrap_angle(pose.theta + action.omega * dt)};
}

Pose2 step_series(const Pose2& pose, const Action& action, double dt) {
  const double h = action.omega * dt;
  const double c = std::cos(pose.theta);
  const double s = std::sin(pose.theta);
  const double vdt = action.v * dt;
  return {pose.x + vdt * (c - 0.5 * h * s - h * h / 6.0 * c),
          pose.y + vdt * (s + 0.5 * h * c - h * h / 6.0 * s),
          wrap_angle(pose.theta + h)};
}

}  // namespace detail

Pose2 step(const Pose2& pose, const Action& action, double dt) {
  if (!finite_pose(pose) || !std::isfinite(action.v) ||
      !std::isfinite(action.omega) || !std::isfinite(dt)) {
    throw std::invalid_argument("step: non-finite input");
  }
  if (dt <= 0.0) throw std::invalid_argument("step: dt must be positive");
  if (std::abs(action.omega) < kOmegaSeriesThreshold) {
    return detail::step_series(pose, action, dt);
  }
  return detail::step_arc(pose, action, dt);
}

Pose2 step_with_jacobians(const Pose2& pose, const Action& action, double dt,
                          StepJacobians* jac) {
  Pose2 next = step(pose, action, dt);
  if (!jac) return next;

  jac->wrt_pose.setIdentity();
  jac->wrt_action.setZero();

  const double v = action.v;
  const double w = action.omega;
  const double c0 = std::cos(pose.theta);
  const double s0 = std::sin(pose.theta);

  if (std::abs(w) < kOmegaSeriesThreshold) {
    const double h = w * dt;
    // Second-order series, matching step_series exactly so the gradient is
    // continuous through omega = 0.
    const double fx = c0 - 0.5 * h * s0 - h * h / 6.0 * c0;
    const double fy = s0 + 0.5 * h * c0 - h * h / 6.0 * s0;
    jac->wrt_pose(0, 2) = v * dt * (-s0 - 0.5 * h * c0 + h * h / 6.0 * s0);
    jac->wrt_pose(1, 2) = v * dt * (fx);
    jac->wrt_action(0, 0) = dt * fx;
    jac->wrt_action(1, 0) = dt * fy;
    jac->wrt_action(0, 1) = v * dt * dt * (-0.5 * s0 - h / 3.0 * c0);
    jac->wrt_action(1, 1) = v * dt * dt * (0.5 * c0 - h / 3.0 * s0);
    jac->wrt_action(2, 1) = dt;
    return next;
  }

  const double theta1 = pose.theta + w * dt;
  const double c1 = std::cos(theta1);
  const double s1 = std::sin(theta1);
  const double half = 0.5 * w * dt;
  const double mid = pose.theta + half;
  // Product forms of sin(t1)-sin(t0) and cos(t0)-cos(t1).
  const double ds = 2.0 * std::cos(mid) * std::sin(half);
  const double dc = 2.0 * std::sin(mid) * std::sin(half);

  jac->wrt_pose(0, 2) = -v / w * dc;
  jac->wrt_pose(1, 2) = v / w * ds;
  jac->wrt_action(0, 0) = ds / w;
  jac->wrt_action(1, 0) = dc / w;
  jac->wrt_action(0, 1) = v * (dt * c1 / w - ds / (w * w));
  jac->wrt_action(1, 1) = v * (dt * s1 / w - dc / (w * w));
  jac->wrt_action(2, 1) = dt;
  return next;
}

namespace {

// Mean soft count over the sub-sampled arc from `from` under `action`.
double step_collision(const Pose2& from, const Action& action, double dt,
                      const CollisionField& field) {
  double sum = 0.0;
  for (int j = 1; j <= kCollisionSubSamples; ++j) {
    const double frac = static_cast<double>(j) / kCollisionSubSamples;
    sum += field.value(step(from, action, dt * frac));
  }
  return sum / kCollisionSubSamples;
}

}  // namespace

std::vector<RolloutState> rollout(const Pose2& pose0, const DelayBuffer& delay,
                                  std::span<const Action> actions, double dt,
                                  const CollisionField* field) {
  if (actions.empty()) throw std::invalid_argument("rollout: empty chunk");

  Pose2 pose = pose0;
  for (const Action& buffered : delay.actions()) pose = step(pose, buffered, dt);
  Action prev = delay.empty() ? Action{} : delay.newest();

  std::vector<RolloutState> states(actions.size());
  for (std::size_t i = 0; i < actions.size(); ++i) {
    const Pose2 from = pose;
    pose = step(pose, actions[i], dt);
    states[i].pose = pose;
    states[i].collision =
        field ? step_collision(from, actions[i], dt, *field) : 0.0;
    states[i].dv = actions[i].v - prev.v;
    states[i].domega = actions[i].omega - prev.omega;
    prev = actions[i];
  }
  return states;
}

ObjectiveEval rollout_gradient(const Pose2& pose0, const DelayBuffer& delay,
                               std::span<const Action> actions, double dt,
                               const CollisionField* field, const Pose2& goal,
                               const CostWeights& weights) {
  if (actions.empty()) throw std::invalid_argument("rollout_gradient: empty chunk");
  const int n = static_cast<int>(actions.size());
  constexpr int m = kCollisionSubSamples;

  Pose2 pose = pose0;
  for (const Action& buffered : delay.actions()) pose = step(pose, buffered, dt);
  Action prev = delay.empty() ? Action{} : delay.newest();

  std::vector<StepJacobians> jac(static_cast<std::size_t>(n));
  // Collision sub-samples per step: the last one is the step endpoint and
  // rides the main chain; the earlier ones get their own Jacobians back to
  // (pose_{i-1}, a_i).
  std::vector<std::array<double, m>> sub_val(static_cast<std::size_t>(n));
  std::vector<std::array<Eigen::Vector2d, m>> sub_grad(static_cast<std::size_t>(n));
  std::vector<std::array<StepJacobians, m - 1>> sub_jac(static_cast<std::size_t>(n));

  ObjectiveEval ev;
  ev.states.resize(static_cast<std::size_t>(n));
  ev.grad = Eigen::VectorXd::Zero(2 * n);

  for (int i = 0; i < n; ++i) {
    const Pose2 from = pose;
    pose = step_with_jacobians(pose, actions[i], dt, &jac[static_cast<std::size_t>(i)]);

    double mean_c = 0.0;
    if (field) {
      for (int j = 0; j < m; ++j) {
        const double frac = static_cast<double>(j + 1) / m;
        Pose2 sub_pose;
        if (j + 1 == m) {
          sub_pose = pose;
        } else {
          sub_pose = step_with_jacobians(
              from, actions[i], dt * frac,
              &sub_jac[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)]);
        }
        sub_val[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] =
            field->value_with_gradient(
                sub_pose,
                &sub_grad[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)]);
        mean_c += sub_val[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
      }
      mean_c /= m;
    }
    ev.states[static_cast<std::size_t>(i)] = {pose, mean_c, actions[i].v - prev.v,
                                              actions[i].omega - prev.omega};
    prev = actions[i];
  }

  for (int i = 0; i < n; ++i) {
    const RolloutState& s = ev.states[static_cast<std::size_t>(i)];
    const double scale = (i == n - 1) ? 1.0 + weights.terminal : 1.0;
    const double ex = goal.x - s.pose.x;
    const double ey = goal.y - s.pose.y;
    const double eth = wrap_angle(goal.theta - s.pose.theta);
    ev.pos += scale * (weights.pos * (ex * ex + ey * ey) +
                       weights.heading * eth * eth);
    ev.col += weights.collision * s.collision * s.collision;
    ev.smooth += weights.smooth * (s.dv * s.dv + s.domega * s.domega);
  }
  ev.total = ev.pos + ev.col + ev.smooth;

  Eigen::Vector3d gp = Eigen::Vector3d::Zero();
  for (int i = n - 1; i >= 0; --i) {
    const RolloutState& s = ev.states[static_cast<std::size_t>(i)];
    const double scale = (i == n - 1) ? 1.0 + weights.terminal : 1.0;
    const double ex = goal.x - s.pose.x;
    const double ey = goal.y - s.pose.y;
    const double eth = wrap_angle(goal.theta - s.pose.theta);
    // d(w_col * mean(c)^2)/dc_j = 2 w_col mean(c) / m for each sub-sample.
    const double dcol = field ? 2.0 * weights.collision * s.collision / m : 0.0;

    Eigen::Vector3d local(-2.0 * scale * weights.pos * ex,
                          -2.0 * scale * weights.pos * ey,
                          -2.0 * scale * weights.heading * eth);
    if (field) {
      local.head<2>() +=
          dcol * sub_grad[static_cast<std::size_t>(i)][static_cast<std::size_t>(m - 1)];
    }
    gp += local;

    Eigen::Vector2d ga =
        jac[static_cast<std::size_t>(i)].wrt_action.transpose() * gp;
    Eigen::Vector3d gp_prev =
        jac[static_cast<std::size_t>(i)].wrt_pose.transpose() * gp;

    if (field) {
      for (int j = 0; j + 1 < m; ++j) {
        const Eigen::Vector3d g3(
            dcol * sub_grad[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)](0),
            dcol * sub_grad[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)](1),
            0.0);
        const StepJacobians& sj =
            sub_jac[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
        ga += sj.wrt_action.transpose() * g3;
        gp_prev += sj.wrt_pose.transpose() * g3;
      }
    }

    ev.grad(2 * i) += ga(0);
    ev.grad(2 * i + 1) += ga(1);
    ev.grad(2 * i) += 2.0 * weights.smooth * s.dv;
    ev.grad(2 * i + 1) += 2.0 * weights.smooth * s.domega;
    if (i + 1 < n) {
      ev.grad(2 * i) -= 2.0 * weights.smooth *
                        ev.states[static_cast<std::size_t>(i + 1)].dv;
      ev.grad(2 * i + 1) -= 2.0 * weights.smooth *
                            ev.states[static_cast<std::size_t>(i + 1)].domega;
    }

    gp = gp_prev;
  }
  return ev;
}

}  // namespace mbra2d
