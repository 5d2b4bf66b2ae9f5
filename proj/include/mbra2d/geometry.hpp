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

#include <span>
#include <vector>

#include <Eigen/Core>

#include "mbra2d/collision_field.hpp"

namespace mbra2d {

inline constexpr double kPi = 3.141592653589793238462643383279502884;

/// Control period of the whole system: commands, logs and relabeled chunks
/// all live on a 3 Hz grid.
inline constexpr double kControlDt = 1.0 / 3.0;

/// Number of action steps in a relabeled chunk.
inline constexpr int kChunkSteps = 8;

/// Wraps an angle to (-pi, pi].
double wrap_angle(double a);

/// Planar robot pose. theta is kept wrapped to (-pi, pi] by every operation
/// that produces a Pose2.
struct Pose2 {
  double x = 0.0;
  double y = 0.0;
  double theta = 0.0;

  static Pose2 identity() { return {}; }
  Eigen::Vector2d position() const { return {x, y}; }
};

/// Pose of `b` (given in `a`'s frame) expressed in the world frame.
Pose2 compose(const Pose2& a, const Pose2& b);

/// Inverse element: compose(inverse(p), p) == identity.
Pose2 inverse(const Pose2& p);

/// Pose of `b` expressed in `a`'s frame: compose(a, between(a, b)) == b.
Pose2 between(const Pose2& a, const Pose2& b);

/// Commanded body rates: linear velocity [m/s] and angular velocity [rad/s].
struct Action {
  double v = 0.0;
  double omega = 0.0;
};

/// Actuation envelope. Defaults match a small rover: it can reverse slowly,
/// drive forward at 2 m/s and turn at 1.5 rad/s.
struct ActionBounds {
  double v_min = -0.5;
  double v_max = 2.0;
  double omega_max = 1.5;

  Action clamp(const Action& a) const;
  bool contains(const Action& a, double tol = 1e-9) const;
};

/// Commands in flight between being issued and being executed. The buffer
/// always holds exactly delay_steps() actions, oldest first.
class DelayBuffer {
 public:
  DelayBuffer() = default;
  explicit DelayBuffer(int delay_steps)
      : actions_(static_cast<std::size_t>(delay_steps)) {}
  explicit DelayBuffer(std::vector<Action> actions)
      : actions_(std::move(actions)) {}

  int delay_steps() const { return static_cast<int>(actions_.size()); }
  const std::vector<Action>& actions() const { return actions_; }
  bool empty() const { return actions_.empty(); }

  /// Last action pushed (the most recently issued command still in flight).
  Action newest() const { return actions_.back(); }

  /// Pushes a newly issued command and pops the one that now executes. With
  /// zero delay the command passes straight through.
  Action push(const Action& issued);

 private:
  std::vector<Action> actions_;
};

/// Per-step result of a model rollout: predicted pose, soft collision count
/// for the step, and the action increment that led into the step. The
/// collision value averages the field over sub-samples of the step's arc
/// (not just its endpoint), so a step cannot jump across a thin obstacle
/// shell without being charged for it.
struct RolloutState {
  Pose2 pose;
  double collision = 0.0;
  double dv = 0.0;
  double domega = 0.0;
};

/// Sub-samples per step used for the collision term. At the default bounds
/// the spacing between samples stays below the footprint radius.
inline constexpr int kCollisionSubSamples = 3;

/// Advances a pose by one control period under constant body rates, using
/// the exact constant-curvature arc. Below |omega| = 1e-6 a second-order
/// series branch keeps the map and its derivatives continuous through
/// omega = 0. Throws std::invalid_argument on non-finite inputs or dt <= 0.
Pose2 step(const Pose2& pose, const Action& action, double dt);

namespace detail {
// Both integration branches, exposed so tests can check they agree across
// the switch-over region.
Pose2 step_arc(const Pose2& pose, const Action& action, double dt);
Pose2 step_series(const Pose2& pose, const Action& action, double dt);
}  // namespace detail

/// Jacobians of step() at (pose, action).
struct StepJacobians {
  Eigen::Matrix3d wrt_pose;
  Eigen::Matrix<double, 3, 2> wrt_action;
};

Pose2 step_with_jacobians(const Pose2& pose, const Action& action, double dt,
                          StepJacobians* jac);

/// Rolls the forward model out from `pose0`. The buffered delay actions are
/// executed first and their intermediate states are not scored; the returned
/// list has one RolloutState per entry of `actions`. The first action delta
/// is taken against the newest buffered action (zero when the buffer is
/// empty, i.e. the robot was previously at rest). `field` may be null for
/// obstacle-free rollouts. Throws std::invalid_argument if actions is empty.
std::vector<RolloutState> rollout(const Pose2& pose0, const DelayBuffer& delay,
                                  std::span<const Action> actions, double dt,
                                  const CollisionField* field);

/// Weights mapping the heterogeneous state components (meters, counts,
/// velocity deltas) onto one scalar objective.
struct CostWeights {
  double pos = 1.0;        // 1/m^2
  double heading = 0.2;    // 1/rad^2
  double collision = 1.0;  // unitless; sized for sparse 2D surface samples
  double smooth = 0.05;    // s^2/m^2 and s^2/rad^2
  // Optional extra weight on the final step's pose term, defaulted off.
  double terminal = 0.0;
};

/// Objective value, its per-term breakdown, and its gradient with respect to
/// the 2N action parameters laid out as [v_0, omega_0, v_1, omega_1, ...].
struct ObjectiveEval {
  double total = 0.0;
  double pos = 0.0;     // position + heading terms
  double col = 0.0;
  double smooth = 0.0;
  Eigen::VectorXd grad;
  std::vector<RolloutState> states;
};

/// Evaluates the model-based objective: every rolled-out step is penalized
/// toward the single reference state (goal pose, zero collision, zero action
/// delta), which deliberately rewards early arrival. The gradient is the
/// analytic reverse-mode chain through all N (+ delayed) steps and the soft
/// collision field.
ObjectiveEval rollout_gradient(const Pose2& pose0, const DelayBuffer& delay,
                               std::span<const Action> actions, double dt,
                               const CollisionField* field, const Pose2& goal,
                               const CostWeights& weights);

}  // namespace mbra2d
