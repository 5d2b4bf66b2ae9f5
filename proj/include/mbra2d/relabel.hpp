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

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "mbra2d/geometry.hpp"
#include "mbra2d/mlp.hpp"
#include "mbra2d/smoothing.hpp"
#include "mbra2d/world.hpp"

namespace mbra2d {

/// One relabeling problem: reach `goal` (in the current frame's coordinates)
/// with zero collision and zero action jumps, starting with `delay` commands
/// already in flight.
struct RelabelRequest {
  Pose2 goal;                       // p_g; the reference collision and action
                                    // delta targets are fixed at zero
  DelayBuffer delay;                // last L executed-action estimates
  const CollisionField* field = nullptr;
  std::optional<std::array<Action, kChunkSteps>> warm_start;
};

/// An 8-step action chunk plus its integrated pose waypoints in the current
/// frame's coordinates. Waypoints of action-primary chunks (the optimizer's
/// and the raw integrator's) are exactly the rollout of their actions;
/// pose-primary chunks (filtered/vpt/gcp) carry estimated poses with
/// arc-fit actions alongside.
struct RelabeledChunk {
  int frame_index = -1;
  int goal_index = -1;
  std::string relabeler;
  std::array<Action, kChunkSteps> actions{};
  std::array<Pose2, kChunkSteps> waypoints{};
  double j_total = 0.0;
  double j_pos = 0.0;
  double j_col = 0.0;
  double j_smooth = 0.0;
  bool converged = false;
  bool action_primary = true;
};

struct OptimizerConfig {
  double learning_rate = 0.05;
  int iterations = 200;
  double gradient_tolerance = 1e-3;
  double dt = kControlDt;
  ActionBounds bounds;

  // Iteration trace of the best-so-far objective, filled when non-null.
  mutable std::vector<double>* trace = nullptr;
};

struct RelabelError : std::runtime_error {
  explicit RelabelError(const std::string& what) : std::runtime_error(what) {}
};

/// Minimizes the model-based objective over the 2N action parameters with an
/// adaptive-moment optimizer, actions kept inside bounds by a smooth tanh
/// squashing. Runs a small fixed set of starts (rest, a constant pursuit
/// guess, the warm start or a steered variant) and returns the best. The
/// converged flag reports whether the winning start's final gradient norm
/// fell below the tolerance.
RelabeledChunk mbra_relabel(const RelabelRequest& request,
                            const CostWeights& weights,
                            const OptimizerConfig& config);

/// The chunk's actions are the 8 logged commands from frame i, integrated
/// through the forward model with no delay.
RelabeledChunk raw_relabel(const TrajectoryLog& log, int i);

/// Waypoints from the smoothed relative poses; actions back-derived by
/// finite differences of consecutive poses. Throws RelabelError when fewer
/// than 8 frames remain.
RelabeledChunk filtered_relabel(const SmoothedTrajectory& smoothed, int i);

/// Chains 8 one-step relative-pose predictions of the inverse dynamics
/// model over consecutive scans. Throws RelabelError on an untrained model.
RelabeledChunk vpt_relabel(const MlpModel& idm, const TrajectoryLog& log,
                           int i, double max_range);

/// Single forward pass of the goal-conditioned regressor on
/// (scan_i, scan_{i+8}).
RelabeledChunk gcp_relabel(const MlpModel& gcp, const TrajectoryLog& log,
                           int i, double max_range);

/// Ground-truth relative poses as a chunk (oracle labels for the clean split
/// and for tests).
RelabeledChunk gt_relabel(const TrajectoryLog& log, int i);

/// Scores any chunk's waypoints/actions against the request's goal, field,
/// and delay under the given weights, filling the j_* fields.
void score_chunk(RelabeledChunk* chunk, const RelabelRequest& request,
                 const CostWeights& weights, double dt = kControlDt);

enum class RelabelMethod { kMbra, kRaw, kFiltered, kVpt, kGcp };
RelabelMethod relabel_method_from_string(const std::string& name);
std::string to_string(RelabelMethod method);

struct GoalSampling {
  int n_g_short = 20;   // about 7 seconds ahead
  int n_g_long = 100;   // up to 33 seconds ahead
  bool long_horizon = false;
  int frame_stride = 1;

  int horizon() const { return long_horizon ? n_g_long : n_g_short; }
};

struct RelabelDatasetConfig {
  RelabelMethod method = RelabelMethod::kMbra;
  GoalSampling goals;
  CostWeights weights;
  OptimizerConfig optimizer;
  double pause_speed_floor = 0.05;
  double pause_window = 5.0;
  // Collision field source for the optimizer: the start frame's range scan
  // (observation-derived, the default) or the privileged world geometry.
  bool use_world_field = false;
  double local_field_radius = 8.0;
  double footprint_radius = 0.25;
  double temperature = 0.0125;
  const MlpModel* idm = nullptr;  // required for kVpt
  const MlpModel* gcp = nullptr;  // required for kGcp
};

struct RelabeledTrajectory {
  std::string trajectory_id;
  std::vector<RelabeledChunk> chunks;  // ordered by frame index
};

/// Relabels every eligible window of every log: windows lie inside one
/// pause-filtered interval, goals are sampled uniformly in [1, N_g] from a
/// per-window derived stream, and the previous window's solution warms the
/// next start. Parallel over windows with deterministic output order.
std::vector<RelabeledTrajectory> relabel_dataset(
    const Dataset& dataset, const std::vector<SmoothedTrajectory>& smoothed,
    const RelabelDatasetConfig& config, std::uint64_t seed, int jobs);

}  // namespace mbra2d
