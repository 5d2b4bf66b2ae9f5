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

#include "mbra2d/relabel.hpp"

#include <algorithm>
#include <cmath>

#include "mbra2d/parallel.hpp"
#include "mbra2d/rng.hpp"

namespace mbra2d {

namespace {

// Smooth saturating map keeping actions strictly inside bounds while the
// optimizer works in an unconstrained space.
struct Squash {
  double v_mid, v_half, omega_half;

  explicit Squash(const ActionBounds& b)
      : v_mid(0.5 * (b.v_min + b.v_max)),
        v_half(0.5 * (b.v_max - b.v_min)),
        omega_half(b.omega_max) {}

  Action apply(double uv, double uw) const {
    return {v_mid + v_half * std::tanh(uv), omega_half * std::tanh(uw)};
  }

  // d(action)/d(u) for the chain rule.
  std::pair<double, double> slope(double uv, double uw) const {
    const double tv = std::tanh(uv);
    const double tw = std::tanh(uw);
    return {v_half * (1.0 - tv * tv), omega_half * (1.0 - tw * tw)};
  }

  double unsquash_v(double v) const {
    const double z = std::clamp((v - v_mid) / v_half, -1.0 + 1e-9, 1.0 - 1e-9);
    return std::atanh(z);
  }
  double unsquash_omega(double w) const {
    const double z = std::clamp(w / omega_half, -1.0 + 1e-9, 1.0 - 1e-9);
    return std::atanh(z);
  }
};

std::array<Action, kChunkSteps> pursuit_guess(const Pose2& goal,
                                              const OptimizerConfig& cfg,
                                              double omega_offset) {
  const double horizon = kChunkSteps * cfg.dt;
  const double bearing = std::atan2(goal.y, goal.x);
  const double dist = std::hypot(goal.x, goal.y);
  Action a;
  a.v = std::clamp(dist / horizon * std::max(std::cos(bearing), 0.2),
                   cfg.bounds.v_min, cfg.bounds.v_max);
  a.omega = std::clamp(1.5 * bearing / horizon + omega_offset,
                       -cfg.bounds.omega_max, cfg.bounds.omega_max);
  std::array<Action, kChunkSteps> chunk;
  chunk.fill(a);
  return chunk;
}

void back_derive_actions(RelabeledChunk* chunk, double dt,
                         const ActionBounds& bounds) {
  Pose2 prev = Pose2::identity();
  for (int k = 0; k < kChunkSteps; ++k) {
    const Pose2 rel = between(prev, chunk->waypoints[static_cast<std::size_t>(k)]);
    chunk->actions[static_cast<std::size_t>(k)] =
        bounds.clamp({rel.x / dt, wrap_angle(rel.theta) / dt});
    prev = chunk->waypoints[static_cast<std::size_t>(k)];
  }
}

Eigen::VectorXd scan_pair_input(const std::vector<double>& a,
                                const std::vector<double>& b,
                                double max_range) {
  Eigen::VectorXd x(static_cast<Eigen::Index>(a.size() + b.size()));
  for (std::size_t i = 0; i < a.size(); ++i) x(static_cast<Eigen::Index>(i)) = a[i] / max_range;
  for (std::size_t i = 0; i < b.size(); ++i) {
    x(static_cast<Eigen::Index>(a.size() + i)) = b[i] / max_range;
  }
  return x;
}

void require_horizon(const char* who, int i, int frame_count) {
  if (i < 0 || i + kChunkSteps >= frame_count) {
    throw RelabelError(std::string(who) + ": insufficient horizon at frame " +
                       std::to_string(i) + " of " + std::to_string(frame_count));
  }
}

}  // namespace

RelabeledChunk mbra_relabel(const RelabelRequest& request,
                            const CostWeights& weights,
                            const OptimizerConfig& cfg) {
  const Squash squash(cfg.bounds);

  std::vector<std::array<Action, kChunkSteps>> starts;
  starts.emplace_back();  // rest
  starts.push_back(pursuit_guess(request.goal, cfg, 0.0));
  if (request.warm_start) {
    starts.push_back(*request.warm_start);
  } else {
    const double steer = request.goal.y >= 0.0 ? 0.6 : -0.6;
    starts.push_back(pursuit_guess(request.goal, cfg, steer));
  }

  bool have_best = false;
  double best_cost = std::numeric_limits<double>::infinity();
  RelabeledChunk best;
  double best_final_grad_norm = std::numeric_limits<double>::infinity();
  int best_start = -1;
  int failures = 0;

  for (std::size_t si = 0; si < starts.size(); ++si) {
    const auto& start = starts[si];
    Eigen::VectorXd u(2 * kChunkSteps);
    for (int k = 0; k < kChunkSteps; ++k) {
      u(2 * k) = squash.unsquash_v(start[static_cast<std::size_t>(k)].v);
      u(2 * k + 1) = squash.unsquash_omega(start[static_cast<std::size_t>(k)].omega);
    }

    AdamState adam;
    std::array<Action, kChunkSteps> actions{};
    bool diverged = false;
    double final_grad_norm = std::numeric_limits<double>::infinity();

    // The collision sigmoid is sharp enough to saturate once a waypoint sits
    // on an obstacle, which kills its gradient. Gradients therefore come
    // from a temperature-annealed copy of the field (wide early, true
    // temperature for the last third) while candidate costs are always
    // measured under the true objective.
    CollisionField annealed;
    if (request.field) annealed = *request.field;

    for (int iter = 0; iter < cfg.iterations; ++iter) {
      for (int k = 0; k < kChunkSteps; ++k) {
        actions[static_cast<std::size_t>(k)] = squash.apply(u(2 * k), u(2 * k + 1));
      }
      const CollisionField* grad_field = request.field;
      if (request.field) {
        const double progress =
            std::min(1.0, 1.5 * (iter + 1) / std::max(1, cfg.iterations));
        annealed.temperature =
            request.field->temperature * (1.0 + 7.0 * (1.0 - progress) * (1.0 - progress));
        grad_field = &annealed;
      }
      ObjectiveEval ev;
      try {
        ev = rollout_gradient(Pose2::identity(), request.delay, actions, cfg.dt,
                              grad_field, request.goal, weights);
        if (request.field && grad_field->temperature !=
                                 request.field->temperature) {
          // Re-measure under the true temperature for best-candidate tracking.
          const ObjectiveEval true_ev =
              rollout_gradient(Pose2::identity(), request.delay, actions, cfg.dt,
                               request.field, request.goal, weights);
          ev.total = true_ev.total;
          ev.pos = true_ev.pos;
          ev.col = true_ev.col;
          ev.smooth = true_ev.smooth;
          ev.states = true_ev.states;
        }
      } catch (const std::invalid_argument&) {
        diverged = true;
        break;
      }
      if (!std::isfinite(ev.total)) {
        diverged = true;
        break;
      }

      if (ev.total < best_cost) {
        best_cost = ev.total;
        best.actions = actions;
        for (int k = 0; k < kChunkSteps; ++k) {
          best.waypoints[static_cast<std::size_t>(k)] =
              ev.states[static_cast<std::size_t>(k)].pose;
        }
        best.j_total = ev.total;
        best.j_pos = ev.pos;
        best.j_col = ev.col;
        best.j_smooth = ev.smooth;
        best_start = static_cast<int>(si);
        have_best = true;
      }
      if (cfg.trace) cfg.trace->push_back(best_cost);

      Eigen::VectorXd grad_u(2 * kChunkSteps);
      for (int k = 0; k < kChunkSteps; ++k) {
        const auto [sv, sw] = squash.slope(u(2 * k), u(2 * k + 1));
        grad_u(2 * k) = ev.grad(2 * k) * sv;
        grad_u(2 * k + 1) = ev.grad(2 * k + 1) * sw;
      }
      final_grad_norm = grad_u.norm();
      adam.update(u, grad_u, cfg.learning_rate);
    }

    if (diverged) {
      ++failures;
      continue;
    }
    // Convergence is judged at the winning start's last iterate.
    if (best_start == static_cast<int>(si)) {
      best_final_grad_norm = final_grad_norm;
    }
  }

  if (!have_best) {
    throw RelabelError("mbra_relabel: all " + std::to_string(starts.size()) +
                       " starts produced non-finite costs (goal " +
                       std::to_string(request.goal.x) + ", " +
                       std::to_string(request.goal.y) + "; " +
                       std::to_string(failures) + " failures)");
  }
  best.relabeler = "mbra";
  best.converged = best_final_grad_norm < cfg.gradient_tolerance;
  best.action_primary = true;
  return best;
}

RelabeledChunk raw_relabel(const TrajectoryLog& log, int i) {
  require_horizon("raw_relabel", i, static_cast<int>(log.frames.size()) + 1);
  RelabeledChunk chunk;
  chunk.frame_index = i;
  chunk.relabeler = "raw";
  std::vector<Action> actions(kChunkSteps);
  for (int k = 0; k < kChunkSteps; ++k) {
    actions[static_cast<std::size_t>(k)] =
        log.frames[static_cast<std::size_t>(i + k)].commanded;
    chunk.actions[static_cast<std::size_t>(k)] = actions[static_cast<std::size_t>(k)];
  }
  const auto states =
      rollout(Pose2::identity(), DelayBuffer{}, actions, kControlDt, nullptr);
  for (int k = 0; k < kChunkSteps; ++k) {
    chunk.waypoints[static_cast<std::size_t>(k)] = states[static_cast<std::size_t>(k)].pose;
  }
  chunk.converged = true;
  chunk.action_primary = true;
  return chunk;
}

RelabeledChunk filtered_relabel(const SmoothedTrajectory& smoothed, int i) {
  require_horizon("filtered_relabel", i, static_cast<int>(smoothed.states.size()));
  RelabeledChunk chunk;
  chunk.frame_index = i;
  chunk.relabeler = "filtered";
  for (int k = 0; k < kChunkSteps; ++k) {
    chunk.waypoints[static_cast<std::size_t>(k)] = relative_pose(smoothed, i, i + k + 1);
  }
  back_derive_actions(&chunk, kControlDt, ActionBounds{});
  chunk.converged = true;
  chunk.action_primary = false;
  return chunk;
}

RelabeledChunk vpt_relabel(const MlpModel& idm, const TrajectoryLog& log,
                           int i, double max_range) {
  if (!idm.trained) throw RelabelError("vpt_relabel: model is not trained");
  require_horizon("vpt_relabel", i, static_cast<int>(log.frames.size()));
  RelabeledChunk chunk;
  chunk.frame_index = i;
  chunk.relabeler = "vpt";
  Pose2 wp = Pose2::identity();
  for (int k = 0; k < kChunkSteps; ++k) {
    const Eigen::VectorXd x =
        scan_pair_input(log.frames[static_cast<std::size_t>(i + k)].scan,
                        log.frames[static_cast<std::size_t>(i + k + 1)].scan,
                        max_range);
    const Eigen::VectorXd rel = idm.predict(x);
    wp = compose(wp, {rel(0), rel(1), wrap_angle(rel(2))});
    chunk.waypoints[static_cast<std::size_t>(k)] = wp;
  }
  back_derive_actions(&chunk, kControlDt, ActionBounds{});
  chunk.converged = true;
  chunk.action_primary = false;
  return chunk;
}

RelabeledChunk gcp_relabel(const MlpModel& gcp, const TrajectoryLog& log,
                           int i, double max_range) {
  if (!gcp.trained) throw RelabelError("gcp_relabel: model is not trained");
  require_horizon("gcp_relabel", i, static_cast<int>(log.frames.size()));
  RelabeledChunk chunk;
  chunk.frame_index = i;
  chunk.goal_index = i + kChunkSteps;
  chunk.relabeler = "gcp";
  const Eigen::VectorXd x =
      scan_pair_input(log.frames[static_cast<std::size_t>(i)].scan,
                      log.frames[static_cast<std::size_t>(i + kChunkSteps)].scan,
                      max_range);
  const Eigen::VectorXd out = gcp.predict(x);
  if (out.size() != 3 * kChunkSteps) {
    throw RelabelError("gcp_relabel: model output size mismatch");
  }
  for (int k = 0; k < kChunkSteps; ++k) {
    chunk.waypoints[static_cast<std::size_t>(k)] = {out(3 * k), out(3 * k + 1),
                                                    wrap_angle(out(3 * k + 2))};
  }
  back_derive_actions(&chunk, kControlDt, ActionBounds{});
  chunk.converged = true;
  chunk.action_primary = false;
  return chunk;
}

RelabeledChunk gt_relabel(const TrajectoryLog& log, int i) {
  require_horizon("gt_relabel", i, static_cast<int>(log.frames.size()));
  RelabeledChunk chunk;
  chunk.frame_index = i;
  chunk.relabeler = "gt";
  const Pose2 base = log.frames[static_cast<std::size_t>(i)].gt_pose;
  for (int k = 0; k < kChunkSteps; ++k) {
    chunk.waypoints[static_cast<std::size_t>(k)] =
        between(base, log.frames[static_cast<std::size_t>(i + k + 1)].gt_pose);
  }
  back_derive_actions(&chunk, kControlDt, ActionBounds{});
  chunk.converged = true;
  chunk.action_primary = false;
  return chunk;
}

void score_chunk(RelabeledChunk* chunk, const RelabelRequest& request,
                 const CostWeights& weights, double dt) {
  (void)dt;
  chunk->j_pos = 0.0;
  chunk->j_col = 0.0;
  chunk->j_smooth = 0.0;
  Action prev = request.delay.empty() ? Action{} : request.delay.newest();
  Pose2 prev_wp = Pose2::identity();
  for (int k = 0; k < kChunkSteps; ++k) {
    const Pose2& wp = chunk->waypoints[static_cast<std::size_t>(k)];
    const double ex = request.goal.x - wp.x;
    const double ey = request.goal.y - wp.y;
    const double eth = wrap_angle(request.goal.theta - wp.theta);
    const double scale = (k == kChunkSteps - 1) ? 1.0 + weights.terminal : 1.0;
    chunk->j_pos += scale * (weights.pos * (ex * ex + ey * ey) +
                             weights.heading * eth * eth);
    if (request.field) {
      // Same swept-path convention as the rollout: sample between the
      // waypoints so chunks are charged for crossing thin obstacles.
      double c = 0.0;
      for (int j = 1; j <= kCollisionSubSamples; ++j) {
        const double f = static_cast<double>(j) / kCollisionSubSamples;
        const Pose2 along{prev_wp.x + f * (wp.x - prev_wp.x),
                          prev_wp.y + f * (wp.y - prev_wp.y), wp.theta};
        c += request.field->value(along);
      }
      c /= kCollisionSubSamples;
      chunk->j_col += weights.collision * c * c;
    }
    const Action& a = chunk->actions[static_cast<std::size_t>(k)];
    const double dv = a.v - prev.v;
    const double dw = a.omega - prev.omega;
    chunk->j_smooth += weights.smooth * (dv * dv + dw * dw);
    prev = a;
    prev_wp = wp;
  }
  chunk->j_total = chunk->j_pos + chunk->j_col + chunk->j_smooth;
}

RelabelMethod relabel_method_from_string(const std::string& name) {
  if (name == "mbra") return RelabelMethod::kMbra;
  if (name == "raw") return RelabelMethod::kRaw;
  if (name == "filtered") return RelabelMethod::kFiltered;
  if (name == "vpt") return RelabelMethod::kVpt;
  if (name == "gcp") return RelabelMethod::kGcp;
  throw std::invalid_argument("unknown relabel method `" + name +
                              "` (expected mbra|raw|filtered|vpt|gcp)");
}

std::string to_string(RelabelMethod method) {
  switch (method) {
    case RelabelMethod::kMbra: return "mbra";
    case RelabelMethod::kRaw: return "raw";
    case RelabelMethod::kFiltered: return "filtered";
    case RelabelMethod::kVpt: return "vpt";
    case RelabelMethod::kGcp: return "gcp";
  }
  return "?";
}

std::vector<RelabeledTrajectory> relabel_dataset(
    const Dataset& dataset, const std::vector<SmoothedTrajectory>& smoothed,
    const RelabelDatasetConfig& cfg, std::uint64_t seed, int jobs) {
  if (smoothed.size() != dataset.logs.size()) {
    throw RelabelError(
        "relabel_dataset: missing smoothed data; run smoothing first");
  }
  if (cfg.method == RelabelMethod::kVpt && (!cfg.idm || !cfg.idm->trained)) {
    throw RelabelError("relabel_dataset: vpt needs a trained inverse model");
  }
  if (cfg.method == RelabelMethod::kGcp && (!cfg.gcp || !cfg.gcp->trained)) {
    throw RelabelError("relabel_dataset: gcp needs a trained regressor");
  }

  struct Window {
    int log_index;
    int frame;
    int interval_end;
  };
  std::vector<Window> windows;
  for (std::size_t li = 0; li < dataset.logs.size(); ++li) {
    const TrajectoryLog& log = dataset.logs[li];
    if (smoothed[li].states.size() != log.frames.size()) {
      throw RelabelError(
          "relabel_dataset: smoothed data misaligned; run smoothing first");
    }
    const auto intervals =
        pause_filter_intervals(log, cfg.pause_speed_floor, cfg.pause_window);
    for (const auto& [a, b] : intervals) {
      for (int i = a; i + kChunkSteps < b; i += cfg.goals.frame_stride) {
        windows.push_back({static_cast<int>(li), i, b});
      }
    }
  }

  const double max_range = dataset.config.episode.scan.max_range;
  std::vector<RelabeledChunk> chunks(windows.size());

  parallel_for(windows.size(), jobs, [&](std::size_t wi) {
    const Window& w = windows[wi];
    const TrajectoryLog& log = dataset.logs[static_cast<std::size_t>(w.log_index)];
    const SmoothedTrajectory& sm = smoothed[static_cast<std::size_t>(w.log_index)];
    Rng rng(derive_seed(seed, {static_cast<std::uint64_t>(w.log_index),
                               static_cast<std::uint64_t>(w.frame)}));

    const int max_offset =
        std::min(cfg.goals.horizon(), w.interval_end - 1 - w.frame);
    const int offset = rng.uniform_int(1, std::max(1, max_offset));
    const int goal_index = w.frame + offset;

    RelabelRequest request;
    request.goal = relative_pose(sm, w.frame, goal_index);

    const int delay_steps = log.noise.delay_steps;
    std::vector<Action> buffered(static_cast<std::size_t>(delay_steps));
    for (int k = 0; k < delay_steps; ++k) {
      const int idx = w.frame - delay_steps + k;
      buffered[static_cast<std::size_t>(k)] =
          idx >= 0 ? sm.rates[static_cast<std::size_t>(idx)] : Action{};
    }
    request.delay = DelayBuffer{buffered};

    CollisionField field;
    if (cfg.use_world_field) {
      const WorldModel& world =
          dataset.worlds[static_cast<std::size_t>(
              dataset.log_world_index[static_cast<std::size_t>(w.log_index)])];
      field = make_local_collision_field(
          world, sm.states[static_cast<std::size_t>(w.frame)].mean,
          cfg.local_field_radius, cfg.footprint_radius, cfg.temperature);
    } else {
      field = scan_to_collision_field(
          log.frames[static_cast<std::size_t>(w.frame)].scan, max_range,
          cfg.footprint_radius, cfg.temperature);
    }
    request.field = &field;

    RelabeledChunk chunk;
    switch (cfg.method) {
      case RelabelMethod::kMbra: {
        // The logged commands are the third start: the operator's own intent.
        std::array<Action, kChunkSteps> logged{};
        for (int k = 0; k < kChunkSteps; ++k) {
          logged[static_cast<std::size_t>(k)] =
              cfg.optimizer.bounds.clamp(
                  log.frames[static_cast<std::size_t>(w.frame + k)].commanded);
        }
        request.warm_start = logged;
        chunk = mbra_relabel(request, cfg.weights, cfg.optimizer);
        break;
      }
      case RelabelMethod::kRaw:
        chunk = raw_relabel(log, w.frame);
        break;
      case RelabelMethod::kFiltered:
        chunk = filtered_relabel(sm, w.frame);
        break;
      case RelabelMethod::kVpt:
        chunk = vpt_relabel(*cfg.idm, log, w.frame, max_range);
        break;
      case RelabelMethod::kGcp:
        chunk = gcp_relabel(*cfg.gcp, log, w.frame, max_range);
        break;
    }
    chunk.frame_index = w.frame;
    chunk.goal_index = goal_index;
    score_chunk(&chunk, request, cfg.weights, cfg.optimizer.dt);
    chunks[wi] = std::move(chunk);
  });

  std::vector<RelabeledTrajectory> out(dataset.logs.size());
  for (std::size_t li = 0; li < dataset.logs.size(); ++li) {
    out[li].trajectory_id = dataset.logs[li].trajectory_id;
  }
  for (std::size_t wi = 0; wi < windows.size(); ++wi) {
    out[static_cast<std::size_t>(windows[wi].log_index)].chunks.push_back(
        std::move(chunks[wi]));
  }
  return out;
}

}  // namespace mbra2d
