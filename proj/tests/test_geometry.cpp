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
#include <vector>

#include "mbra2d/geometry.hpp"
#include "mbra2d/rng.hpp"
#include "oracles.hpp"

using namespace mbra2d;

namespace {

Action random_action(Rng& rng, const ActionBounds& b = {}) {
  return {rng.uniform(b.v_min, b.v_max), rng.uniform(-b.omega_max, b.omega_max)};
}

std::vector<Action> random_chunk(Rng& rng, int n) {
  std::vector<Action> a(n);
  for (auto& x : a) x = random_action(rng);
  return a;
}

CollisionField small_field() {
  CollisionField f;
  f.points = {{1.0, 0.1}, {1.2, -0.2}, {2.0, 0.4}, {0.5, 0.8}};
  return f;
}

}  // namespace

TEST_CASE("wrap_angle lands in (-pi, pi]") {
  CHECK(wrap_angle(kPi) == doctest::Approx(kPi));
  CHECK(wrap_angle(-kPi) == doctest::Approx(kPi));
  CHECK(wrap_angle(3.0 * kPi) == doctest::Approx(kPi));
  CHECK(wrap_angle(0.0) == doctest::Approx(0.0));
  Rng rng(7);
  for (int i = 0; i < 1000; ++i) {
    const double w = wrap_angle(rng.uniform(-50.0, 50.0));
    CHECK(w > -kPi);
    CHECK(w <= kPi);
  }
}

TEST_CASE("pose algebra group properties") {
  Rng rng(11);
  for (int i = 0; i < 200; ++i) {
    Pose2 a{rng.uniform(-5, 5), rng.uniform(-5, 5), rng.uniform(-4, 4)};
    a.theta = wrap_angle(a.theta);
    Pose2 b{rng.uniform(-5, 5), rng.uniform(-5, 5), wrap_angle(rng.uniform(-4, 4))};

    const Pose2 id = compose(inverse(a), a);
    CHECK(std::abs(id.x) < 1e-12);
    CHECK(std::abs(id.y) < 1e-12);
    CHECK(std::abs(id.theta) < 1e-12);

    const Pose2 back = compose(a, between(a, b));
    CHECK(back.x == doctest::Approx(b.x).epsilon(1e-12));
    CHECK(back.y == doctest::Approx(b.y).epsilon(1e-12));
    CHECK(wrap_angle(back.theta - b.theta) == doctest::Approx(0.0));
  }
}

TEST_CASE("step: zero action fixes the pose") {
  const Pose2 p = step({0, 0, 0}, {0, 0}, kControlDt);
  CHECK(p.x == 0.0);
  CHECK(p.y == 0.0);
  CHECK(p.theta == 0.0);
}

TEST_CASE("step: straight line covers v*t") {
  Pose2 p{0, 0, 0};
  for (int i = 0; i < 8; ++i) p = step(p, {1.5, 0.0}, kControlDt);
  CHECK(p.x == doctest::Approx(4.0).epsilon(1e-12));
  CHECK(std::abs(p.y) < 1e-12);
  CHECK(std::abs(p.theta) < 1e-12);
}

TEST_CASE("step: constant-curvature arc matches the closed form") {
  // Closed form: x = (v/w) sin(wt), y = (v/w)(1 - cos(wt)).
  Pose2 p{0, 0, 0};
  const Action a{0.5, kPi / 8.0};
  for (int i = 0; i < 8; ++i) p = step(p, a, kControlDt);
  const Pose2 want = oracles::constant_arc_endpoint(a.v, a.omega, 8.0 * kControlDt);
  CHECK(p.x == doctest::Approx(want.x).epsilon(1e-12));       // 2*sqrt(3)/pi
  CHECK(p.y == doctest::Approx(want.y).epsilon(1e-12));       // 2/pi
  CHECK(p.theta == doctest::Approx(kPi / 3.0).epsilon(1e-12));
}

TEST_CASE("step: exactly invertible by negated action") {
  Rng rng(23);
  for (int i = 0; i < 500; ++i) {
    Pose2 p{rng.uniform(-5, 5), rng.uniform(-5, 5), wrap_angle(rng.uniform(-4, 4))};
    const Action a = random_action(rng);
    const Pose2 fwd = step(p, a, kControlDt);
    const Pose2 back = step(fwd, {-a.v, -a.omega}, kControlDt);
    CHECK(std::abs(back.x - p.x) < 1e-10);
    CHECK(std::abs(back.y - p.y) < 1e-10);
    CHECK(std::abs(wrap_angle(back.theta - p.theta)) < 1e-10);
  }
}

TEST_CASE("step: arc and series branches agree in the crossover band") {
  Rng rng(31);
  for (int i = 0; i < 500; ++i) {
    const double mag = std::pow(10.0, rng.uniform(-7.0, -5.0));
    const Action a{rng.uniform(-0.5, 2.0), (rng.uniform() < 0.5 ? -1.0 : 1.0) * mag};
    Pose2 p{rng.uniform(-5, 5), rng.uniform(-5, 5), wrap_angle(rng.uniform(-4, 4))};
    const Pose2 arc = detail::step_arc(p, a, kControlDt);
    const Pose2 ser = detail::step_series(p, a, kControlDt);
    CHECK(std::abs(arc.x - ser.x) < 1e-9);
    CHECK(std::abs(arc.y - ser.y) < 1e-9);
    CHECK(std::abs(wrap_angle(arc.theta - ser.theta)) < 1e-9);
  }
}

TEST_CASE("step: rejects non-finite inputs and bad dt") {
  CHECK_THROWS_AS(step({0, 0, 0}, {std::nan(""), 0}, kControlDt),
                  std::invalid_argument);
  CHECK_THROWS_AS(step({0, 0, 0}, {1, 0}, 0.0), std::invalid_argument);
  CHECK_THROWS_AS(step({std::numeric_limits<double>::infinity(), 0, 0}, {1, 0},
                       kControlDt),
                  std::invalid_argument);
}

TEST_CASE("rollout: zero actions keep the start pose") {
  const std::vector<Action> zeros(8);
  const auto states = rollout({1, 2, 0.5}, DelayBuffer{}, zeros, kControlDt, nullptr);
  REQUIRE(states.size() == 8);
  for (const auto& s : states) {
    CHECK(s.pose.x == doctest::Approx(1.0));
    CHECK(s.pose.y == doctest::Approx(2.0));
    CHECK(s.collision == 0.0);
    CHECK(s.dv == 0.0);
    CHECK(s.domega == 0.0);
  }
}

TEST_CASE("rollout: delay pre-roll advances the first scored pose") {
  DelayBuffer delay(std::vector<Action>{{1.0, 0.0}, {1.0, 0.0}});
  const std::vector<Action> zeros(8);
  const auto states = rollout({0, 0, 0}, delay, zeros, kControlDt, nullptr);
  CHECK(states[0].pose.x == doctest::Approx(2.0 / 3.0).epsilon(1e-12));
  // First delta is measured against the newest buffered action.
  CHECK(states[0].dv == doctest::Approx(-1.0));
}

TEST_CASE("rollout: matches naive sequential integration") {
  Rng rng(47);
  for (int trial = 0; trial < 100; ++trial) {
    const int delay_steps = rng.uniform_int(0, 3);
    std::vector<Action> buffered(delay_steps);
    for (auto& b : buffered) b = random_action(rng);
    const auto chunk = random_chunk(rng, 8);
    Pose2 start{rng.uniform(-3, 3), rng.uniform(-3, 3), wrap_angle(rng.uniform(-4, 4))};

    std::vector<Action> all = buffered;
    all.insert(all.end(), chunk.begin(), chunk.end());
    const auto ref = oracles::sequential_integration(start, all, kControlDt);

    const auto states =
        rollout(start, DelayBuffer{buffered}, chunk, kControlDt, nullptr);
    for (int i = 0; i < 8; ++i) {
      const Pose2& want = ref[delay_steps + i];
      CHECK(states[i].pose.x == doctest::Approx(want.x).epsilon(1e-12));
      CHECK(states[i].pose.y == doctest::Approx(want.y).epsilon(1e-12));
      CHECK(wrap_angle(states[i].pose.theta - want.theta) ==
            doctest::Approx(0.0));
    }
  }
}

TEST_CASE("rollout: zero-delay equals zero-filled buffer") {
  Rng rng(53);
  const auto chunk = random_chunk(rng, 8);
  const Pose2 start{0.3, -0.2, 0.4};
  const auto a = rollout(start, DelayBuffer{}, chunk, kControlDt, nullptr);
  const auto b = rollout(start, DelayBuffer(3), chunk, kControlDt, nullptr);
  for (int i = 0; i < 8; ++i) {
    CHECK(a[i].pose.x == b[i].pose.x);
    CHECK(a[i].pose.y == b[i].pose.y);
    CHECK(a[i].pose.theta == b[i].pose.theta);
    CHECK(a[i].dv == b[i].dv);
    CHECK(a[i].domega == b[i].domega);
  }
}

TEST_CASE("rollout: empty chunk is rejected") {
  CHECK_THROWS_AS(
      rollout({0, 0, 0}, DelayBuffer{}, std::span<const Action>{}, kControlDt,
              nullptr),
      std::invalid_argument);
}

TEST_CASE("collision field: sigmoid tail and centered point") {
  CollisionField f;
  f.points = {{10.0 * f.temperature + f.footprint_radius + 1.0, 0.0}};
  SUBCASE("far point contributes almost nothing") {
    CollisionField far;
    far.points = {{far.footprint_radius + 10.0 * far.temperature, 0.0}};
    CHECK(far.value({0, 0, 0}) < 1e-3);
  }
  SUBCASE("centered point saturates") {
    CollisionField on;
    on.points = {{0.0, 0.0}};
    CHECK(on.value({0, 0, 0}) ==
          doctest::Approx(1.0).epsilon(1e-6));
  }
}

TEST_CASE("collision field: gradient matches finite differences") {
  const CollisionField f = small_field();
  Rng rng(61);
  double worst = 0.0;
  for (int i = 0; i < 100; ++i) {
    const Pose2 p{rng.uniform(0.0, 2.2), rng.uniform(-0.8, 1.0), 0.0};
    Eigen::Vector2d g;
    f.value_with_gradient(p, &g);
    const auto scalar = [&](const Eigen::VectorXd& x) {
      return f.value({x(0), x(1), 0.0});
    };
    Eigen::VectorXd x(2);
    x << p.x, p.y;
    const Eigen::VectorXd fd = oracles::finite_difference(scalar, x, 1e-6);
    worst = std::max(worst, oracles::max_relative_error(g, fd, 1e-6));
  }
  CHECK(worst < 1e-5);
}

TEST_CASE("rollout_gradient: stationary at the goal with zero actions") {
  const std::vector<Action> zeros(8);
  const auto ev = rollout_gradient({0, 0, 0}, DelayBuffer{}, zeros, kControlDt,
                                   nullptr, {0, 0, 0}, CostWeights{});
  CHECK(ev.total < 1e-12);
  for (int i = 0; i < 8; ++i) CHECK(std::abs(ev.grad(2 * i)) < 1e-12);
}

TEST_CASE("rollout_gradient: matches central finite differences") {
  Rng rng(101);
  const CollisionField f = small_field();
  const CostWeights w{};
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const int delay_steps = rng.uniform_int(0, 3);
    std::vector<Action> buffered(delay_steps);
    for (auto& b : buffered) b = random_action(rng);
    const DelayBuffer delay{buffered};
    auto chunk = random_chunk(rng, 8);
    const Pose2 goal{rng.uniform(-2, 3), rng.uniform(-2, 2),
                     wrap_angle(rng.uniform(-2, 2))};
    const CollisionField* field = (trial % 2 == 0) ? &f : nullptr;

    const auto ev =
        rollout_gradient({0, 0, 0}, delay, chunk, kControlDt, field, goal, w);

    const auto objective = [&](const Eigen::VectorXd& x) {
      std::vector<Action> a(8);
      for (int i = 0; i < 8; ++i) a[i] = {x(2 * i), x(2 * i + 1)};
      return rollout_gradient({0, 0, 0}, delay, a, kControlDt, field, goal, w)
          .total;
    };
    Eigen::VectorXd x(16);
    for (int i = 0; i < 8; ++i) {
      x(2 * i) = chunk[i].v;
      x(2 * i + 1) = chunk[i].omega;
    }
    const Eigen::VectorXd fd = oracles::finite_difference(objective, x, 1e-5);
    worst = std::max(worst, oracles::max_relative_error(ev.grad, fd, 1e-6));
  }
  CHECK(worst < 1e-5);
}

TEST_CASE("rollout_gradient: obstacle ahead pushes v_0 down") {
  CollisionField f;
  // Dense wall of points straight ahead.
  for (int i = -4; i <= 4; ++i) f.points.push_back({0.6, 0.05 * i});
  std::vector<Action> chunk(8, Action{1.0, 0.0});
  CostWeights w{};
  w.pos = 0.0;
  w.heading = 0.0;
  w.smooth = 0.0;
  const auto ev = rollout_gradient({0, 0, 0}, DelayBuffer{}, chunk, kControlDt,
                                   &f, {0, 0, 0}, w);
  CHECK(ev.grad(0) > 0.0);  // collision falls as v_0 falls
  CHECK(ev.col > 0.0);
}

TEST_CASE("rollout_gradient: cost breakdown sums to the total") {
  Rng rng(131);
  const CollisionField f = small_field();
  for (int trial = 0; trial < 20; ++trial) {
    const auto chunk = random_chunk(rng, 8);
    const auto ev = rollout_gradient({0, 0, 0}, DelayBuffer{}, chunk, kControlDt,
                                     &f, {1.0, 0.5, 0.3}, CostWeights{});
    CHECK(ev.total == doctest::Approx(ev.pos + ev.col + ev.smooth).epsilon(1e-12));
  }
}
