#include <algorithm>
#include <array>
#include <cmath>

#include "doctest.h"
#include "qpo/gradients.hpp"
#include "qpo/policy.hpp"
#include "qpo/queue_env.hpp"
#include "test_util.hpp"

using namespace qpo;

TEST_CASE("uniformization rate is total arrivals plus the fastest server") {
  CHECK(SystemConfig({1, 1, 1}, {3, 2, 1}, {1, 1, 1}, 10).uniformization_rate() == 6.0);
  CHECK(SystemConfig({1, 1, 1}, {18, 9, 6}, {1, 1, 1}, 10).uniformization_rate() == 21.0);
  CHECK(uniformization_rate(SystemConfig({0.5}, {1}, {1}, 10)) == 1.5);
}

TEST_CASE("config validation names the bad field") {
  auto field_of = [](auto&& make) {
    try {
      make();
    } catch (const ConfigError& e) {
      return e.field();
    }
    return std::string("<none>");
  };
  CHECK(field_of([] { SystemConfig({1, 1}, {1}, {1}, 5); }) == "lambdas");
  CHECK(field_of([] { SystemConfig({1}, {1}, {1, 2}, 5); }) == "costs");
  CHECK(field_of([] { SystemConfig({1}, {0}, {1}, 5); }) == "mus");
  CHECK(field_of([] { SystemConfig({-1}, {1}, {1}, 5); }) == "lambdas");
  CHECK(field_of([] { SystemConfig({1}, {1}, {1}, 0); }) == "capacity");
  CHECK(field_of([] { SystemConfig({1}, {1}, {1}, 5).with_uniformization_rate(1.5); }) ==
        "uniformization_rate");
  CHECK(SystemConfig({1, 1, 1}, {3, 2, 1}, {1, 1, 1}, 100).load() == doctest::Approx(11.0 / 6.0));
}

TEST_CASE("event distribution when serving queue 1") {
  const SystemConfig cfg({1, 1, 1}, {3, 2, 1}, {1, 1, 1}, 10);
  const auto events = event_distribution(cfg, 0);
  REQUIRE(events.size() == 5);
  for (int i = 0; i < 3; ++i) {
    CHECK(events[i].kind == EventKind::Arrival);
    CHECK(events[i].probability == doctest::Approx(1.0 / 6.0));
  }
  CHECK(events[3].kind == EventKind::Completion);
  CHECK(events[3].probability == doctest::Approx(0.5));
  CHECK(events[4].kind == EventKind::SelfLoop);
  CHECK(events[4].probability == doctest::Approx(0.0).epsilon(1e-15));
}

TEST_CASE("event probabilities sum to one for every action") {
  Rng rng(11);
  for (int trial = 0; trial < 200; ++trial) {
    const int m = 1 + static_cast<int>(rng.next_u64() % 4);
    std::vector<double> l(m), mu(m), c(m, 1.0);
    for (int i = 0; i < m; ++i) {
      l[i] = 3.0 * rng.uniform();
      mu[i] = 0.1 + 10.0 * rng.uniform();
    }
    const SystemConfig cfg(l, mu, c, 7);
    for (Action a = 0; a <= m; ++a) {
      double total = 0.0;
      for (const auto& e : event_distribution(cfg, a)) {
        CHECK(e.probability >= 0.0);
        total += e.probability;
      }
      CHECK(total == doctest::Approx(1.0).epsilon(1e-14));
    }
  }
}

TEST_CASE("empty system is unchanged by completions and self-loops") {
  const SystemConfig cfg({1, 1, 1}, {3, 2, 1}, {1, 1, 1}, 10);
  for (Action a = 0; a <= 3; ++a) {
    std::vector<int> jobs{0, 0, 0};
    apply_event(cfg, EventKind::SelfLoop, -1, jobs);
    if (a < 3) apply_event(cfg, EventKind::Completion, a, jobs);
    CHECK(jobs == std::vector<int>{0, 0, 0});
  }
}

TEST_CASE("arrival to a full queue is lost") {
  const SystemConfig cfg({1, 1}, {1, 1}, {1, 1}, 3);
  std::vector<int> jobs{3, 1};
  apply_event(cfg, EventKind::Arrival, 0, jobs);
  CHECK(jobs == std::vector<int>{3, 1});
  apply_event(cfg, EventKind::Arrival, 1, jobs);
  CHECK(jobs == std::vector<int>{3, 2});
}

TEST_CASE("step charges the pre-transition cost and moves the server") {
  const SystemConfig cfg({1, 1}, {2, 1}, {1, 3}, 4);
  Rng rng(5);
  const SysState state{{2, 1}, idle_action(2)};
  const auto result = step(cfg, state, 1, rng);
  CHECK(result.cost == doctest::Approx((2.0 + 3.0) / (2.0 * 4.0)));
  CHECK(result.next.server == 1);
  CHECK_THROWS_AS(step(cfg, state, 3, rng), std::out_of_range);
  CHECK_THROWS_AS(step(cfg, state, -1, rng), std::out_of_range);
}

TEST_CASE("one-step frequencies match the analytic event distribution") {
  const SystemConfig cfg({1, 2, 0.5}, {3, 4, 1}, {1, 1, 1}, 5);
  const SysState start{{1, 1, 1}, 0};
  const auto events = event_distribution(cfg, 0);
  constexpr int kSamples = 200000;
  std::array<long, 5> counts{};
  Rng rng(42);
  for (int n = 0; n < kSamples; ++n) {
    const auto next = step(cfg, start, 0, rng).next.jobs;
    if (next[0] == 2) ++counts[0];
    else if (next[1] == 2) ++counts[1];
    else if (next[2] == 2) ++counts[2];
    else if (next[0] == 0) ++counts[3];
    else ++counts[4];
  }
  for (int k = 0; k < 5; ++k) {
    const double p = events[k].probability;
    const double se = std::sqrt(p * (1.0 - p) / kSamples);
    CHECK(std::abs(counts[k] / static_cast<double>(kSamples) - p) <= 3.0 * se + 1e-12);
  }
}

TEST_CASE("rollout replays bit-identically and respects bounds") {
  const auto cfg = test::preset_system({3, 2, 1}, 10);
  const auto policy = PolicyParams::zeros(3, Scale::Linear);
  const auto a = rollout(cfg, policy, 200, 50, 99);
  const auto b = rollout(cfg, policy, 200, 50, 99);
  REQUIRE(a.steps.size() == 200);
  CHECK(a.seed == 99);
  for (std::size_t t = 0; t < a.steps.size(); ++t) {
    CHECK(a.steps[t].state == b.steps[t].state);
    CHECK(a.steps[t].action == b.steps[t].action);
    CHECK(a.steps[t].cost == b.steps[t].cost);
    CHECK(a.steps[t].cost >= 0.0);
    CHECK(a.steps[t].cost <= 1.0);
    for (int s : a.steps[t].state.jobs) {
      CHECK(s >= 0);
      CHECK(s <= 10);
    }
    if (t > 0) CHECK(a.steps[t].state.server == a.steps[t - 1].action);
  }
  const auto c = rollout(cfg, policy, 200, 50, 100);
  bool differs = false;
  for (std::size_t t = 0; t < 200; ++t) differs |= !(a.steps[t].state == c.steps[t].state);
  CHECK(differs);
}

TEST_CASE("rollout starts empty with an idle server") {
  const auto cfg = test::preset_system({3, 2, 1}, 10);
  const auto traj = rollout(cfg, PolicyParams::zeros(3, Scale::Log), 5, 0, 1);
  CHECK(traj.steps.front().state == SysState::empty(3));
  CHECK(traj.steps.front().cost == 0.0);
}

TEST_CASE("zero arrivals from empty start cost nothing") {
  const SystemConfig cfg({0, 0, 0}, {3, 2, 1}, {1, 1, 1}, 10);
  const auto traj = rollout(cfg, PolicyParams::zeros(3, Scale::Linear), 100, 20, 3);
  for (const auto& s : traj.steps) CHECK(s.cost == 0.0);
  CHECK(traj.average_cost() == 0.0);
}

TEST_CASE("rollout and the streaming path simulator agree") {
  const auto cfg = test::preset_system({9, 4.5, 3}, 20);
  Eigen::MatrixXd theta = Eigen::MatrixXd::Random(4, 3);
  const PolicyParams policy(Scale::Log, theta);
  const auto costs = path_costs(cfg, policy, 60, 30, 4, 17);
  for (int i = 0; i < 4; ++i) {
    CHECK(rollout(cfg, policy, 60, 30, derive_seed(17, i)).average_cost() == costs[i]);
  }
}
