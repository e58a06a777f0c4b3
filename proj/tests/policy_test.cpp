#include <cmath>
#include <sstream>

#include "doctest.h"
#include "qpo/policy.hpp"
#include "test_util.hpp"

using namespace qpo;

namespace {

Eigen::MatrixXd random_matrix(Rng& rng, int rows, int cols, double scale) {
  Eigen::MatrixXd m(rows, cols);
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) m(r, c) = scale * (2.0 * rng.uniform() - 1.0);
  return m;
}

std::vector<int> random_state(Rng& rng, int m, int capacity) {
  std::vector<int> s(m);
  for (auto& v : s) v = static_cast<int>(rng.next_u64() % (capacity + 1));
  return s;
}

double total_variation_to(const ActionDist& d, Action target) {
  double tv = 0.0;
  for (int a = 0; a < static_cast<int>(d.probs.size()); ++a) {
    tv += std::abs(d.probs[a] - (a == target ? 1.0 : 0.0));
  }
  return tv / 2.0;
}

}  // namespace

TEST_CASE("zero parameters give the uniform policy under both scales") {
  for (Scale scale : {Scale::Linear, Scale::Log}) {
    const auto d = action_dist(PolicyParams::zeros(3, scale), std::vector<int>{4, 0, 7});
    for (double p : d.probs) CHECK(p == doctest::Approx(0.25).epsilon(1e-15));
  }
  const auto k0 = theorem_sequence(3, 100, 0.0, Scale::Linear);
  CHECK(k0.theta() == Eigen::MatrixXd::Ones(4, 3));
  for (double p : action_dist(k0, std::vector<int>{1, 2, 3}).probs) CHECK(p == doctest::Approx(0.25));
}

TEST_CASE("softmax outputs are a strictly positive distribution") {
  Rng rng(1);
  for (int trial = 0; trial < 1000; ++trial) {
    const int m = 1 + static_cast<int>(rng.next_u64() % 4);
    const Scale scale = trial % 2 ? Scale::Log : Scale::Linear;
    const PolicyParams policy(scale, random_matrix(rng, m + 1, m, 2.0));
    const auto d = action_dist(policy, random_state(rng, m, 10));
    double total = 0.0;
    for (double p : d.probs) {
      CHECK(p > 0.0);
      CHECK(p <= 1.0);
      total += p;
    }
    CHECK(std::abs(total - 1.0) <= 1e-12);
  }
}

TEST_CASE("large scores do not overflow") {
  const auto policy = theorem_sequence(3, 100, 1e6, Scale::Linear);
  const auto d = action_dist(policy, std::vector<int>{100, 100, 100});
  CHECK(d.probs[0] == 1.0);
  for (double p : d.probs) CHECK(std::isfinite(p));
}

TEST_CASE("shift by a constant leaves the policy unchanged") {
  Rng rng(2);
  double worst = 0.0;
  for (int trial = 0; trial < 1000; ++trial) {
    const int m = 1 + static_cast<int>(rng.next_u64() % 4);
    const Eigen::MatrixXd theta = random_matrix(rng, m + 1, m, 3.0);
    const double mu = 10.0 * (2.0 * rng.uniform() - 1.0);
    const auto s = random_state(rng, m, 20);
    const auto base = action_dist(PolicyParams(Scale::Linear, theta), s);
    const auto shifted = action_dist(PolicyParams(Scale::Linear, shift_matrix(theta, mu)), s);
    for (int a = 0; a <= m; ++a) worst = std::max(worst, std::abs(base.probs[a] - shifted.probs[a]));
  }
  CHECK(worst < 1e-10);
}

TEST_CASE("positive equivalent matrix") {
  Rng rng(3);
  const Eigen::MatrixXd theta = random_matrix(rng, 4, 3, 5.0);
  const Eigen::MatrixXd pos = positive_equivalent(theta);
  CHECK(pos.minCoeff() > 0.0);
  CHECK(pos.minCoeff() == doctest::Approx(1.0));
  CHECK(shift_matrix(theta, 0.0) == theta);
  const std::vector<int> s{3, 1, 4};
  const auto a = action_dist(PolicyParams(Scale::Linear, theta), s);
  const auto b = action_dist(PolicyParams(Scale::Log, pos.array().log().matrix()), s);
  for (int k = 0; k < 4; ++k) CHECK(a.probs[k] == doctest::Approx(b.probs[k]).epsilon(1e-12));
}

TEST_CASE("log and linear scales agree through the effective matrix") {
  Rng rng(4);
  for (int trial = 0; trial < 100; ++trial) {
    const Eigen::MatrixXd b = random_matrix(rng, 4, 3, 1.5);
    const PolicyParams log_policy(Scale::Log, b);
    const PolicyParams lin_policy(Scale::Linear, b.array().exp().matrix());
    const auto s = random_state(rng, 3, 15);
    CHECK(action_dist(log_policy, s).probs == action_dist(lin_policy, s).probs);
  }
}

TEST_CASE("theorem sequence on m=2, Q=1 converges to serving queue 1") {
  const std::vector<int> s{1, 1};
  double previous = 0.0;
  for (double k : {0.0, 0.5, 1.0, 2.0, 5.0, 20.0}) {
    const auto d = action_dist(theorem_sequence(2, 1, k, Scale::Linear), s);
    CHECK(d.probs[0] >= previous);
    previous = d.probs[0];
  }
  CHECK(previous > 1.0 - 1e-12);
}

TEST_CASE("theorem sequence layout and log form") {
  const auto a = theorem_sequence(3, 100, 2.0, Scale::Linear);
  CHECK(a.theta()(0, 0) == 101.0 * 101.0 * 101.0 * 2.0 + 1.0);
  CHECK(a.theta()(1, 1) == 101.0 * 101.0 * 2.0 + 1.0);
  CHECK(a.theta()(2, 2) == 101.0 * 2.0 + 1.0);
  CHECK(a.theta()(3, 0) == 1.0);
  CHECK(a.theta()(0, 2) == 1.0);
  for (double k : {0.0, 1.0, 37.0, 1e6}) {
    const auto lin = theorem_sequence(3, 100, k, Scale::Linear);
    const auto log = theorem_sequence(3, 100, k, Scale::Log);
    CHECK(log.scale() == Scale::Log);
    CHECK(log.effective().isApprox(lin.theta(), 1e-14));
  }
  CHECK_THROWS(theorem_sequence(3, 100, -1.0, Scale::Linear));
}

TEST_CASE("theorem sequence at k=1e6 picks the c-mu action on random states") {
  const auto cfg = test::preset_system({18, 9, 6}, 100);
  const auto policy = theorem_sequence(3, 100, 1e6, Scale::Log);
  Rng rng(5);
  int checked = 0;
  while (checked < 200) {
    const auto s = random_state(rng, 3, 100);
    if (s == std::vector<int>{0, 0, 0}) continue;
    const auto d = action_dist(policy, s);
    const auto top = std::max_element(d.probs.begin(), d.probs.end()) - d.probs.begin();
    CHECK(top == priority_action(cfg, s));
    ++checked;
  }
}

TEST_CASE("distance to the priority action is non-increasing in k") {
  const auto cfg = test::preset_system({18, 9, 6}, 100);
  Rng rng(6);
  const std::vector<double> ks{0, 1e-6, 1e-5, 1e-4, 1e-3, 1e-2, 1e-1, 1, 10, 1e2, 1e3, 1e4, 1e5, 1e6};
  for (int trial = 0; trial < 100; ++trial) {
    const auto s = random_state(rng, 3, 100);
    const Action target = priority_action(cfg, s);
    double previous = 1.0;
    for (double k : ks) {
      const double tv = total_variation_to(action_dist(theorem_sequence(3, 100, k, Scale::Linear), s), target);
      CHECK(tv <= previous + 1e-15);
      previous = tv;
    }
  }
}

TEST_CASE("priority action follows the c-mu index") {
  const SystemConfig low({1, 1, 1}, {18, 9, 6}, {1, 1, 1}, 100);
  CHECK(priority_action(low, std::vector<int>{2, 0, 1}) == 0);
  const SystemConfig mixed({1, 1, 1}, {3, 2, 1}, {1, 2, 1}, 100);
  CHECK(priority_action(mixed, std::vector<int>{0, 1, 1}) == 1);
  CHECK(priority_action(low, std::vector<int>{0, 0, 0}) == idle_action(3));
  const SystemConfig tied({1, 1}, {2, 2}, {1, 1}, 10);
  CHECK(priority_action(tied, std::vector<int>{3, 3}) == 0);
}

TEST_CASE("sampling") {
  SUBCASE("near-deterministic policy always picks the dominant action") {
    Eigen::MatrixXd theta = Eigen::MatrixXd::Zero(4, 3);
    theta(2, 0) = theta(2, 1) = theta(2, 2) = 1e6;
    const PolicyParams policy(Scale::Linear, theta);
    Rng rng(7);
    for (int n = 0; n < 1000; ++n) CHECK(sample_action(policy, std::vector<int>{1, 1, 1}, rng) == 2);
  }
  SUBCASE("uniform frequencies") {
    const auto policy = PolicyParams::zeros(3, Scale::Linear);
    constexpr int kDraws = 100000;
    std::array<int, 4> counts{};
    Rng rng(8);
    for (int n = 0; n < kDraws; ++n) ++counts[sample_action(policy, std::vector<int>{2, 2, 2}, rng)];
    const double se = std::sqrt(0.25 * 0.75 / kDraws);
    for (int c : counts) CHECK(std::abs(c / double(kDraws) - 0.25) <= 3.0 * se);
  }
  SUBCASE("fixed rng state repeats the draw") {
    const PolicyParams policy(Scale::Log, Eigen::MatrixXd::Random(4, 3));
    for (Seed seed = 0; seed < 50; ++seed) {
      Rng a(seed), b(seed);
      CHECK(sample_action(policy, std::vector<int>{1, 3, 2}, a) ==
            sample_action(policy, std::vector<int>{1, 3, 2}, b));
    }
  }
  SUBCASE("draw_index skips zero-mass tail under rounding") {
    const std::vector<double> probs{0.3, 0.3, 0.0};
    CHECK(draw_index(probs, 0.9) == 1);
    CHECK(draw_index(probs, 0.1) == 0);
  }
}

TEST_CASE("grad_log_pi") {
  SUBCASE("zero state gives zero gradient") {
    const PolicyParams policy(Scale::Linear, Eigen::MatrixXd::Random(4, 3));
    CHECK(grad_log_pi(policy, std::vector<int>{0, 0, 0}, 2).isZero(0.0));
  }
  SUBCASE("matches central differences of log pi") {
    Rng rng(9);
    constexpr double h = 1e-6;
    for (int trial = 0; trial < 200; ++trial) {
      const int m = 1 + static_cast<int>(rng.next_u64() % 3);
      const Scale scale = trial % 2 ? Scale::Log : Scale::Linear;
      const Eigen::MatrixXd theta = random_matrix(rng, m + 1, m, scale == Scale::Log ? 0.7 : 1.0);
      const auto s = random_state(rng, m, 4);
      const Action a = static_cast<Action>(rng.next_u64() % (m + 1));
      const auto analytic = grad_log_pi(PolicyParams(scale, theta), s, a);
      for (int r = 0; r <= m; ++r) {
        for (int c = 0; c < m; ++c) {
          Eigen::MatrixXd plus = theta, minus = theta;
          plus(r, c) += h;
          minus(r, c) -= h;
          const double numeric = (std::log(action_dist(PolicyParams(scale, plus), s).probs[a]) -
                                  std::log(action_dist(PolicyParams(scale, minus), s).probs[a])) /
                                 (2.0 * h);
          CHECK(std::abs(numeric - analytic(r, c)) <= 1e-5);
        }
      }
    }
  }
  SUBCASE("score has zero mean under the policy") {
    Rng rng(10);
    for (int trial = 0; trial < 100; ++trial) {
      const Scale scale = trial % 2 ? Scale::Log : Scale::Linear;
      const PolicyParams policy(scale, random_matrix(rng, 4, 3, 1.0));
      const auto s = random_state(rng, 3, 6);
      const auto d = action_dist(policy, s);
      Eigen::MatrixXd expectation = Eigen::MatrixXd::Zero(4, 3);
      for (Action a = 0; a < 4; ++a) expectation += d.probs[a] * grad_log_pi(policy, s, a);
      CHECK(expectation.cwiseAbs().maxCoeff() < 1e-12);
    }
  }
}

TEST_CASE("policy checkpoint round-trips exactly") {
  Rng rng(12);
  for (Scale scale : {Scale::Linear, Scale::Log}) {
    const PolicyParams policy(scale, random_matrix(rng, 4, 3, 1e3));
    std::stringstream buffer;
    write_policy(buffer, policy);
    CHECK(read_policy(buffer) == policy);
  }
  std::istringstream missing("1 2\n3 4\n5 6\n");
  CHECK_THROWS(read_policy(missing));
  std::istringstream ragged("scale = linear\n1 2\n3\n5 6\n");
  CHECK_THROWS(read_policy(ragged));
  std::istringstream bad_shape("scale = log\n1 2\n3 4\n");
  CHECK_THROWS(read_policy(bad_shape));
}
