#include <cmath>
#include <limits>

#include "doctest.h"
#include "qpo/aloe.hpp"
#include "test_util.hpp"

using namespace qpo;

TEST_CASE("sufficient decrease test") {
  AloeConfig cfg;
  cfg.eps_f = 0.0;
  cfg.theta = 0.01;
  // 0.125 <= 0.5 - 0.5 * 0.01 * 1 = 0.495
  CHECK(armijo_check(0.125, 0.5, 0.5, 1.0, cfg));
  CHECK_FALSE(armijo_check(0.5, 0.5, 0.5, 1.0, cfg));
  CHECK(armijo_check(0.495, 0.5, 0.5, 1.0, cfg));
  cfg.eps_f = 0.01;
  // Noise slack 2 eps_f admits a small increase.
  CHECK(armijo_check(0.51, 0.5, 0.5, 1.0, cfg));
  CHECK_FALSE(armijo_check(0.52, 0.5, 0.5, 1.0, cfg));
}

TEST_CASE("step size update") {
  AloeConfig cfg;
  double alpha = 0.01;
  for (int i = 0; i < 3; ++i) alpha = next_step_size(alpha, false, cfg);
  CHECK(alpha == doctest::Approx(0.00125).epsilon(1e-12));
  alpha = 1.5;
  alpha = next_step_size(alpha, true, cfg);
  CHECK(alpha == cfg.alpha_max);
  CHECK(next_step_size(0.25, true, cfg) == doctest::Approx(0.5));
}

TEST_CASE("config validation names the field") {
  AloeConfig cfg;
  cfg.gamma = 1.0;
  try {
    cfg.validate();
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(e.field() == "gamma");
  }
  cfg = AloeConfig{};
  cfg.alpha0 = 3.0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = AloeConfig{};
  cfg.eps_f = -1.0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
}

namespace {

LineSearchProblem quadratic(const Eigen::MatrixXd& target) {
  LineSearchProblem p;
  p.gradient = [target](const Eigen::MatrixXd& theta, int) -> Eigen::MatrixXd { return theta - target; };
  p.evaluate = [target](const Eigen::MatrixXd& base, const Eigen::MatrixXd& cand, int) {
    return std::pair{0.5 * (base - target).squaredNorm(), 0.5 * (cand - target).squaredNorm()};
  };
  return p;
}

}  // namespace

TEST_CASE("exact oracles converge on a quadratic") {
  Eigen::MatrixXd target(2, 2);
  target << 1, -1, 0.5, 2;
  Eigen::MatrixXd theta0 = target;
  theta0(0, 0) += 0.6;
  theta0(1, 1) -= 0.8;  // distance 1
  AloeConfig cfg;
  cfg.eps_f = 0.0;
  cfg.max_iters = 200;
  std::vector<IterationRecord> rows;
  const auto theta = line_search_descent(theta0, quadratic(target), cfg, rows);
  REQUIRE(rows.size() == 200);
  CHECK(0.5 * (theta - target).squaredNorm() <= 1e-6);
  int reached = -1;
  for (std::size_t k = 0; k < rows.size(); ++k) {
    if (rows[k].best_cost <= 1e-6 && reached < 0) reached = static_cast<int>(k);
    CHECK(rows[k].alpha <= cfg.alpha_max);
    if (k > 0) CHECK(rows[k].best_cost <= rows[k - 1].best_cost);
  }
  CHECK(reached >= 0);
  CHECK(reached < 200);
}

TEST_CASE("accepted steps satisfy sufficient decrease") {
  Eigen::MatrixXd target = Eigen::MatrixXd::Constant(3, 2, 0.25);
  AloeConfig cfg;
  cfg.eps_f = 0.0;
  cfg.max_iters = 60;
  cfg.alpha_max = 4.0;  // large enough that some trials overshoot
  std::vector<IterationRecord> rows;
  const auto problem = quadratic(target);
  Eigen::MatrixXd theta = Eigen::MatrixXd::Zero(3, 2);
  int failures = 0;
  line_search_descent(theta, problem, cfg, rows, [&](IterationRecord& row, const Eigen::MatrixXd& kept) {
    const double before = 0.5 * (theta - target).squaredNorm();
    const double after = 0.5 * (kept - target).squaredNorm();
    const double g2 = (theta - target).squaredNorm();
    if (row.success) {
      CHECK(after <= before - row.alpha * cfg.theta * g2 + 1e-15);
    } else {
      ++failures;
      CHECK(kept == theta);
    }
    CHECK(row.grad_norm == doctest::Approx(std::sqrt(g2)));
    theta = kept;
  });
  CHECK(failures > 0);
  for (std::size_t k = 1; k < rows.size(); ++k) {
    const double expected = next_step_size(rows[k - 1].alpha, rows[k - 1].success, cfg);
    CHECK(rows[k].alpha == doctest::Approx(expected).epsilon(1e-15));
  }
}

TEST_CASE("non-finite oracle output raises with the iteration") {
  LineSearchProblem p;
  p.gradient = [](const Eigen::MatrixXd& theta, int k) -> Eigen::MatrixXd {
    if (k == 3) return Eigen::MatrixXd::Constant(theta.rows(), theta.cols(), std::nan(""));
    return theta;
  };
  p.evaluate = [](const Eigen::MatrixXd& a, const Eigen::MatrixXd& b, int) {
    return std::pair{a.squaredNorm(), b.squaredNorm()};
  };
  AloeConfig cfg;
  cfg.max_iters = 10;
  std::vector<IterationRecord> rows;
  try {
    line_search_descent(Eigen::MatrixXd::Ones(2, 1), p, cfg, rows);
    FAIL("expected AloeError");
  } catch (const AloeError& e) {
    CHECK(e.iteration() == 3);
  }
  CHECK(rows.size() == 3);
}

TEST_CASE("queueing runs are reproducible and diagnostics do not perturb them") {
  const auto cfg = test::preset_system({3, 2, 1}, 10);
  OracleConfig o;
  o.n_paths = 3;
  o.horizon = 20;
  o.warmup = 20;
  AloeConfig a;
  a.max_iters = 15;
  for (Estimator e : {Estimator::FD, Estimator::PG}) {
    const auto start = PolicyParams::zeros(3, Scale::Log);
    RunOptions quiet;
    quiet.correct_rate_every = 0;
    RunOptions noisy;
    noisy.correct_rate_every = 1;
    noisy.eval_paths = 4;
    const auto r1 = run(cfg, start, e, o, a, 42, quiet);
    const auto r2 = run(cfg, start, e, o, a, 42, quiet);
    const auto r3 = run(cfg, start, e, o, a, 42, noisy);
    CHECK(r1.rows == r2.rows);
    CHECK(r1.final_policy == r3.final_policy);
    REQUIRE(r1.rows.size() == 15);
    for (std::size_t k = 0; k < r1.rows.size(); ++k) {
      CHECK(r1.rows[k].cost_eval == r3.rows[k].cost_eval);
      CHECK(r1.rows[k].alpha <= a.alpha_max);
      if (k > 0) CHECK(r1.rows[k].best_cost <= r1.rows[k - 1].best_cost);
    }
    CHECK(r3.rows.back().correct_rate_sampled > 0.0);
  }
}

TEST_CASE("rows are streamed as they finish") {
  const auto cfg = test::preset_system({3, 2, 1}, 10);
  OracleConfig o;
  o.n_paths = 2;
  o.horizon = 10;
  o.warmup = 5;
  AloeConfig a;
  a.max_iters = 5;
  RunOptions opts;
  std::vector<int> seen;
  opts.on_row = [&](const IterationRecord& r) { seen.push_back(r.iter); };
  run(cfg, PolicyParams::zeros(3, Scale::Linear), Estimator::PG, o, a, 1, opts);
  CHECK(seen == std::vector<int>{0, 1, 2, 3, 4});
}
