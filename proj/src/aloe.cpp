#include "qpo/aloe.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "qpo/analysis.hpp"

namespace qpo {

void AloeConfig::validate() const {
  if (!(eps_f >= 0.0)) throw ConfigError("eps_f", "must be >= 0");
  if (!(alpha_max > 0.0)) throw ConfigError("alpha_max", "must be > 0");
  if (!(alpha0 > 0.0) || !(alpha0 < alpha_max)) {
    throw ConfigError("alpha0", "must satisfy 0 < alpha0 < alpha_max");
  }
  if (!(theta > 0.0 && theta < 1.0)) throw ConfigError("theta", "must lie in (0, 1)");
  if (!(gamma > 0.0 && gamma < 1.0)) throw ConfigError("gamma", "must lie in (0, 1)");
  if (max_iters < 1) throw ConfigError("iters", "must be >= 1");
}

bool armijo_check(double j_plus, double j_base, double alpha, double grad_sq_norm,
                  const AloeConfig& cfg) {
  return j_plus <= j_base - alpha * cfg.theta * grad_sq_norm + 2.0 * cfg.eps_f;
}

double next_step_size(double alpha, bool success, const AloeConfig& cfg) {
  return success ? std::min(cfg.alpha_max, alpha / cfg.gamma) : cfg.gamma * alpha;
}

Eigen::MatrixXd line_search_descent(const Eigen::MatrixXd& theta0, const LineSearchProblem& problem,
                                    const AloeConfig& cfg, std::vector<IterationRecord>& rows,
                                    const IterationHook& hook) {
  cfg.validate();
  Eigen::MatrixXd theta = theta0;
  double alpha = cfg.alpha0;
  double best = std::numeric_limits<double>::infinity();
  for (int k = 0; k < cfg.max_iters; ++k) {
    const Eigen::MatrixXd g = problem.gradient(theta, k);
    if (!g.allFinite()) throw AloeError(k, "non-finite gradient estimate");
    const Eigen::MatrixXd candidate = theta - alpha * g;
    if (!candidate.allFinite()) throw AloeError(k, "non-finite candidate parameters");
    const auto [j_base, j_plus] = problem.evaluate(theta, candidate, k);
    if (!std::isfinite(j_base) || !std::isfinite(j_plus)) {
      throw AloeError(k, "non-finite cost evaluation");
    }
    const double g_sq = g.squaredNorm();
    const bool success = armijo_check(j_plus, j_base, alpha, g_sq, cfg);

    IterationRecord row;
    row.iter = k;
    row.alpha = alpha;
    row.success = success;
    row.cost_eval = success ? j_plus : j_base;
    best = std::min(best, row.cost_eval);
    row.best_cost = best;
    row.grad_norm = std::sqrt(g_sq);

    if (success) theta = candidate;
    alpha = next_step_size(alpha, success, cfg);
    if (hook) hook(row, theta);
    rows.push_back(row);
  }
  return theta;
}

RunRecord run(const SystemConfig& cfg, const PolicyParams& start, Estimator estimator,
              const OracleConfig& ocfg, const AloeConfig& acfg, Seed seed,
              const RunOptions& options) {
  ocfg.validate();
  acfg.validate();
  if (start.queues() != cfg.queues()) throw std::invalid_argument("run: policy shape mismatch");

  // Streams per iteration: 0 gradient, 1 base evaluation, 2 candidate
  // evaluation, 3 diagnostics. Diagnostics never touch streams 0-2.
  LineSearchProblem problem;
  problem.gradient = [&](const Eigen::MatrixXd& theta, int k) {
    return estimate_gradient(estimator, cfg, start.with_theta(theta), ocfg,
                             derive_seed(seed, k, 0))
        .grad;
  };
  problem.evaluate = [&](const Eigen::MatrixXd& base, const Eigen::MatrixXd& candidate, int k) {
    const Seed base_seed = derive_seed(seed, k, 1);
    const Seed cand_seed = ocfg.common_random_numbers ? base_seed : derive_seed(seed, k, 2);
    return std::pair{cost_oracle(cfg, start.with_theta(base), ocfg, base_seed),
                     cost_oracle(cfg, start.with_theta(candidate), ocfg, cand_seed)};
  };

  CorrectRate last;
  bool have_rate = false;
  const IterationHook hook = [&](IterationRecord& row, const Eigen::MatrixXd& theta) {
    const bool due = options.correct_rate_every > 0 &&
                     (row.iter % options.correct_rate_every == 0 || row.iter + 1 == acfg.max_iters);
    if (due || (!have_rate && options.correct_rate_every > 0)) {
      last = correct_rate(cfg, start.with_theta(theta), options.eval_paths, ocfg.horizon,
                          ocfg.warmup, derive_seed(seed, row.iter, 3));
      have_rate = true;
    }
    row.correct_rate_sampled = last.sampled_pct;
    row.correct_rate_argmax = last.argmax_pct;
    if (options.on_row) options.on_row(row);
  };

  RunRecord record{{}, start, seed};
  record.rows.reserve(acfg.max_iters);
  record.final_policy = start.with_theta(line_search_descent(start.theta(), problem, acfg, record.rows, hook));
  return record;
}

}  // namespace qpo
