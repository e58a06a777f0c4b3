#pragma once

#include <functional>
#include <optional>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "qpo/policy.hpp"
#include "qpo/queue_env.hpp"
#include "qpo/random.hpp"

namespace qpo {

/// Sample sizes and simulation settings shared by the zeroth- and first-order
/// oracles.
struct OracleConfig {
  int n_paths = 20;       ///< paths per zeroth-order evaluation (n)
  int horizon = 100;      ///< recorded steps per path (T)
  int warmup = 1000;      ///< burn-in steps per path
  double fd_step = 0.1;   ///< forward-difference step u
  std::optional<int> pg_paths;  ///< REINFORCE paths N; defaults to (m(m+1)+1) n
  /// Reuse the same path seeds for the base and every perturbed evaluation,
  /// and for the two line-search evaluations.
  bool common_random_numbers = true;
  /// Divide the per-path score by T (literal 1/T-averaged score). Off by
  /// default: the summed score keeps the estimator unbiased for the gradient
  /// of the expected path cost.
  bool average_score = false;

  /// Number of REINFORCE paths for an m-queue system.
  int resolved_pg_paths(int queues) const {
    return pg_paths.value_or((queues * (queues + 1) + 1) * n_paths);
  }
  void validate() const;
};

enum class Estimator { FD, PG };

std::string_view to_string(Estimator estimator);
Estimator parse_estimator(std::string_view text);

struct GradEstimate {
  Eigen::MatrixXd grad;
  long paths_used = 0;
  Estimator estimator = Estimator::FD;
};

/// Path costs C(tau_i) for `n` rollouts with sub-seeds derive_seed(seed, i).
std::vector<double> path_costs(const SystemConfig& cfg, const PolicyParams& policy, int horizon,
                               int warmup, int n, Seed seed);

/// Zeroth-order oracle: mean of n_paths path costs.
double cost_oracle(const SystemConfig& cfg, const PolicyParams& policy, const OracleConfig& ocfg,
                   Seed seed);

/// Value of a scalar functional at a parameter matrix.
using Functional = std::function<double(const Eigen::MatrixXd& theta)>;

/// Forward differences along every canonical direction of theta, sharing one
/// base evaluation: g_j = (f(theta + u e_j) - f(theta)) / u. Evaluates
/// f exactly rows*cols + 1 times.
Eigen::MatrixXd forward_difference(const Eigen::MatrixXd& theta, double u, const Functional& f);

/// Finite-difference gradient of the zeroth-order oracle.
GradEstimate fd_gradient(const SystemConfig& cfg, const PolicyParams& policy,
                         const OracleConfig& ocfg, Seed seed);

/// Per-path REINFORCE statistics: the path score (sum, or mean when
/// `average_score`, of grad log pi over recorded steps) and the path cost.
struct ScoreSample {
  Eigen::MatrixXd score;
  double cost = 0.0;
};

std::vector<ScoreSample> score_samples(const SystemConfig& cfg, const PolicyParams& policy,
                                       int horizon, int warmup, int n, Seed seed,
                                       bool average_score);

/// Element-wise variance-minimizing baseline mean(G^2 C) / mean(G^2); zero
/// where mean(G^2) vanishes.
Eigen::MatrixXd elementwise_baseline(const std::vector<ScoreSample>& samples);

/// Per-path terms G_i * (C_i - b).
std::vector<Eigen::MatrixXd> baseline_terms(const std::vector<ScoreSample>& samples,
                                            const Eigen::MatrixXd& baseline);

/// REINFORCE gradient of expected cost with the element-wise baseline.
GradEstimate pg_gradient(const SystemConfig& cfg, const PolicyParams& policy,
                         const OracleConfig& ocfg, Seed seed);

GradEstimate estimate_gradient(Estimator estimator, const SystemConfig& cfg,
                               const PolicyParams& policy, const OracleConfig& ocfg, Seed seed);

/// Rollouts consumed by one gradient estimate.
long gradient_paths(Estimator estimator, int queues, const OracleConfig& ocfg);

/// Flattens row-major (actions outer, queues inner).
Eigen::VectorXd flatten(const Eigen::MatrixXd& matrix);

/// Unbiased sample covariance of a set of vectors (rows of the result are
/// dimensions).
Eigen::MatrixXd sample_covariance(const std::vector<Eigen::VectorXd>& samples);

struct EstimatorCovariance {
  Eigen::MatrixXd fd;
  Eigen::MatrixXd pg;
  long fd_paths_per_rep = 0;
  long pg_paths_per_rep = 0;
};

/// Covariance of the flattened FD and PG estimates over `reps` independent
/// evaluations at one policy.
EstimatorCovariance estimator_covariance(const SystemConfig& cfg, const PolicyParams& policy,
                                         const OracleConfig& ocfg, int reps, Seed seed);

}  // namespace qpo
