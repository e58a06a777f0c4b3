#pragma once

#include <functional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "qpo/gradients.hpp"
#include "qpo/policy.hpp"
#include "qpo/queue_env.hpp"

namespace qpo {

/// Adaptive line search with oracle estimates. Defaults are the tuned values
/// used for the queueing experiments.
struct AloeConfig {
  double eps_f = 0.01;
  double alpha_max = 2.0;
  double alpha0 = 0.01;
  double theta = 0.01;  ///< sufficient-decrease constant
  double gamma = 0.5;
  int max_iters = 2000;

  void validate() const;
};

/// J+ <= J - alpha theta |g|^2 + 2 eps_f.
bool armijo_check(double j_plus, double j_base, double alpha, double grad_sq_norm,
                  const AloeConfig& cfg);

/// min(alpha_max, alpha / gamma) after a success, gamma * alpha otherwise.
double next_step_size(double alpha, bool success, const AloeConfig& cfg);

struct IterationRecord {
  int iter = 0;
  double alpha = 0.0;       ///< step size tried at this iteration
  bool success = false;
  double cost_eval = 0.0;   ///< zeroth-order value of the iterate kept
  double best_cost = 0.0;   ///< running minimum of cost_eval
  double correct_rate_sampled = 0.0;
  double correct_rate_argmax = 0.0;
  double grad_norm = 0.0;

  bool operator==(const IterationRecord&) const = default;
};

struct RunRecord {
  std::vector<IterationRecord> rows;
  PolicyParams final_policy;
  Seed seed = 0;
};

/// Thrown when a gradient or cost evaluation is not finite.
class AloeError : public std::runtime_error {
 public:
  AloeError(int iteration, const std::string& what)
      : std::runtime_error("iteration " + std::to_string(iteration) + ": " + what),
        iteration_(iteration) {}
  int iteration() const noexcept { return iteration_; }

 private:
  int iteration_;
};

/// Oracles for the generic loop. `gradient(theta, k)` returns g_k;
/// `evaluate(base, candidate, k)` returns fresh (J(base), J(candidate)).
struct LineSearchProblem {
  std::function<Eigen::MatrixXd(const Eigen::MatrixXd&, int)> gradient;
  std::function<std::pair<double, double>(const Eigen::MatrixXd&, const Eigen::MatrixXd&, int)>
      evaluate;
};

/// Called after each iteration with the row (diagnostic fields may be
/// filled in by the callee) and the parameters kept.
using IterationHook = std::function<void(IterationRecord&, const Eigen::MatrixXd&)>;

/// Runs cfg.max_iters iterations from theta0 and returns the final
/// parameters; rows are appended to `rows`.
Eigen::MatrixXd line_search_descent(const Eigen::MatrixXd& theta0, const LineSearchProblem& problem,
                                    const AloeConfig& cfg, std::vector<IterationRecord>& rows,
                                    const IterationHook& hook = {});

struct RunOptions {
  int correct_rate_every = 10;  ///< evaluation cadence in iterations (0 disables)
  int eval_paths = 20;          ///< paths per correct-rate evaluation
  /// Streams each finished row (e.g. to a CSV file).
  std::function<void(const IterationRecord&)> on_row;
};

/// ALOE on the queueing objective with the chosen gradient estimator.
RunRecord run(const SystemConfig& cfg, const PolicyParams& start, Estimator estimator,
              const OracleConfig& ocfg, const AloeConfig& acfg, Seed seed,
              const RunOptions& options = {});

}  // namespace qpo
