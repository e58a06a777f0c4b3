#include "qpo/gradients.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "qpo/parallel.hpp"

namespace qpo {

void OracleConfig::validate() const {
  if (n_paths < 1) throw ConfigError("n_paths", "must be >= 1");
  if (horizon < 1) throw ConfigError("horizon", "must be >= 1");
  if (warmup < 0) throw ConfigError("warmup", "must be >= 0");
  if (!(fd_step > 0.0) || !std::isfinite(fd_step)) throw ConfigError("fd_step", "must be > 0");
  if (pg_paths && *pg_paths < 2) throw ConfigError("pg_paths", "must be >= 2");
}

std::string_view to_string(Estimator estimator) { return estimator == Estimator::FD ? "fd" : "pg"; }

Estimator parse_estimator(std::string_view text) {
  if (text == "fd") return Estimator::FD;
  if (text == "pg") return Estimator::PG;
  throw ConfigError("estimator", "expected fd or pg, got '" + std::string(text) + "'");
}

std::vector<double> path_costs(const SystemConfig& cfg, const PolicyParams& policy, int horizon,
                               int warmup, int n, Seed seed) {
  std::vector<double> costs(n, 0.0);
  parallel_for(static_cast<std::size_t>(n), [&](std::size_t i) {
    SoftmaxSampler sampler(policy);
    double total = 0.0;
    simulate_path(
        cfg, [&](std::span<const int> jobs, Rng& rng) { return sampler(jobs, rng); }, horizon,
        warmup, derive_seed(seed, i), [&](std::span<const int>, Action, double c) { total += c; });
    costs[i] = total / horizon;
  });
  return costs;
}

double cost_oracle(const SystemConfig& cfg, const PolicyParams& policy, const OracleConfig& ocfg,
                   Seed seed) {
  ocfg.validate();
  const auto costs = path_costs(cfg, policy, ocfg.horizon, ocfg.warmup, ocfg.n_paths, seed);
  return tree_sum(costs, 0.0) / static_cast<double>(costs.size());
}

Eigen::MatrixXd forward_difference(const Eigen::MatrixXd& theta, double u, const Functional& f) {
  if (!(u > 0.0)) throw std::invalid_argument("forward_difference: step must be > 0");
  const double base = f(theta);
  Eigen::MatrixXd grad(theta.rows(), theta.cols());
  Eigen::MatrixXd probe = theta;
  for (Eigen::Index r = 0; r < theta.rows(); ++r) {
    for (Eigen::Index c = 0; c < theta.cols(); ++c) {
      probe(r, c) = theta(r, c) + u;
      grad(r, c) = (f(probe) - base) / u;
      probe(r, c) = theta(r, c);
    }
  }
  return grad;
}

GradEstimate fd_gradient(const SystemConfig& cfg, const PolicyParams& policy,
                         const OracleConfig& ocfg, Seed seed) {
  ocfg.validate();
  std::uint64_t evaluation = 0;
  const Functional oracle = [&](const Eigen::MatrixXd& theta) {
    const Seed s = ocfg.common_random_numbers ? seed : derive_seed(seed, evaluation);
    ++evaluation;
    return cost_oracle(cfg, policy.with_theta(theta), ocfg, s);
  };
  GradEstimate est;
  est.grad = forward_difference(policy.theta(), ocfg.fd_step, oracle);
  est.paths_used = gradient_paths(Estimator::FD, cfg.queues(), ocfg);
  est.estimator = Estimator::FD;
  return est;
}

std::vector<ScoreSample> score_samples(const SystemConfig& cfg, const PolicyParams& policy,
                                       int horizon, int warmup, int n, Seed seed,
                                       bool average_score) {
  const int m = cfg.queues();
  const Eigen::MatrixXd chain =
      policy.scale() == Scale::Log ? policy.effective() : Eigen::MatrixXd::Ones(m + 1, m);
  std::vector<ScoreSample> samples(n);
  parallel_for(static_cast<std::size_t>(n), [&](std::size_t i) {
    SoftmaxSampler sampler(policy);
    Eigen::MatrixXd score = Eigen::MatrixXd::Zero(m + 1, m);
    double total = 0.0;
    simulate_path(
        cfg, [&](std::span<const int> jobs, Rng& rng) { return sampler(jobs, rng); }, horizon,
        warmup, derive_seed(seed, i),
        [&](std::span<const int> jobs, Action a, double c) {
          total += c;
          // The sampler still holds pi(. | jobs) from the draw of `a`.
          const auto& probs = sampler.last_probabilities();
          for (int j = 0; j < m; ++j) {
            const int s = jobs[j];
            if (s == 0) continue;
            for (int r = 0; r <= m; ++r) score(r, j) -= probs[r] * s;
            score(a, j) += s;
          }
        });
    if (policy.scale() == Scale::Log) score.array() *= chain.array();
    if (average_score) score /= horizon;
    samples[i] = {std::move(score), total / horizon};
  });
  return samples;
}

Eigen::MatrixXd elementwise_baseline(const std::vector<ScoreSample>& samples) {
  if (samples.empty()) throw std::invalid_argument("elementwise_baseline: no samples");
  const auto rows = samples.front().score.rows();
  const auto cols = samples.front().score.cols();
  std::vector<Eigen::MatrixXd> weighted(samples.size());
  std::vector<Eigen::MatrixXd> squares(samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) {
    squares[i] = samples[i].score.array().square().matrix();
    weighted[i] = squares[i] * samples[i].cost;
  }
  const Eigen::MatrixXd zero = Eigen::MatrixXd::Zero(rows, cols);
  const Eigen::MatrixXd num = tree_sum(weighted, zero);
  const Eigen::MatrixXd den = tree_sum(squares, zero);
  Eigen::MatrixXd b = Eigen::MatrixXd::Zero(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (Eigen::Index c = 0; c < cols; ++c) {
      if (den(r, c) > 0.0) b(r, c) = num(r, c) / den(r, c);
    }
  }
  return b;
}

std::vector<Eigen::MatrixXd> baseline_terms(const std::vector<ScoreSample>& samples,
                                            const Eigen::MatrixXd& baseline) {
  std::vector<Eigen::MatrixXd> terms(samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) {
    terms[i] = (samples[i].score.array() * (samples[i].cost - baseline.array())).matrix();
  }
  return terms;
}

GradEstimate pg_gradient(const SystemConfig& cfg, const PolicyParams& policy,
                         const OracleConfig& ocfg, Seed seed) {
  ocfg.validate();
  const int n = ocfg.resolved_pg_paths(cfg.queues());
  if (n < 2) throw ConfigError("pg_paths", "must be >= 2");
  const auto samples =
      score_samples(cfg, policy, ocfg.horizon, ocfg.warmup, n, seed, ocfg.average_score);
  const auto terms = baseline_terms(samples, elementwise_baseline(samples));
  const Eigen::MatrixXd zero = Eigen::MatrixXd::Zero(policy.actions(), policy.queues());
  GradEstimate est;
  est.grad = tree_sum(terms, zero) / static_cast<double>(n);
  est.paths_used = n;
  est.estimator = Estimator::PG;
  return est;
}

GradEstimate estimate_gradient(Estimator estimator, const SystemConfig& cfg,
                               const PolicyParams& policy, const OracleConfig& ocfg, Seed seed) {
  return estimator == Estimator::FD ? fd_gradient(cfg, policy, ocfg, seed)
                                    : pg_gradient(cfg, policy, ocfg, seed);
}

long gradient_paths(Estimator estimator, int queues, const OracleConfig& ocfg) {
  if (estimator == Estimator::PG) return ocfg.resolved_pg_paths(queues);
  const long directions = static_cast<long>(queues) * (queues + 1);
  return (directions + 1) * ocfg.n_paths;
}

Eigen::VectorXd flatten(const Eigen::MatrixXd& matrix) {
  Eigen::VectorXd out(matrix.size());
  Eigen::Index k = 0;
  for (Eigen::Index r = 0; r < matrix.rows(); ++r) {
    for (Eigen::Index c = 0; c < matrix.cols(); ++c) out(k++) = matrix(r, c);
  }
  return out;
}

Eigen::MatrixXd sample_covariance(const std::vector<Eigen::VectorXd>& samples) {
  if (samples.size() < 2) throw std::invalid_argument("sample_covariance: need >= 2 samples");
  const auto d = samples.front().size();
  Eigen::VectorXd mean = Eigen::VectorXd::Zero(d);
  for (const auto& s : samples) mean += s;
  mean /= static_cast<double>(samples.size());
  Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(d, d);
  for (const auto& s : samples) {
    const Eigen::VectorXd dev = s - mean;
    cov.noalias() += dev * dev.transpose();
  }
  return cov / static_cast<double>(samples.size() - 1);
}

EstimatorCovariance estimator_covariance(const SystemConfig& cfg, const PolicyParams& policy,
                                         const OracleConfig& ocfg, int reps, Seed seed) {
  if (reps < 2) throw std::invalid_argument("estimator_covariance: reps must be >= 2");
  std::vector<Eigen::VectorXd> fd(reps);
  std::vector<Eigen::VectorXd> pg(reps);
  for (int r = 0; r < reps; ++r) {
    fd[r] = flatten(fd_gradient(cfg, policy, ocfg, derive_seed(seed, r, 0)).grad);
    pg[r] = flatten(pg_gradient(cfg, policy, ocfg, derive_seed(seed, r, 1)).grad);
  }
  EstimatorCovariance out;
  out.fd = sample_covariance(fd);
  out.pg = sample_covariance(pg);
  out.fd_paths_per_rep = gradient_paths(Estimator::FD, cfg.queues(), ocfg);
  out.pg_paths_per_rep = gradient_paths(Estimator::PG, cfg.queues(), ocfg);
  return out;
}

}  // namespace qpo
