#pragma once

#include <iosfwd>
#include <span>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "qpo/queue_env.hpp"
#include "qpo/random.hpp"

namespace qpo {

enum class Scale { Linear, Log };

std::string_view to_string(Scale scale);
Scale parse_scale(std::string_view text);

/// Softmax policy parameters: an (m+1) x m matrix, rows are actions (queues
/// then idle) and columns are queues. Under Log scale the effective matrix is
/// exp(theta) element-wise.
class PolicyParams {
 public:
  PolicyParams(Scale scale, Eigen::MatrixXd theta);

  /// theta = 0. Uniform under both scales.
  static PolicyParams zeros(int queues, Scale scale);

  Scale scale() const { return scale_; }
  int queues() const { return static_cast<int>(theta_.cols()); }
  int actions() const { return static_cast<int>(theta_.rows()); }
  const Eigen::MatrixXd& theta() const { return theta_; }

  /// Same scale, new parameters (shape must match).
  PolicyParams with_theta(Eigen::MatrixXd theta) const { return {scale_, std::move(theta)}; }

  /// Matrix A applied to the state: theta or exp(theta).
  Eigen::MatrixXd effective() const;

  bool operator==(const PolicyParams& other) const {
    return scale_ == other.scale_ && theta_ == other.theta_;
  }

 private:
  Scale scale_;
  Eigen::MatrixXd theta_;
};

struct ActionDist {
  std::vector<double> probs;
};

/// softmax(A s) with max-subtraction.
ActionDist action_dist(const PolicyParams& policy, std::span<const int> jobs);

Action sample_action(const PolicyParams& policy, std::span<const int> jobs, Rng& rng);

/// Gradient of log pi(a | s) with respect to theta. Linear: (e_a - pi) s^T.
/// Log: the linear gradient times exp(theta) element-wise.
Eigen::MatrixXd grad_log_pi(const PolicyParams& policy, std::span<const int> jobs, Action action);

/// c-mu rule: the non-empty queue with the largest c_i mu_i, lowest index on
/// ties, idle when the system is empty.
Action priority_action(const SystemConfig& cfg, std::span<const int> jobs);

/// Diagonal construction converging to the priority policy as k grows
/// (queues ordered by decreasing c mu). Diagonal entry of queue i (1-based)
/// is (Q+1)^(m-i+1) k + 1, everything else 1. Log scale returns ln of that.
PolicyParams theorem_sequence(int queues, int capacity, double k, Scale scale);

/// theta + mu element-wise. Leaves the softmax policy unchanged.
Eigen::MatrixXd shift_matrix(const Eigen::MatrixXd& theta, double mu);

/// Shift that makes every entry >= 1.
inline Eigen::MatrixXd positive_equivalent(const Eigen::MatrixXd& theta) {
  return shift_matrix(theta, 1.0 - theta.minCoeff());
}

/// Hot-path sampler: caches the effective matrix and scratch buffers. Not
/// thread-safe; use one per simulated path or per thread.
class SoftmaxSampler {
 public:
  explicit SoftmaxSampler(const PolicyParams& policy);

  /// Fills and returns the action distribution at `jobs`.
  const std::vector<double>& probabilities(std::span<const int> jobs);

  Action operator()(std::span<const int> jobs, Rng& rng);

  /// Distribution computed by the most recent call.
  const std::vector<double>& last_probabilities() const { return probs_; }

 private:
  Eigen::MatrixXd effective_;
  std::vector<double> probs_;
};

/// Draws from a probability vector with one uniform.
Action draw_index(std::span<const double> probs, double u);

/// Plain-text checkpoint: a "scale = linear|log" line followed by the matrix,
/// row-major, one row per line, values printed with round-trip precision.
void write_policy(std::ostream& out, const PolicyParams& policy);
PolicyParams read_policy(std::istream& in);

}  // namespace qpo
