#pragma once

#include <functional>
#include <span>
#include <stdexcept>
#include <utility>
#include <vector>

#include "qpo/policy.hpp"
#include "qpo/queue_env.hpp"
#include "qpo/random.hpp"

namespace qpo {

/// Largest state space exact_expected_cost will enumerate.
inline constexpr long kMaxEnumeratedStates = 100000;

/// Raised when an instance is too large to enumerate.
class StateSpaceTooLarge : public std::length_error {
 public:
  explicit StateSpaceTooLarge(long states)
      : std::length_error("state space has " + std::to_string(states) +
                          " states; exact enumeration is limited to " +
                          std::to_string(kMaxEnumeratedStates)),
        states_(states) {}
  long states() const noexcept { return states_; }

 private:
  long states_;
};

/// Mixed-radix index of job vectors in [0, Q]^m.
class StateIndexer {
 public:
  StateIndexer(int queues, int capacity);

  long size() const { return size_; }
  long index(std::span<const int> jobs) const;
  std::vector<int> state(long index) const;

 private:
  int queues_;
  int capacity_;
  long size_;
};

/// Action distribution as a function of the job vector.
using StatePolicy = std::function<std::vector<double>(std::span<const int>)>;

StatePolicy softmax_state_policy(const PolicyParams& policy);

struct KernelRow {
  std::vector<std::pair<long, double>> entries;  ///< (next state index, probability)
};

/// One-step kernel of the uniformized chain with the action marginalized out.
std::vector<KernelRow> transition_kernel(const SystemConfig& cfg, const StatePolicy& policy);

/// Exact E[C(tau)] over `horizon` steps from `initial` (no warm-up), by
/// forward recursion on the state distribution.
double exact_expected_cost(const SystemConfig& cfg, const StatePolicy& policy, int horizon,
                           std::span<const int> initial);

/// Same, for a softmax policy from the empty state.
double exact_expected_cost(const SystemConfig& cfg, const PolicyParams& policy, int horizon);

struct CorrectRate {
  double sampled_pct = 0.0;  ///< sampled action matches the c-mu action
  double argmax_pct = 0.0;   ///< most likely action matches the c-mu action
  long epochs = 0;
  long empty_epochs = 0;  ///< epochs spent in the empty state
};

/// Fraction of decision epochs (over n_paths recorded windows) at which the
/// policy picks the c-mu action. In the empty state every action has the
/// same effect as idling and counts as correct.
CorrectRate correct_rate(const SystemConfig& cfg, const PolicyParams& policy, int n_paths,
                         int horizon, int warmup, Seed seed);

struct EvalReport {
  double mean_cost = 0.0;
  double ci_low = 0.0;
  double ci_high = 0.0;
  long n_paths = 0;
  double correct_rate_pct = 0.0;
};

/// Mean and normal-approximation confidence interval of a sample.
EvalReport mean_confidence_interval(const std::vector<double>& samples, double confidence);

/// Cost of the deterministic c-mu policy over n_paths rollouts.
EvalReport priority_cost_ci(const SystemConfig& cfg, int n_paths, int horizon, int warmup, Seed seed,
                            double confidence = 0.95);

/// Cost interval and correct rate of a softmax policy.
EvalReport evaluate_policy(const SystemConfig& cfg, const PolicyParams& policy, int n_paths,
                           int horizon, int warmup, Seed seed, double confidence = 0.95);

}  // namespace qpo
