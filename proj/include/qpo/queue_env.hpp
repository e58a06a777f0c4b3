#pragma once

#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "qpo/random.hpp"

namespace qpo {

class PolicyParams;

/// Raised when a configuration value violates its invariants. `field()` names
/// the offending key so callers can report it.
class ConfigError : public std::invalid_argument {
 public:
  ConfigError(std::string field, const std::string& message)
      : std::invalid_argument(field + ": " + message), field_(std::move(field)) {}
  const std::string& field() const noexcept { return field_; }

 private:
  std::string field_;
};

/// Action indices are 0-based: 0..m-1 serve the corresponding queue, m idles.
using Action = int;

constexpr Action idle_action(int queues) { return queues; }

/// Parameters of the m-queue single-server system. Validated on construction;
/// the uniformization rate is cached.
class SystemConfig {
 public:
  SystemConfig(std::vector<double> lambdas, std::vector<double> mus, std::vector<double> costs,
               int capacity);

  int queues() const { return static_cast<int>(mus_.size()); }
  int actions() const { return queues() + 1; }
  int capacity() const { return capacity_; }
  const std::vector<double>& lambdas() const { return lambdas_; }
  const std::vector<double>& mus() const { return mus_; }
  const std::vector<double>& costs() const { return costs_; }

  /// Sum of arrival rates plus the largest service rate, unless overridden.
  double uniformization_rate() const { return rate_; }
  /// Copy of this config using a larger uniformization constant. Only
  /// rescales discrete time; rate must be at least the natural bound.
  SystemConfig with_uniformization_rate(double rate) const;

  /// Sum of lambda_i / mu_i. Not constrained.
  double load() const;

  /// Normalized holding cost c's / (m Q) of a job-count vector.
  double holding_cost(std::span<const int> jobs) const;

  bool operator==(const SystemConfig&) const = default;

 private:
  std::vector<double> lambdas_;
  std::vector<double> mus_;
  std::vector<double> costs_;
  int capacity_;
  double rate_;
};

double uniformization_rate(const SystemConfig& cfg);

/// Observable job counts plus the server position (the last action taken).
struct SysState {
  std::vector<int> jobs;
  Action server = 0;

  static SysState empty(int queues) { return {std::vector<int>(queues, 0), idle_action(queues)}; }
  bool operator==(const SysState&) const = default;
};

/// One uniformized event. Completions are attributed to the served queue and
/// may be phantom (empty queue); lost arrivals still count as arrival events.
enum class EventKind { Arrival, Completion, SelfLoop };

struct Event {
  EventKind kind;
  int queue;  // -1 for SelfLoop
  double probability;
};

/// Full event distribution at (state, action), in the order arrivals 1..m,
/// completion (only when serving a queue), self-loop. Probabilities sum to 1.
std::vector<Event> event_distribution(const SystemConfig& cfg, Action action);

/// Applies an event to a job vector (handles full buffers and empty queues).
void apply_event(const SystemConfig& cfg, EventKind kind, int queue, std::span<int> jobs);

struct StepResult {
  SysState next;
  double cost;
};

/// Charges the pre-transition holding cost, moves the server to `action` and
/// samples one uniformized event.
StepResult step(const SystemConfig& cfg, const SysState& state, Action action, Rng& rng);

struct TrajectoryStep {
  SysState state;
  Action action;
  double cost;
};

struct Trajectory {
  std::vector<TrajectoryStep> steps;
  Seed seed = 0;

  /// Average per-step cost C(tau).
  double average_cost() const;
};

/// Samples the event for the served action using one uniform draw and updates
/// `jobs` in place. Shared by every simulation path.
inline void sample_event(const SystemConfig& cfg, Action action, std::span<int> jobs, Rng& rng) {
  const int m = cfg.queues();
  double u = rng.uniform() * cfg.uniformization_rate();
  const auto& lambdas = cfg.lambdas();
  for (int i = 0; i < m; ++i) {
    if (u < lambdas[i]) {
      if (jobs[i] < cfg.capacity()) ++jobs[i];
      return;
    }
    u -= lambdas[i];
  }
  if (action < m && u < cfg.mus()[action] && jobs[action] > 0) --jobs[action];
}

/// Runs one sample path from the empty state: `warmup` unrecorded steps, then
/// `horizon` steps reported to on_step(jobs, action, cost). `choose(jobs, rng)`
/// returns the action at each decision epoch.
template <class Chooser, class Observer>
void simulate_path(const SystemConfig& cfg, Chooser&& choose, int horizon, int warmup, Seed seed,
                   Observer&& on_step) {
  Rng rng(seed);
  std::vector<int> jobs(cfg.queues(), 0);
  for (int t = 0; t < warmup; ++t) {
    const Action a = choose(std::span<const int>(jobs), rng);
    sample_event(cfg, a, jobs, rng);
  }
  for (int t = 0; t < horizon; ++t) {
    const Action a = choose(std::span<const int>(jobs), rng);
    on_step(std::span<const int>(jobs), a, cfg.holding_cost(jobs));
    sample_event(cfg, a, jobs, rng);
  }
}

/// Records a full trajectory of `horizon` steps after `warmup` burn-in steps
/// under the softmax policy. Pure function of its arguments.
Trajectory rollout(const SystemConfig& cfg, const PolicyParams& policy, int horizon, int warmup,
                   Seed seed);

}  // namespace qpo
