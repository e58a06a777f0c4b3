#include "qpo/queue_env.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "qpo/policy.hpp"

namespace qpo {
namespace {

void check_rates(const std::vector<double>& values, const char* field, bool allow_zero) {
  for (double v : values) {
    if (!std::isfinite(v) || v < 0.0 || (!allow_zero && v == 0.0)) {
      throw ConfigError(field, allow_zero ? "rates must be finite and nonnegative"
                                          : "values must be finite and strictly positive");
    }
  }
}

}  // namespace

SystemConfig::SystemConfig(std::vector<double> lambdas, std::vector<double> mus,
                           std::vector<double> costs, int capacity)
    : lambdas_(std::move(lambdas)), mus_(std::move(mus)), costs_(std::move(costs)),
      capacity_(capacity) {
  if (mus_.empty()) throw ConfigError("mus", "at least one queue is required");
  if (lambdas_.size() != mus_.size()) throw ConfigError("lambdas", "length must equal queue count");
  if (costs_.size() != mus_.size()) throw ConfigError("costs", "length must equal queue count");
  if (capacity_ < 1) throw ConfigError("capacity", "must be a positive integer");
  // Zero arrival rates are admitted: they give the empty-system test instances.
  check_rates(lambdas_, "lambdas", true);
  check_rates(mus_, "mus", false);
  check_rates(costs_, "costs", false);
  rate_ = std::accumulate(lambdas_.begin(), lambdas_.end(), 0.0) +
          *std::max_element(mus_.begin(), mus_.end());
}

SystemConfig SystemConfig::with_uniformization_rate(double rate) const {
  const double natural = std::accumulate(lambdas_.begin(), lambdas_.end(), 0.0) +
                         *std::max_element(mus_.begin(), mus_.end());
  if (!(rate >= natural) || !std::isfinite(rate)) {
    throw ConfigError("uniformization_rate", "must be at least the total event rate bound");
  }
  SystemConfig copy = *this;
  copy.rate_ = rate;
  return copy;
}

double SystemConfig::load() const {
  double rho = 0.0;
  for (std::size_t i = 0; i < mus_.size(); ++i) rho += lambdas_[i] / mus_[i];
  return rho;
}

double SystemConfig::holding_cost(std::span<const int> jobs) const {
  double total = 0.0;
  for (std::size_t i = 0; i < costs_.size(); ++i) total += costs_[i] * jobs[i];
  return total / (static_cast<double>(queues()) * capacity_);
}

double uniformization_rate(const SystemConfig& cfg) { return cfg.uniformization_rate(); }

std::vector<Event> event_distribution(const SystemConfig& cfg, Action action) {
  const int m = cfg.queues();
  if (action < 0 || action > m) throw std::out_of_range("action index outside 0..m");
  const double rate = cfg.uniformization_rate();
  std::vector<Event> events;
  events.reserve(m + 2);
  double used = 0.0;
  for (int i = 0; i < m; ++i) {
    events.push_back({EventKind::Arrival, i, cfg.lambdas()[i] / rate});
    used += cfg.lambdas()[i];
  }
  if (action < m) {
    events.push_back({EventKind::Completion, action, cfg.mus()[action] / rate});
    used += cfg.mus()[action];
  }
  events.push_back({EventKind::SelfLoop, -1, std::max(0.0, rate - used) / rate});
  return events;
}

void apply_event(const SystemConfig& cfg, EventKind kind, int queue, std::span<int> jobs) {
  switch (kind) {
    case EventKind::Arrival:
      if (jobs[queue] < cfg.capacity()) ++jobs[queue];
      break;
    case EventKind::Completion:
      if (jobs[queue] > 0) --jobs[queue];
      break;
    case EventKind::SelfLoop:
      break;
  }
}

StepResult step(const SystemConfig& cfg, const SysState& state, Action action, Rng& rng) {
  if (action < 0 || action > cfg.queues()) {
    throw std::out_of_range("step: action " + std::to_string(action) + " outside 0.." +
                            std::to_string(cfg.queues()));
  }
  StepResult result{state, cfg.holding_cost(state.jobs)};
  result.next.server = action;
  sample_event(cfg, action, result.next.jobs, rng);
  return result;
}

double Trajectory::average_cost() const {
  if (steps.empty()) return 0.0;
  double total = 0.0;
  for (const auto& s : steps) total += s.cost;
  return total / static_cast<double>(steps.size());
}

Trajectory rollout(const SystemConfig& cfg, const PolicyParams& policy, int horizon, int warmup,
                   Seed seed) {
  if (horizon < 1) throw std::invalid_argument("rollout: horizon must be >= 1");
  if (warmup < 0) throw std::invalid_argument("rollout: warmup must be >= 0");
  if (policy.queues() != cfg.queues()) throw std::invalid_argument("rollout: policy shape mismatch");
  Trajectory traj;
  traj.seed = seed;
  traj.steps.reserve(horizon);
  SoftmaxSampler sampler(policy);
  // The server position before the first recorded step is the last warm-up
  // action (idle when there is no warm-up).
  Action server = idle_action(cfg.queues());
  auto choose = [&](std::span<const int> jobs, Rng& rng) { return sampler(jobs, rng); };
  Rng rng(seed);
  std::vector<int> jobs(cfg.queues(), 0);
  for (int t = 0; t < warmup; ++t) {
    server = choose(jobs, rng);
    sample_event(cfg, server, jobs, rng);
  }
  for (int t = 0; t < horizon; ++t) {
    const Action a = choose(jobs, rng);
    traj.steps.push_back({SysState{jobs, server}, a, cfg.holding_cost(jobs)});
    sample_event(cfg, a, jobs, rng);
    server = a;
  }
  return traj;
}

}  // namespace qpo
