#include "qpo/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>

#include <boost/math/distributions/normal.hpp>

#include "qpo/gradients.hpp"
#include "qpo/parallel.hpp"

namespace qpo {

StateIndexer::StateIndexer(int queues, int capacity) : queues_(queues), capacity_(capacity) {
  double states = std::pow(capacity + 1.0, queues);
  if (states > static_cast<double>(kMaxEnumeratedStates)) {
    throw StateSpaceTooLarge(states > 9e18 ? std::numeric_limits<long>::max()
                                           : static_cast<long>(states));
  }
  size_ = static_cast<long>(states);
}

long StateIndexer::index(std::span<const int> jobs) const {
  long idx = 0;
  for (int i = queues_ - 1; i >= 0; --i) idx = idx * (capacity_ + 1) + jobs[i];
  return idx;
}

std::vector<int> StateIndexer::state(long index) const {
  std::vector<int> jobs(queues_);
  for (int i = 0; i < queues_; ++i) {
    jobs[i] = static_cast<int>(index % (capacity_ + 1));
    index /= capacity_ + 1;
  }
  return jobs;
}

StatePolicy softmax_state_policy(const PolicyParams& policy) {
  return [policy](std::span<const int> jobs) { return action_dist(policy, jobs).probs; };
}

std::vector<KernelRow> transition_kernel(const SystemConfig& cfg, const StatePolicy& policy) {
  const StateIndexer indexer(cfg.queues(), cfg.capacity());
  std::vector<KernelRow> kernel(indexer.size());
  std::vector<std::vector<Event>> events(cfg.actions());
  for (Action a = 0; a < cfg.actions(); ++a) events[a] = event_distribution(cfg, a);

  for (long s = 0; s < indexer.size(); ++s) {
    const std::vector<int> jobs = indexer.state(s);
    const std::vector<double> probs = policy(jobs);
    std::map<long, double> next;
    std::vector<int> scratch(jobs.size());
    for (Action a = 0; a < cfg.actions(); ++a) {
      if (probs[a] == 0.0) continue;
      for (const Event& e : events[a]) {
        std::copy(jobs.begin(), jobs.end(), scratch.begin());
        apply_event(cfg, e.kind, e.queue, scratch);
        next[indexer.index(scratch)] += probs[a] * e.probability;
      }
    }
    kernel[s].entries.assign(next.begin(), next.end());
  }
  return kernel;
}

double exact_expected_cost(const SystemConfig& cfg, const StatePolicy& policy, int horizon,
                           std::span<const int> initial) {
  if (horizon < 1) throw std::invalid_argument("exact_expected_cost: horizon must be >= 1");
  const StateIndexer indexer(cfg.queues(), cfg.capacity());
  const auto kernel = transition_kernel(cfg, policy);
  std::vector<double> cost(indexer.size());
  for (long s = 0; s < indexer.size(); ++s) cost[s] = cfg.holding_cost(indexer.state(s));

  std::vector<double> dist(indexer.size(), 0.0);
  std::vector<double> next(indexer.size(), 0.0);
  dist[indexer.index(initial)] = 1.0;
  double total = 0.0;
  for (int t = 0; t < horizon; ++t) {
    for (long s = 0; s < indexer.size(); ++s) total += dist[s] * cost[s];
    if (t + 1 == horizon) break;
    std::fill(next.begin(), next.end(), 0.0);
    for (long s = 0; s < indexer.size(); ++s) {
      if (dist[s] == 0.0) continue;
      for (const auto& [to, p] : kernel[s].entries) next[to] += dist[s] * p;
    }
    dist.swap(next);
  }
  return total / horizon;
}

double exact_expected_cost(const SystemConfig& cfg, const PolicyParams& policy, int horizon) {
  const std::vector<int> empty(cfg.queues(), 0);
  return exact_expected_cost(cfg, softmax_state_policy(policy), horizon, empty);
}

CorrectRate correct_rate(const SystemConfig& cfg, const PolicyParams& policy, int n_paths,
                         int horizon, int warmup, Seed seed) {
  if (n_paths < 1) throw std::invalid_argument("correct_rate: n_paths must be >= 1");
  struct Counts {
    long sampled = 0;
    long argmax = 0;
    long empty = 0;
  };
  std::vector<Counts> counts(n_paths);
  parallel_for(static_cast<std::size_t>(n_paths), [&](std::size_t i) {
    SoftmaxSampler sampler(policy);
    Counts c;
    simulate_path(
        cfg, [&](std::span<const int> jobs, Rng& rng) { return sampler(jobs, rng); }, horizon,
        warmup, derive_seed(seed, i), [&](std::span<const int> jobs, Action a, double) {
          const bool empty = std::all_of(jobs.begin(), jobs.end(), [](int s) { return s == 0; });
          if (empty) {
            ++c.empty;
            ++c.sampled;
            ++c.argmax;
            return;
          }
          const Action target = priority_action(cfg, jobs);
          const auto& probs = sampler.last_probabilities();
          const auto top = std::max_element(probs.begin(), probs.end()) - probs.begin();
          if (a == target) ++c.sampled;
          if (top == target) ++c.argmax;
        });
    counts[i] = c;
  });
  long sampled = 0;
  long argmax = 0;
  long empty = 0;
  for (const auto& c : counts) {
    sampled += c.sampled;
    argmax += c.argmax;
    empty += c.empty;
  }
  const long epochs = static_cast<long>(n_paths) * horizon;
  return {100.0 * sampled / epochs, 100.0 * argmax / epochs, epochs, empty};
}

EvalReport mean_confidence_interval(const std::vector<double>& samples, double confidence) {
  if (samples.size() < 2) throw std::invalid_argument("confidence interval needs >= 2 samples");
  if (!(confidence > 0.0 && confidence < 1.0)) {
    throw ConfigError("confidence", "must lie in (0, 1)");
  }
  const double n = static_cast<double>(samples.size());
  const double mean = tree_sum(samples, 0.0) / n;
  double ss = 0.0;
  for (double x : samples) ss += (x - mean) * (x - mean);
  const double se = std::sqrt(ss / (n - 1.0) / n);
  const boost::math::normal_distribution<double> normal;
  const double z = boost::math::quantile(normal, 0.5 + confidence / 2.0);
  EvalReport report;
  report.mean_cost = mean;
  report.ci_low = mean - z * se;
  report.ci_high = mean + z * se;
  report.n_paths = static_cast<long>(samples.size());
  return report;
}

EvalReport priority_cost_ci(const SystemConfig& cfg, int n_paths, int horizon, int warmup, Seed seed,
                            double confidence) {
  if (n_paths < 30) throw std::invalid_argument("priority_cost_ci: n_paths must be >= 30");
  std::vector<double> costs(n_paths);
  parallel_for(static_cast<std::size_t>(n_paths), [&](std::size_t i) {
    double total = 0.0;
    simulate_path(
        cfg, [&](std::span<const int> jobs, Rng&) { return priority_action(cfg, jobs); }, horizon,
        warmup, derive_seed(seed, i), [&](std::span<const int>, Action, double c) { total += c; });
    costs[i] = total / horizon;
  });
  EvalReport report = mean_confidence_interval(costs, confidence);
  report.correct_rate_pct = 100.0;
  return report;
}

EvalReport evaluate_policy(const SystemConfig& cfg, const PolicyParams& policy, int n_paths,
                           int horizon, int warmup, Seed seed, double confidence) {
  const auto costs = path_costs(cfg, policy, horizon, warmup, n_paths, derive_seed(seed, 0));
  EvalReport report = mean_confidence_interval(costs, confidence);
  report.correct_rate_pct =
      correct_rate(cfg, policy, n_paths, horizon, warmup, derive_seed(seed, 1)).sampled_pct;
  return report;
}

}  // namespace qpo
