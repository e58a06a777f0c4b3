#include "qpo/policy.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <istream>
#include <limits>
#include <optional>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>

namespace qpo {
namespace {

// In-place softmax of `z`, stabilized by subtracting the max.
void softmax_inplace(std::vector<double>& z) {
  const double top = *std::max_element(z.begin(), z.end());
  if (!std::isfinite(top)) throw std::overflow_error("policy scores are not finite");
  double total = 0.0;
  for (double& v : z) {
    v = std::exp(v - top);
    total += v;
  }
  for (double& v : z) v /= total;
}

void scores(const Eigen::MatrixXd& a, std::span<const int> jobs, std::vector<double>& z) {
  const auto rows = a.rows();
  const auto cols = a.cols();
  z.assign(rows, 0.0);
  for (Eigen::Index j = 0; j < cols; ++j) {
    const int s = jobs[j];
    if (s == 0) continue;
    for (Eigen::Index r = 0; r < rows; ++r) z[r] += a(r, j) * s;
  }
}

void check_state(const PolicyParams& policy, std::span<const int> jobs) {
  if (static_cast<int>(jobs.size()) != policy.queues()) {
    throw std::invalid_argument("state length does not match policy queue count");
  }
}

}  // namespace

std::string_view to_string(Scale scale) { return scale == Scale::Linear ? "linear" : "log"; }

Scale parse_scale(std::string_view text) {
  if (text == "linear") return Scale::Linear;
  if (text == "log") return Scale::Log;
  throw ConfigError("scale", "expected linear or log, got '" + std::string(text) + "'");
}

PolicyParams::PolicyParams(Scale scale, Eigen::MatrixXd theta) : scale_(scale), theta_(std::move(theta)) {
  if (theta_.cols() < 1 || theta_.rows() != theta_.cols() + 1) {
    throw std::invalid_argument("policy matrix must have shape (m+1) x m");
  }
  if (!theta_.allFinite()) throw std::invalid_argument("policy matrix has non-finite entries");
}

PolicyParams PolicyParams::zeros(int queues, Scale scale) {
  return {scale, Eigen::MatrixXd::Zero(queues + 1, queues)};
}

Eigen::MatrixXd PolicyParams::effective() const {
  if (scale_ == Scale::Linear) return theta_;
  return theta_.array().exp().matrix();
}

ActionDist action_dist(const PolicyParams& policy, std::span<const int> jobs) {
  check_state(policy, jobs);
  ActionDist dist;
  scores(policy.effective(), jobs, dist.probs);
  softmax_inplace(dist.probs);
  return dist;
}

Action draw_index(std::span<const double> probs, double u) {
  double acc = 0.0;
  const int n = static_cast<int>(probs.size());
  for (int i = 0; i < n; ++i) {
    acc += probs[i];
    if (u < acc) return i;
  }
  // Rounding left u above the cumulative total: return the last action with mass.
  for (int i = n - 1; i >= 0; --i) {
    if (probs[i] > 0.0) return i;
  }
  return n - 1;
}

Action sample_action(const PolicyParams& policy, std::span<const int> jobs, Rng& rng) {
  const ActionDist dist = action_dist(policy, jobs);
  return draw_index(dist.probs, rng.uniform());
}

Eigen::MatrixXd grad_log_pi(const PolicyParams& policy, std::span<const int> jobs, Action action) {
  check_state(policy, jobs);
  const int m = policy.queues();
  if (action < 0 || action > m) throw std::out_of_range("grad_log_pi: action outside 0..m");
  const ActionDist dist = action_dist(policy, jobs);
  Eigen::VectorXd residual = -Eigen::Map<const Eigen::VectorXd>(dist.probs.data(), m + 1);
  residual(action) += 1.0;
  Eigen::VectorXd s(m);
  for (int j = 0; j < m; ++j) s(j) = jobs[j];
  Eigen::MatrixXd grad = residual * s.transpose();
  if (policy.scale() == Scale::Log) grad.array() *= policy.theta().array().exp();
  return grad;
}

Action priority_action(const SystemConfig& cfg, std::span<const int> jobs) {
  Action best = idle_action(cfg.queues());
  double best_index = -std::numeric_limits<double>::infinity();
  for (int i = 0; i < cfg.queues(); ++i) {
    if (jobs[i] <= 0) continue;
    const double index = cfg.costs()[i] * cfg.mus()[i];
    if (index > best_index) {
      best_index = index;
      best = i;
    }
  }
  return best;
}

PolicyParams theorem_sequence(int queues, int capacity, double k, Scale scale) {
  if (k < 0.0) throw std::invalid_argument("theorem_sequence: k must be >= 0");
  Eigen::MatrixXd a = Eigen::MatrixXd::Ones(queues + 1, queues);
  for (int i = 0; i < queues; ++i) {
    a(i, i) = std::pow(capacity + 1.0, queues - i) * k + 1.0;
  }
  if (scale == Scale::Linear) return {Scale::Linear, a};
  return {Scale::Log, a.array().log().matrix()};
}

Eigen::MatrixXd shift_matrix(const Eigen::MatrixXd& theta, double mu) {
  return (theta.array() + mu).matrix();
}

SoftmaxSampler::SoftmaxSampler(const PolicyParams& policy)
    : effective_(policy.effective()), probs_(policy.actions(), 0.0) {}

const std::vector<double>& SoftmaxSampler::probabilities(std::span<const int> jobs) {
  scores(effective_, jobs, probs_);
  softmax_inplace(probs_);
  return probs_;
}

Action SoftmaxSampler::operator()(std::span<const int> jobs, Rng& rng) {
  probabilities(jobs);
  return draw_index(probs_, rng.uniform());
}

void write_policy(std::ostream& out, const PolicyParams& policy) {
  out << "scale = " << to_string(policy.scale()) << '\n';
  out << std::setprecision(17);
  const auto& theta = policy.theta();
  for (Eigen::Index r = 0; r < theta.rows(); ++r) {
    for (Eigen::Index c = 0; c < theta.cols(); ++c) {
      if (c) out << ' ';
      out << theta(r, c);
    }
    out << '\n';
  }
}

PolicyParams read_policy(std::istream& in) {
  std::string line;
  std::optional<Scale> scale;
  std::vector<std::vector<double>> rows;
  while (std::getline(in, line)) {
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos || line[first] == '#') continue;
    if (!scale) {
      const auto eq = line.find('=');
      if (eq == std::string::npos || line.substr(first, eq - first).find("scale") != 0) {
        throw std::runtime_error("policy file: expected 'scale = linear|log' header");
      }
      std::string value = line.substr(eq + 1);
      value.erase(0, value.find_first_not_of(" \t"));
      value.erase(value.find_last_not_of(" \t\r") + 1);
      scale = parse_scale(value);
      continue;
    }
    std::istringstream row_stream(line);
    std::vector<double> row;
    std::string token;
    while (row_stream >> token) row.push_back(std::stod(token));
    rows.push_back(std::move(row));
  }
  if (!scale) throw std::runtime_error("policy file: missing scale header");
  if (rows.empty()) throw std::runtime_error("policy file: no matrix rows");
  const auto cols = rows.front().size();
  Eigen::MatrixXd theta(rows.size(), cols);
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r].size() != cols) throw std::runtime_error("policy file: ragged matrix rows");
    for (std::size_t c = 0; c < cols; ++c) theta(r, c) = rows[r][c];
  }
  return {*scale, std::move(theta)};
}

}  // namespace qpo
