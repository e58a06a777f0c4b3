#include <chrono>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "qpo/experiment.hpp"

namespace qpo {
namespace {

using nlohmann::json;

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) {
    if (!cell.empty() && cell.back() == '\r') cell.pop_back();
    out.push_back(cell);
  }
  return out;
}

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  return out;
}

std::ifstream open_in(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  return in;
}

json row_json(const IterationRecord& r, Seed seed) {
  return {{"iter", r.iter},
          {"alpha", r.alpha},
          {"success", r.success},
          {"cost_eval", r.cost_eval},
          {"best_cost", r.best_cost},
          {"correct_rate_sampled", r.correct_rate_sampled},
          {"correct_rate_argmax", r.correct_rate_argmax},
          {"grad_norm", r.grad_norm},
          {"seed", seed}};
}

IterationRecord row_from_json(const json& j) {
  IterationRecord r;
  r.iter = j.at("iter").get<int>();
  r.alpha = j.at("alpha").get<double>();
  r.success = j.at("success").get<bool>();
  r.cost_eval = j.at("cost_eval").get<double>();
  r.best_cost = j.at("best_cost").get<double>();
  r.correct_rate_sampled = j.at("correct_rate_sampled").get<double>();
  r.correct_rate_argmax = j.at("correct_rate_argmax").get<double>();
  r.grad_norm = j.at("grad_norm").get<double>();
  return r;
}

std::string timestamp_utc() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

}  // namespace

void write_run_csv_header(std::ostream& out) { out << kRunColumns << '\n'; }

void write_run_csv_row(std::ostream& out, const IterationRecord& r, Seed seed) {
  out << r.iter << ',' << fmt(r.alpha) << ',' << (r.success ? 1 : 0) << ',' << fmt(r.cost_eval)
      << ',' << fmt(r.best_cost) << ',' << fmt(r.correct_rate_sampled) << ','
      << fmt(r.correct_rate_argmax) << ',' << fmt(r.grad_norm) << ',' << seed << '\n';
}

void write_run_csv(std::ostream& out, const RunRecord& run) {
  write_run_csv_header(out);
  for (const auto& row : run.rows) write_run_csv_row(out, row, run.seed);
}

std::vector<IterationRecord> read_run_csv(std::istream& in, Seed* seed) {
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("run csv: empty input");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != kRunColumns) throw std::runtime_error("run csv: unexpected header '" + line + "'");
  std::vector<IterationRecord> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto cells = split_csv(line);
    if (cells.size() != 9) throw std::runtime_error("run csv: expected 9 columns: " + line);
    IterationRecord r;
    r.iter = std::stoi(cells[0]);
    r.alpha = std::stod(cells[1]);
    r.success = cells[2] == "1";
    r.cost_eval = std::stod(cells[3]);
    r.best_cost = std::stod(cells[4]);
    r.correct_rate_sampled = std::stod(cells[5]);
    r.correct_rate_argmax = std::stod(cells[6]);
    r.grad_norm = std::stod(cells[7]);
    if (seed) *seed = std::stoull(cells[8]);
    rows.push_back(r);
  }
  return rows;
}

std::string run_json(const RunRecord& run) {
  json rows = json::array();
  for (const auto& row : run.rows) rows.push_back(row_json(row, run.seed));
  return json{{"seed", run.seed}, {"rows", rows}}.dump(1);
}

std::vector<IterationRecord> read_run_json(std::istream& in, Seed* seed) {
  const json doc = json::parse(in);
  if (seed) *seed = doc.at("seed").get<Seed>();
  std::vector<IterationRecord> rows;
  for (const auto& j : doc.at("rows")) rows.push_back(row_from_json(j));
  return rows;
}

void write_matrix_csv(std::ostream& out, const Eigen::MatrixXd& matrix) {
  for (Eigen::Index r = 0; r < matrix.rows(); ++r) {
    for (Eigen::Index c = 0; c < matrix.cols(); ++c) out << (c ? "," : "") << fmt(matrix(r, c));
    out << '\n';
  }
}

Eigen::MatrixXd read_matrix_csv(std::istream& in) {
  std::vector<std::vector<double>> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line == "\r") continue;
    std::vector<double> row;
    for (const auto& cell : split_csv(line)) row.push_back(std::stod(cell));
    if (!rows.empty() && row.size() != rows.front().size()) {
      throw std::runtime_error("matrix csv: ragged rows");
    }
    rows.push_back(std::move(row));
  }
  if (rows.empty()) return {};
  Eigen::MatrixXd m(rows.size(), rows.front().size());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    for (std::size_t c = 0; c < rows[r].size(); ++c) m(r, c) = rows[r][c];
  }
  return m;
}

std::vector<std::filesystem::path> emit_results(const ResultsBundle& bundle,
                                                const std::filesystem::path& dir,
                                                OutputFormat format) {
  std::filesystem::create_directories(dir);
  std::vector<std::filesystem::path> written;
  const std::string ext = format == OutputFormat::Csv ? ".csv" : ".json";

  for (const auto& run : bundle.runs) {
    const auto stem = std::to_string(run.seed);
    auto path = dir / ("run_" + stem + ext);
    {
      auto out = open_out(path);
      if (format == OutputFormat::Csv) write_run_csv(out, run);
      else out << run_json(run) << '\n';
      if (!out) throw std::runtime_error("write failed: " + path.string());
    }
    written.push_back(path);
    path = dir / ("policy_" + stem + ".txt");
    {
      auto out = open_out(path);
      write_policy(out, run.final_policy);
    }
    written.push_back(path);
  }

  auto path = dir / ("aggregate" + ext);
  {
    auto out = open_out(path);
    if (format == OutputFormat::Csv) {
      out << "iter,mean_best_cost,mean_max_correct_rate,max_correct_rate,seeds\n";
      for (const auto& a : bundle.aggregate) {
        out << a.iter << ',' << fmt(a.mean_best_cost) << ',' << fmt(a.mean_max_correct_rate) << ','
            << fmt(a.max_correct_rate) << ',' << a.seeds << '\n';
      }
    } else {
      json rows = json::array();
      for (const auto& a : bundle.aggregate) {
        rows.push_back({{"iter", a.iter},
                        {"mean_best_cost", a.mean_best_cost},
                        {"mean_max_correct_rate", a.mean_max_correct_rate},
                        {"max_correct_rate", a.max_correct_rate},
                        {"seeds", a.seeds}});
      }
      out << rows.dump(1) << '\n';
    }
    if (!out) throw std::runtime_error("write failed: " + path.string());
  }
  written.push_back(path);

  const ExperimentConfig& cfg = bundle.config;
  const int m = cfg.system().queues();
  json failures = json::array();
  for (const auto& f : bundle.failures) failures.push_back({{"seed", f.seed}, {"error", f.message}});
  json seeds = json::array();
  for (const auto& run : bundle.runs) seeds.push_back(run.seed);
  const json meta = {
      {"config_hash", config_hash(cfg)},
      {"config_text", to_text(cfg)},
      {"timestamp", timestamp_utc()},
      {"code_version", QPO_VERSION},
      {"format", to_string(format)},
      {"seeds", seeds},
      {"failures", failures},
      {"iters", cfg.aloe.max_iters},
      {"correct_rate_every", cfg.correct_rate_every},
      {"eval_paths", cfg.eval_paths},
      {"confidence", cfg.confidence},
      {"estimator", to_string(cfg.estimator)},
      {"gradient_paths_per_iteration", gradient_paths(cfg.estimator, m, cfg.oracle)},
      {"rollouts_per_iteration", bundle.rollouts_per_iteration},
  };
  path = dir / "metadata.json";
  {
    auto out = open_out(path);
    out << meta.dump(1) << '\n';
  }
  written.push_back(path);
  return written;
}

ResultsBundle read_results(const std::filesystem::path& dir, OutputFormat format) {
  auto meta_in = open_in(dir / "metadata.json");
  const json meta = json::parse(meta_in);
  ResultsBundle bundle;
  {
    std::istringstream text(meta.at("config_text").get<std::string>());
    for (const auto& [k, v] : parse_settings(text)) apply_setting(bundle.config, k, v);
  }
  bundle.rollouts_per_iteration = meta.at("rollouts_per_iteration").get<long>();
  for (const auto& f : meta.at("failures")) {
    bundle.failures.push_back({f.at("seed").get<Seed>(), f.at("error").get<std::string>()});
  }
  const std::string ext = format == OutputFormat::Csv ? ".csv" : ".json";
  for (const auto& s : meta.at("seeds")) {
    const Seed seed = s.get<Seed>();
    const auto stem = std::to_string(seed);
    auto policy_in = open_in(dir / ("policy_" + stem + ".txt"));
    RunRecord run{{}, read_policy(policy_in), seed};
    auto in = open_in(dir / ("run_" + stem + ext));
    run.rows = format == OutputFormat::Csv ? read_run_csv(in) : read_run_json(in);
    bundle.runs.push_back(std::move(run));
  }
  auto agg_in = open_in(dir / ("aggregate" + ext));
  if (format == OutputFormat::Csv) {
    std::string line;
    std::getline(agg_in, line);
    while (std::getline(agg_in, line)) {
      if (line.empty()) continue;
      const auto c = split_csv(line);
      bundle.aggregate.push_back(
          {std::stoi(c[0]), std::stod(c[1]), std::stod(c[2]), std::stod(c[3]), std::stoi(c[4])});
    }
  } else {
    for (const auto& a : json::parse(agg_in)) {
      bundle.aggregate.push_back({a.at("iter").get<int>(), a.at("mean_best_cost").get<double>(),
                                  a.at("mean_max_correct_rate").get<double>(),
                                  a.at("max_correct_rate").get<double>(), a.at("seeds").get<int>()});
    }
  }
  return bundle;
}

}  // namespace qpo
