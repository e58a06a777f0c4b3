#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "qpo/aloe.hpp"
#include "qpo/analysis.hpp"
#include "qpo/experiment.hpp"
#include "qpo/gradients.hpp"
#include "qpo/policy.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace qpo;

namespace {

// Default scale of the near-priority point used by `covariance --point priority`.
constexpr double kPriorityPointScale = 0.05;

struct CommonFlags {
  std::optional<std::string> preset, scale, estimator, out, format, config;
  std::optional<int> seeds, iters;
  std::vector<std::string> sets;
  bool smoke = false;
};

void add_common(CLI::App* cmd, CommonFlags& f) {
  cmd->add_option("--preset", f.preset, "low|medium|balanced|heavy|custom");
  cmd->add_option("--scale", f.scale, "linear|log");
  cmd->add_option("--estimator", f.estimator, "fd|pg");
  cmd->add_option("--seeds", f.seeds, "number of seeds");
  cmd->add_option("--iters", f.iters, "ALOE iterations");
  cmd->add_option("--config", f.config, "key = value settings file");
  cmd->add_option("--out", f.out, "output directory");
  cmd->add_option("--format", f.format, "csv|json");
  cmd->add_option("--set", f.sets, "extra setting key=value (repeatable)");
  cmd->add_flag("--smoke", f.smoke, "small run: Q=10, T=50, 100 iterations");
}

ExperimentConfig resolve(const CommonFlags& f) {
  std::vector<Setting> flags;
  if (f.smoke) {
    flags.emplace_back("capacity", "10");
    flags.emplace_back("horizon", "50");
    flags.emplace_back("iters", "100");
  }
  if (f.preset) flags.emplace_back("preset", *f.preset);
  if (f.scale) flags.emplace_back("scale", *f.scale);
  if (f.estimator) flags.emplace_back("estimator", *f.estimator);
  if (f.seeds) flags.emplace_back("seeds", std::to_string(*f.seeds));
  if (f.iters) flags.emplace_back("iters", std::to_string(*f.iters));
  if (f.out) flags.emplace_back("out", *f.out);
  if (f.format) flags.emplace_back("format", *f.format);
  for (const auto& s : f.sets) {
    const auto eq = s.find('=');
    if (eq == std::string::npos) throw ConfigError("set", "expected key=value, got '" + s + "'");
    flags.emplace_back(s.substr(0, eq), s.substr(eq + 1));
  }
  if (const char* root = std::getenv("QPO_SEED_ROOT")) flags.emplace_back("seed_root", root);
  std::optional<fs::path> file;
  if (f.config) file = *f.config;
  return load_config(file, flags);
}

PolicyParams load_policy_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path);
  return read_policy(in);
}

fs::path prepare_out(const ExperimentConfig& cfg) {
  const fs::path dir(cfg.out_dir);
  fs::create_directories(dir);
  return dir;
}

void write_json(const fs::path& path, const json& j) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

json report_json(const EvalReport& r) {
  return {{"mean_cost", r.mean_cost},
          {"ci_low", r.ci_low},
          {"ci_high", r.ci_high},
          {"n_paths", r.n_paths},
          {"correct_rate_pct", r.correct_rate_pct}};
}

int cmd_simulate(const ExperimentConfig& cfg, const std::optional<std::string>& policy_path, int paths) {
  const SystemConfig sys = cfg.system();
  const PolicyParams policy =
      policy_path ? load_policy_file(*policy_path) : PolicyParams::zeros(sys.queues(), cfg.scale);
  const fs::path dir = prepare_out(cfg);
  const fs::path file = dir / "rollouts.csv";
  std::ofstream out(file);
  if (!out) throw std::runtime_error("cannot write " + file.string());
  out << "path,step,action";
  for (int i = 1; i <= sys.queues(); ++i) out << ",jobs_" << i;
  out << ",cost\n";
  out.precision(17);
  std::vector<double> costs;
  const Seed root = cfg.seeds().front();
  for (int p = 0; p < paths; ++p) {
    const Trajectory traj = rollout(sys, policy, cfg.oracle.horizon, cfg.oracle.warmup, derive_seed(root, p));
    for (std::size_t t = 0; t < traj.steps.size(); ++t) {
      const auto& s = traj.steps[t];
      out << p << ',' << t << ',' << s.action + 1;
      for (int j : s.state.jobs) out << ',' << j;
      out << ',' << s.cost << '\n';
    }
    costs.push_back(traj.average_cost());
  }
  const EvalReport r = mean_confidence_interval(costs, cfg.confidence);
  std::cout << json{{"command", "simulate"}, {"file", file.string()}, {"summary", report_json(r)}}.dump()
            << '\n';
  return 0;
}

int cmd_evaluate(const ExperimentConfig& cfg, const std::optional<std::string>& policy_path, int paths) {
  const SystemConfig sys = cfg.system();
  const Seed seed = cfg.seeds().front();
  EvalReport r;
  std::string label = "priority";
  if (policy_path) {
    r = evaluate_policy(sys, load_policy_file(*policy_path), paths, cfg.oracle.horizon, cfg.oracle.warmup,
                        seed, cfg.confidence);
    label = *policy_path;
  } else {
    r = priority_cost_ci(sys, paths, cfg.oracle.horizon, cfg.oracle.warmup, seed, cfg.confidence);
  }
  const fs::path dir = prepare_out(cfg);
  json j = report_json(r);
  j["policy"] = label;
  j["preset"] = std::string(to_string(cfg.preset));
  j["confidence"] = cfg.confidence;
  if (cfg.format == OutputFormat::Json) {
    write_json(dir / "evaluate.json", j);
  } else {
    std::ofstream out(dir / "evaluate.csv");
    if (!out) throw std::runtime_error("cannot write " + (dir / "evaluate.csv").string());
    out.precision(17);
    out << "policy,preset,mean_cost,ci_low,ci_high,n_paths,correct_rate_pct,confidence\n"
        << label << ',' << to_string(cfg.preset) << ',' << r.mean_cost << ',' << r.ci_low << ','
        << r.ci_high << ',' << r.n_paths << ',' << r.correct_rate_pct << ',' << cfg.confidence << '\n';
  }
  std::cout << json{{"command", "evaluate"}, {"summary", j}}.dump() << '\n';
  return 0;
}

int cmd_train(const ExperimentConfig& cfg) {
  const fs::path dir = prepare_out(cfg);
  const ResultsBundle bundle = run_experiment(cfg, dir);
  emit_results(bundle, dir, cfg.format);
  json j{{"command", "train"}, {"out", dir.string()}, {"seeds", bundle.runs.size()},
         {"failures", bundle.failures.size()}};
  if (!bundle.aggregate.empty()) {
    j["final_mean_best_cost"] = bundle.aggregate.back().mean_best_cost;
    j["final_mean_max_correct_rate"] = bundle.aggregate.back().mean_max_correct_rate;
  }
  std::cout << j.dump() << '\n';
  return bundle.runs.empty() ? 1 : 0;
}

int cmd_covariance(const ExperimentConfig& cfg, const std::string& point,
                   const std::optional<std::string>& policy_path, double k, int reps) {
  const SystemConfig sys = cfg.system();
  PolicyParams policy = PolicyParams::zeros(sys.queues(), cfg.scale);
  if (point == "priority") {
    policy = theorem_sequence(sys.queues(), sys.capacity(), k, cfg.scale);
  } else if (point == "policy") {
    if (!policy_path) throw ConfigError("policy", "--point policy needs --policy PATH");
    policy = load_policy_file(*policy_path);
  } else if (point != "uniform") {
    throw ConfigError("point", "expected uniform|priority|policy, got '" + point + "'");
  }
  const auto cov = estimator_covariance(sys, policy, cfg.oracle, reps, cfg.seeds().front());
  const fs::path dir = prepare_out(cfg);
  for (const auto& [name, m] : {std::pair{"cov_fd.csv", &cov.fd}, std::pair{"cov_pg.csv", &cov.pg}}) {
    std::ofstream out(dir / name);
    if (!out) throw std::runtime_error("cannot write " + (dir / name).string());
    write_matrix_csv(out, *m);
  }
  json j{{"command", "covariance"},
         {"point", point},
         {"reps", reps},
         {"dimension", cov.fd.rows()},
         {"trace_fd", cov.fd.trace()},
         {"trace_pg", cov.pg.trace()},
         {"fd_paths_per_rep", cov.fd_paths_per_rep},
         {"pg_paths_per_rep", cov.pg_paths_per_rep}};
  if (point == "priority") j["k"] = k;
  write_json(dir / "covariance.json", j);
  std::cout << j.dump() << '\n';
  return 0;
}

int cmd_sweep(const ExperimentConfig& cfg, const SweepGrid& grid) {
  const fs::path dir = prepare_out(cfg);
  const auto points = run_sweep(cfg, grid, dir);
  std::ofstream out(dir / "sweep.csv");
  if (!out) throw std::runtime_error("cannot write " + (dir / "sweep.csv").string());
  out.precision(17);
  out << "alpha0,alpha_max,fd_step,final_mean_best_cost,final_mean_max_correct_rate\n";
  for (const auto& p : points) {
    out << p.alpha0 << ',' << p.alpha_max << ',' << p.fd_step << ',' << p.final_mean_best_cost << ','
        << p.final_mean_max_correct_rate << '\n';
  }
  std::cout << json{{"command", "sweep"}, {"out", dir.string()}, {"points", points.size()}}.dump() << '\n';
  return 0;
}

int fail(int code, const std::string& kind, const std::string& message, const std::string& field = "") {
  json j{{"error", kind}, {"message", message}};
  if (!field.empty()) j["field"] = field;
  std::cerr << j.dump() << '\n';
  return code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Queueing policy optimization experiments"};
  app.set_version_flag("--version", QPO_VERSION);
  app.require_subcommand(1);

  CommonFlags sim_f, eval_f, train_f, cov_f, sweep_f;
  std::optional<std::string> sim_policy, eval_policy, cov_policy;
  int sim_paths = 20, eval_paths = 1000, reps = 50;
  std::string point = "uniform";
  double k = kPriorityPointScale;
  SweepGrid grid;

  auto* sim = app.add_subcommand("simulate", "raw rollouts of a policy (uniform unless --policy)");
  add_common(sim, sim_f);
  sim->add_option("--policy", sim_policy, "policy checkpoint");
  sim->add_option("--paths", sim_paths, "number of rollouts")->check(CLI::PositiveNumber);

  auto* eval = app.add_subcommand("evaluate", "cost CI of the c-mu rule, or of a checkpoint with --policy");
  add_common(eval, eval_f);
  eval->add_option("--policy", eval_policy, "policy checkpoint");
  eval->add_option("--paths", eval_paths, "number of rollouts")->check(CLI::PositiveNumber);

  auto* train = app.add_subcommand("train", "ALOE runs over all seeds");
  add_common(train, train_f);

  auto* cov = app.add_subcommand("covariance", "covariance of the FD and PG estimators");
  add_common(cov, cov_f);
  cov->add_option("--point", point, "uniform|priority|policy");
  cov->add_option("--policy", cov_policy, "policy checkpoint for --point policy");
  cov->add_option("--k", k, "theorem-sequence scale for --point priority");
  cov->add_option("--reps", reps, "independent estimates per estimator")->check(CLI::Range(2, 1000000));

  auto* sweep = app.add_subcommand("sweep", "grid over alpha0, alpha_max and fd_step");
  add_common(sweep, sweep_f);
  sweep->add_option("--alpha0", grid.alpha0, "initial step sizes");
  sweep->add_option("--alpha-max", grid.alpha_max, "step size caps");
  sweep->add_option("--fd-step", grid.fd_step, "finite-difference steps");

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return fail(2, "usage", e.what());
  }

  try {
    if (*sim) return cmd_simulate(resolve(sim_f), sim_policy, sim_paths);
    if (*eval) return cmd_evaluate(resolve(eval_f), eval_policy, eval_paths);
    if (*train) return cmd_train(resolve(train_f));
    if (*cov) return cmd_covariance(resolve(cov_f), point, cov_policy, k, reps);
    if (*sweep) return cmd_sweep(resolve(sweep_f), grid);
  } catch (const ConfigError& e) {
    return fail(2, "config", e.what(), e.field());
  } catch (const std::exception& e) {
    return fail(1, "runtime", e.what());
  }
  return fail(2, "usage", "no subcommand");
}
