#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "qpo/aloe.hpp"
#include "qpo/gradients.hpp"
#include "qpo/policy.hpp"
#include "qpo/queue_env.hpp"

namespace qpo {

enum class Preset { Low, Medium, Balanced, Heavy, Custom };

std::string_view to_string(Preset preset);
Preset parse_preset(std::string_view text);

/// Exact fraction with a positive denominator, always reduced.
struct Rational {
  std::int64_t num = 0;
  std::int64_t den = 1;

  static Rational make(std::int64_t num, std::int64_t den);
  /// Exact value of a decimal-representable double (denominators up to 10^9).
  static Rational from_double(double value);
  Rational operator+(const Rational& o) const;
  Rational operator/(const Rational& o) const;
  bool operator==(const Rational&) const = default;
  double value() const { return static_cast<double>(num) / static_cast<double>(den); }
};

/// Service rates of a preset (arrivals and holding costs are all ones).
std::vector<double> preset_service_rates(Preset preset);
/// The load each preset must produce: 1/3, 2/3, 1, 11/6.
Rational preset_load(Preset preset);
/// sum lambda_i / mu_i in exact arithmetic.
Rational exact_load(const std::vector<double>& lambdas, const std::vector<double>& mus);

enum class OutputFormat { Csv, Json };
std::string_view to_string(OutputFormat format);
OutputFormat parse_format(std::string_view text);

/// Full experiment description. System vectors left unset fall back to the
/// preset (lambda = c = 1, m = 3).
struct ExperimentConfig {
  Preset preset = Preset::Low;
  Scale scale = Scale::Log;
  Estimator estimator = Estimator::PG;
  int seed_count = 5;
  std::vector<Seed> seed_list;  ///< explicit seeds; overrides seed_count
  Seed seed_root = 1;

  std::optional<std::vector<double>> lambdas;
  std::optional<std::vector<double>> mus;
  std::optional<std::vector<double>> costs;
  int capacity = 100;
  std::optional<double> uniformization_rate;

  OracleConfig oracle;
  AloeConfig aloe;
  int correct_rate_every = 10;
  int eval_paths = 20;
  double confidence = 0.95;

  std::string out_dir = "results";
  OutputFormat format = OutputFormat::Csv;

  SystemConfig system() const;
  std::vector<Seed> seeds() const;
};

using Setting = std::pair<std::string, std::string>;

/// Applies one `key = value` setting. Unknown keys and unparsable values
/// raise ConfigError naming the key.
void apply_setting(ExperimentConfig& cfg, const std::string& key, const std::string& value);

/// Parses a flat `key = value` file (`#` starts a comment).
std::vector<Setting> parse_settings(std::istream& in);

/// Checks every invariant, including that a preset's load matches its
/// nominal value exactly.
void validate(const ExperimentConfig& cfg);

/// defaults < file < flags, then validate.
ExperimentConfig load_config(const std::optional<std::filesystem::path>& file,
                             const std::vector<Setting>& flags);

/// Canonical `key = value` dump; feeding it back to load_config reproduces
/// the config.
std::string to_text(const ExperimentConfig& cfg);

/// FNV-1a of to_text, as 16 hex digits.
std::string config_hash(const ExperimentConfig& cfg);

struct AggregateRow {
  int iter = 0;
  double mean_best_cost = 0.0;
  double mean_max_correct_rate = 0.0;  ///< mean over seeds of each seed's running max
  double max_correct_rate = 0.0;       ///< max over seeds of the running max
  int seeds = 0;

  bool operator==(const AggregateRow&) const = default;
};

struct SeedFailure {
  Seed seed;
  std::string message;
};

struct ResultsBundle {
  ExperimentConfig config;
  std::vector<RunRecord> runs;
  std::vector<AggregateRow> aggregate;
  std::vector<SeedFailure> failures;
  long rollouts_per_iteration = 0;
};

/// Per-iteration mean best cost and correct-rate summaries across runs.
std::vector<AggregateRow> aggregate_runs(const std::vector<RunRecord>& runs, int iters);

/// One ALOE run per seed from theta = 0. When `stream_dir` is set, rows are
/// appended to run_<seed>.csv there as they are produced. A failing seed is
/// recorded and does not stop the others.
ResultsBundle run_experiment(const ExperimentConfig& cfg,
                             const std::optional<std::filesystem::path>& stream_dir = {});

/// Column order of run files.
inline constexpr std::string_view kRunColumns =
    "iter,alpha,success,cost_eval,best_cost,correct_rate_sampled,correct_rate_argmax,grad_norm,seed";

void write_run_csv_header(std::ostream& out);
void write_run_csv_row(std::ostream& out, const IterationRecord& row, Seed seed);
void write_run_csv(std::ostream& out, const RunRecord& run);
std::vector<IterationRecord> read_run_csv(std::istream& in, Seed* seed = nullptr);
std::string run_json(const RunRecord& run);
std::vector<IterationRecord> read_run_json(std::istream& in, Seed* seed = nullptr);

/// Writes run_<seed>.{csv,json}, policy_<seed>.txt, aggregate.{csv,json} and
/// metadata.json into `dir`. Returns the files written.
std::vector<std::filesystem::path> emit_results(const ResultsBundle& bundle,
                                                const std::filesystem::path& dir,
                                                OutputFormat format);

/// Reads a bundle back from `dir` (runs, final policies and aggregate).
ResultsBundle read_results(const std::filesystem::path& dir, OutputFormat format);

void write_matrix_csv(std::ostream& out, const Eigen::MatrixXd& matrix);
Eigen::MatrixXd read_matrix_csv(std::istream& in);

struct SweepPoint {
  double alpha0 = 0.0;
  double alpha_max = 0.0;
  double fd_step = 0.0;
  double final_mean_best_cost = 0.0;
  double final_mean_max_correct_rate = 0.0;
};

struct SweepGrid {
  std::vector<double> alpha0{0.001, 0.01, 0.1};
  std::vector<double> alpha_max{0.5, 1.0, 2.0};
  std::vector<double> fd_step{0.1};
};

/// Runs the experiment at every grid point with alpha0 < alpha_max.
std::vector<SweepPoint> run_sweep(const ExperimentConfig& cfg, const SweepGrid& grid,
                                  const std::optional<std::filesystem::path>& out_dir = {});

}  // namespace qpo
