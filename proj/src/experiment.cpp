#include "qpo/experiment.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>

namespace qpo {
namespace {

std::string trim(std::string_view text) {
  const auto first = text.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = text.find_last_not_of(" \t\r\n");
  return std::string(text.substr(first, last - first + 1));
}

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

double parse_double(const std::string& key, const std::string& value) {
  try {
    std::size_t used = 0;
    const double v = std::stod(value, &used);
    if (used != value.size()) throw std::invalid_argument("trailing characters");
    return v;
  } catch (const std::exception&) {
    throw ConfigError(key, "expected a number, got '" + value + "'");
  }
}

long long parse_integer(const std::string& key, const std::string& value) {
  try {
    std::size_t used = 0;
    const long long v = std::stoll(value, &used);
    if (used != value.size()) throw std::invalid_argument("trailing characters");
    return v;
  } catch (const std::exception&) {
    throw ConfigError(key, "expected an integer, got '" + value + "'");
  }
}

int parse_int(const std::string& key, const std::string& value) {
  const long long v = parse_integer(key, value);
  if (v < std::numeric_limits<int>::min() || v > std::numeric_limits<int>::max()) {
    throw ConfigError(key, "integer out of range");
  }
  return static_cast<int>(v);
}

Seed parse_seed(const std::string& key, const std::string& value) {
  try {
    std::size_t used = 0;
    const unsigned long long v = std::stoull(value, &used, 0);
    if (used != value.size() || value.front() == '-') throw std::invalid_argument("bad seed");
    return static_cast<Seed>(v);
  } catch (const std::exception&) {
    throw ConfigError(key, "expected an unsigned 64-bit integer, got '" + value + "'");
  }
}

bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1" || value == "on" || value == "yes") return true;
  if (value == "false" || value == "0" || value == "off" || value == "no") return false;
  throw ConfigError(key, "expected true or false, got '" + value + "'");
}

std::vector<std::string> split_list(const std::string& value) {
  std::vector<std::string> out;
  std::stringstream ss(value);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

std::vector<double> parse_list(const std::string& key, const std::string& value) {
  std::vector<double> out;
  for (const auto& item : split_list(value)) out.push_back(parse_double(key, item));
  if (out.empty()) throw ConfigError(key, "expected a comma-separated list of numbers");
  return out;
}

std::string join(const std::vector<double>& values) {
  std::string out;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i) out += ',';
    out += format_double(values[i]);
  }
  return out;
}

}  // namespace

// ---------------------------------------------------------------------------
// Presets and exact load arithmetic

std::string_view to_string(Preset preset) {
  switch (preset) {
    case Preset::Low: return "low";
    case Preset::Medium: return "medium";
    case Preset::Balanced: return "balanced";
    case Preset::Heavy: return "heavy";
    case Preset::Custom: return "custom";
  }
  return "custom";
}

Preset parse_preset(std::string_view text) {
  if (text == "low") return Preset::Low;
  if (text == "medium") return Preset::Medium;
  if (text == "balanced") return Preset::Balanced;
  if (text == "heavy") return Preset::Heavy;
  if (text == "custom") return Preset::Custom;
  throw ConfigError("preset", "expected low|medium|balanced|heavy|custom, got '" +
                                  std::string(text) + "'");
}

Rational Rational::make(std::int64_t num, std::int64_t den) {
  if (den == 0) throw std::domain_error("rational with zero denominator");
  if (den < 0) {
    num = -num;
    den = -den;
  }
  const std::int64_t g = std::gcd(num, den);
  return {num / g, den / g};
}

Rational Rational::from_double(double value) {
  if (!std::isfinite(value) || std::abs(value) > 1e9) {
    throw std::domain_error("value has no exact small rational form");
  }
  std::int64_t scale = 1;
  for (int digits = 0; digits <= 9; ++digits, scale *= 10) {
    const double scaled = std::round(value * static_cast<double>(scale));
    if (scaled / static_cast<double>(scale) == value) {
      return make(static_cast<std::int64_t>(scaled), scale);
    }
  }
  throw std::domain_error("value " + format_double(value) + " is not a short decimal");
}

Rational Rational::operator+(const Rational& o) const {
  const std::int64_t g = std::gcd(den, o.den);
  return make(num * (o.den / g) + o.num * (den / g), den / g * o.den);
}

Rational Rational::operator/(const Rational& o) const {
  if (o.num == 0) throw std::domain_error("rational division by zero");
  return make(num * o.den, den * o.num);
}

std::vector<double> preset_service_rates(Preset preset) {
  switch (preset) {
    case Preset::Low: return {18.0, 9.0, 6.0};
    case Preset::Medium: return {9.0, 4.5, 3.0};
    case Preset::Balanced: return {6.0, 3.0, 2.0};
    case Preset::Heavy: return {3.0, 2.0, 1.0};
    case Preset::Custom: break;
  }
  throw ConfigError("preset", "custom preset has no built-in service rates");
}

Rational preset_load(Preset preset) {
  switch (preset) {
    case Preset::Low: return Rational::make(1, 3);
    case Preset::Medium: return Rational::make(2, 3);
    case Preset::Balanced: return Rational::make(1, 1);
    case Preset::Heavy: return Rational::make(11, 6);
    case Preset::Custom: break;
  }
  throw ConfigError("preset", "custom preset has no nominal load");
}

Rational exact_load(const std::vector<double>& lambdas, const std::vector<double>& mus) {
  Rational rho = Rational::make(0, 1);
  for (std::size_t i = 0; i < mus.size(); ++i) {
    rho = rho + Rational::from_double(lambdas[i]) / Rational::from_double(mus[i]);
  }
  return rho;
}

std::string_view to_string(OutputFormat format) {
  return format == OutputFormat::Csv ? "csv" : "json";
}

OutputFormat parse_format(std::string_view text) {
  if (text == "csv") return OutputFormat::Csv;
  if (text == "json") return OutputFormat::Json;
  throw ConfigError("format", "expected csv or json, got '" + std::string(text) + "'");
}

// ---------------------------------------------------------------------------
// Configuration

SystemConfig ExperimentConfig::system() const {
  std::vector<double> mu_values;
  if (mus) {
    mu_values = *mus;
  } else if (preset != Preset::Custom) {
    mu_values = preset_service_rates(preset);
  } else {
    throw ConfigError("mus", "custom preset requires service rates");
  }
  const std::size_t m = mu_values.size();
  SystemConfig sys(lambdas.value_or(std::vector<double>(m, 1.0)), std::move(mu_values),
                   costs.value_or(std::vector<double>(m, 1.0)), capacity);
  if (uniformization_rate) return sys.with_uniformization_rate(*uniformization_rate);
  return sys;
}

std::vector<Seed> ExperimentConfig::seeds() const {
  if (!seed_list.empty()) return seed_list;
  std::vector<Seed> out(seed_count);
  for (int i = 0; i < seed_count; ++i) out[i] = seed_root + static_cast<Seed>(i);
  return out;
}

void apply_setting(ExperimentConfig& cfg, const std::string& raw_key, const std::string& raw_value) {
  const std::string key = trim(raw_key);
  const std::string value = trim(raw_value);
  if (key == "preset") cfg.preset = parse_preset(value);
  else if (key == "scale") cfg.scale = parse_scale(value);
  else if (key == "estimator") cfg.estimator = parse_estimator(value);
  else if (key == "seeds") {
    cfg.seed_count = parse_int(key, value);
    cfg.seed_list.clear();
  } else if (key == "seed_list") {
    cfg.seed_list.clear();
    for (const auto& item : split_list(value)) cfg.seed_list.push_back(parse_seed(key, item));
    if (cfg.seed_list.empty()) throw ConfigError(key, "expected a comma-separated list of seeds");
  } else if (key == "seed_root") cfg.seed_root = parse_seed(key, value);
  else if (key == "lambdas") cfg.lambdas = parse_list(key, value);
  else if (key == "mus") cfg.mus = parse_list(key, value);
  else if (key == "costs") cfg.costs = parse_list(key, value);
  else if (key == "capacity") cfg.capacity = parse_int(key, value);
  else if (key == "uniformization_rate") cfg.uniformization_rate = parse_double(key, value);
  else if (key == "n_paths") cfg.oracle.n_paths = parse_int(key, value);
  else if (key == "horizon") cfg.oracle.horizon = parse_int(key, value);
  else if (key == "warmup") cfg.oracle.warmup = parse_int(key, value);
  else if (key == "fd_step") cfg.oracle.fd_step = parse_double(key, value);
  else if (key == "pg_paths") {
    if (value == "auto") cfg.oracle.pg_paths.reset();
    else cfg.oracle.pg_paths = parse_int(key, value);
  } else if (key == "crn") cfg.oracle.common_random_numbers = parse_bool(key, value);
  else if (key == "average_score") cfg.oracle.average_score = parse_bool(key, value);
  else if (key == "eps_f") cfg.aloe.eps_f = parse_double(key, value);
  else if (key == "alpha_max") cfg.aloe.alpha_max = parse_double(key, value);
  else if (key == "alpha0") cfg.aloe.alpha0 = parse_double(key, value);
  else if (key == "armijo_theta") cfg.aloe.theta = parse_double(key, value);
  else if (key == "gamma") cfg.aloe.gamma = parse_double(key, value);
  else if (key == "iters") cfg.aloe.max_iters = parse_int(key, value);
  else if (key == "correct_rate_every") cfg.correct_rate_every = parse_int(key, value);
  else if (key == "eval_paths") cfg.eval_paths = parse_int(key, value);
  else if (key == "confidence") cfg.confidence = parse_double(key, value);
  else if (key == "out") cfg.out_dir = value;
  else if (key == "format") cfg.format = parse_format(value);
  else throw ConfigError(key, "unknown configuration key");
}

std::vector<Setting> parse_settings(std::istream& in) {
  std::vector<Setting> out;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    if (trim(line).empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("line " + std::to_string(line_no), "expected 'key = value'");
    }
    out.emplace_back(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  return out;
}

void validate(const ExperimentConfig& cfg) {
  if (cfg.seed_count < 1 && cfg.seed_list.empty()) throw ConfigError("seeds", "must be >= 1");
  const SystemConfig sys = cfg.system();
  cfg.oracle.validate();
  cfg.aloe.validate();
  if (cfg.correct_rate_every < 0) throw ConfigError("correct_rate_every", "must be >= 0");
  if (cfg.eval_paths < 1) throw ConfigError("eval_paths", "must be >= 1");
  if (!(cfg.confidence > 0.0 && cfg.confidence < 1.0)) {
    throw ConfigError("confidence", "must lie in (0, 1)");
  }
  if (cfg.preset != Preset::Custom) {
    Rational rho;
    try {
      rho = exact_load(sys.lambdas(), sys.mus());
    } catch (const std::domain_error& e) {
      throw ConfigError("mus", e.what());
    }
    const Rational expected = preset_load(cfg.preset);
    if (!(rho == expected)) {
      throw ConfigError("mus", "load " + std::to_string(rho.num) + "/" + std::to_string(rho.den) +
                                   " does not match preset " + std::string(to_string(cfg.preset)) +
                                   " load " + std::to_string(expected.num) + "/" +
                                   std::to_string(expected.den));
    }
  }
}

ExperimentConfig load_config(const std::optional<std::filesystem::path>& file,
                             const std::vector<Setting>& flags) {
  ExperimentConfig cfg;
  if (file) {
    std::ifstream in(*file);
    if (!in) throw ConfigError("config", "cannot open " + file->string());
    for (const auto& [k, v] : parse_settings(in)) apply_setting(cfg, k, v);
  }
  for (const auto& [k, v] : flags) apply_setting(cfg, k, v);
  validate(cfg);
  return cfg;
}

std::string to_text(const ExperimentConfig& cfg) {
  std::ostringstream out;
  out << "preset = " << to_string(cfg.preset) << '\n';
  out << "scale = " << to_string(cfg.scale) << '\n';
  out << "estimator = " << to_string(cfg.estimator) << '\n';
  if (cfg.seed_list.empty()) {
    out << "seeds = " << cfg.seed_count << '\n';
  } else {
    out << "seed_list = ";
    for (std::size_t i = 0; i < cfg.seed_list.size(); ++i) out << (i ? "," : "") << cfg.seed_list[i];
    out << '\n';
  }
  out << "seed_root = " << cfg.seed_root << '\n';
  if (cfg.lambdas) out << "lambdas = " << join(*cfg.lambdas) << '\n';
  if (cfg.mus) out << "mus = " << join(*cfg.mus) << '\n';
  if (cfg.costs) out << "costs = " << join(*cfg.costs) << '\n';
  out << "capacity = " << cfg.capacity << '\n';
  if (cfg.uniformization_rate) {
    out << "uniformization_rate = " << format_double(*cfg.uniformization_rate) << '\n';
  }
  out << "n_paths = " << cfg.oracle.n_paths << '\n';
  out << "horizon = " << cfg.oracle.horizon << '\n';
  out << "warmup = " << cfg.oracle.warmup << '\n';
  out << "fd_step = " << format_double(cfg.oracle.fd_step) << '\n';
  out << "pg_paths = " << (cfg.oracle.pg_paths ? std::to_string(*cfg.oracle.pg_paths) : "auto") << '\n';
  out << "crn = " << (cfg.oracle.common_random_numbers ? "true" : "false") << '\n';
  out << "average_score = " << (cfg.oracle.average_score ? "true" : "false") << '\n';
  out << "eps_f = " << format_double(cfg.aloe.eps_f) << '\n';
  out << "alpha_max = " << format_double(cfg.aloe.alpha_max) << '\n';
  out << "alpha0 = " << format_double(cfg.aloe.alpha0) << '\n';
  out << "armijo_theta = " << format_double(cfg.aloe.theta) << '\n';
  out << "gamma = " << format_double(cfg.aloe.gamma) << '\n';
  out << "iters = " << cfg.aloe.max_iters << '\n';
  out << "correct_rate_every = " << cfg.correct_rate_every << '\n';
  out << "eval_paths = " << cfg.eval_paths << '\n';
  out << "confidence = " << format_double(cfg.confidence) << '\n';
  out << "out = " << cfg.out_dir << '\n';
  out << "format = " << to_string(cfg.format) << '\n';
  return out.str();
}

std::string config_hash(const ExperimentConfig& cfg) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : to_text(cfg)) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

// ---------------------------------------------------------------------------
// Runs

std::vector<AggregateRow> aggregate_runs(const std::vector<RunRecord>& runs, int iters) {
  std::vector<AggregateRow> rows(iters);
  std::vector<double> running_max(runs.size(), -std::numeric_limits<double>::infinity());
  for (int k = 0; k < iters; ++k) {
    AggregateRow& row = rows[k];
    row.iter = k;
    row.max_correct_rate = 0.0;
    double best_sum = 0.0;
    double rate_sum = 0.0;
    for (std::size_t r = 0; r < runs.size(); ++r) {
      if (static_cast<int>(runs[r].rows.size()) <= k) continue;
      const auto& it = runs[r].rows[k];
      running_max[r] = std::max(running_max[r], it.correct_rate_sampled);
      best_sum += it.best_cost;
      rate_sum += running_max[r];
      row.max_correct_rate = std::max(row.max_correct_rate, running_max[r]);
      ++row.seeds;
    }
    if (row.seeds > 0) {
      row.mean_best_cost = best_sum / row.seeds;
      row.mean_max_correct_rate = rate_sum / row.seeds;
    }
  }
  return rows;
}

ResultsBundle run_experiment(const ExperimentConfig& cfg,
                             const std::optional<std::filesystem::path>& stream_dir) {
  validate(cfg);
  const SystemConfig sys = cfg.system();
  ResultsBundle bundle;
  bundle.config = cfg;
  bundle.rollouts_per_iteration =
      gradient_paths(cfg.estimator, sys.queues(), cfg.oracle) + 2L * cfg.oracle.n_paths;
  if (stream_dir) std::filesystem::create_directories(*stream_dir);

  for (Seed seed : cfg.seeds()) {
    std::ofstream stream;
    RunOptions options;
    options.correct_rate_every = cfg.correct_rate_every;
    options.eval_paths = cfg.eval_paths;
    if (stream_dir) {
      const auto path = *stream_dir / ("run_" + std::to_string(seed) + ".csv");
      stream.open(path);
      if (!stream) throw std::runtime_error("cannot write " + path.string());
      write_run_csv_header(stream);
      options.on_row = [&stream, seed](const IterationRecord& row) {
        write_run_csv_row(stream, row, seed);
        stream.flush();
      };
    }
    try {
      bundle.runs.push_back(run(sys, PolicyParams::zeros(sys.queues(), cfg.scale), cfg.estimator,
                                cfg.oracle, cfg.aloe, seed, options));
    } catch (const std::exception& e) {
      bundle.failures.push_back({seed, e.what()});
    }
  }
  bundle.aggregate = aggregate_runs(bundle.runs, cfg.aloe.max_iters);
  return bundle;
}

std::vector<SweepPoint> run_sweep(const ExperimentConfig& cfg, const SweepGrid& grid,
                                  const std::optional<std::filesystem::path>& out_dir) {
  std::vector<SweepPoint> points;
  for (double a0 : grid.alpha0) {
    for (double amax : grid.alpha_max) {
      if (!(a0 < amax)) continue;
      for (double u : grid.fd_step) {
        ExperimentConfig point = cfg;
        point.aloe.alpha0 = a0;
        point.aloe.alpha_max = amax;
        point.oracle.fd_step = u;
        std::optional<std::filesystem::path> dir;
        if (out_dir) {
          dir = *out_dir / ("a0_" + format_double(a0) + "_amax_" + format_double(amax) + "_u_" +
                            format_double(u));
        }
        const ResultsBundle bundle = run_experiment(point, dir);
        if (dir) emit_results(bundle, *dir, point.format);
        SweepPoint sp{a0, amax, u, std::numeric_limits<double>::quiet_NaN(),
                      std::numeric_limits<double>::quiet_NaN()};
        if (!bundle.aggregate.empty() && bundle.aggregate.back().seeds > 0) {
          sp.final_mean_best_cost = bundle.aggregate.back().mean_best_cost;
          sp.final_mean_max_correct_rate = bundle.aggregate.back().mean_max_correct_rate;
        }
        points.push_back(sp);
      }
    }
  }
  return points;
}

}  // namespace qpo
