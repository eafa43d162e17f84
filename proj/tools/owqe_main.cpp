// owqe: train, evaluate and compare Online Weighted Q-Ensembles.
//
// Exit codes: 0 ok, 1 one or more runs failed (or an I/O error), 2 bad
// configuration or arguments.

#include <cstdlib>
#include <filesystem>
#include <iomanip>
#include <iostream>
#include <optional>

#include <CLI11.hpp>

#include "owqe/error.hpp"
#include "owqe/harness.hpp"
#include "owqe/plot.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace owqe;

namespace {

constexpr int kOk = 0;
constexpr int kRunFailures = 1;
constexpr int kConfigError = 2;

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  int jobs = 1;
};

std::uint64_t parse_seed(const std::string& text, const std::string& what) {
  try {
    std::size_t used = 0;
    const auto v = std::stoull(text, &used);
    if (used != text.size()) throw std::invalid_argument(text);
    return v;
  } catch (const std::exception&) {
    throw ConfigError(what + " must be a non-negative integer, got '" + text + "'");
  }
}

// Precedence for the base seed: --seed, then OWQE_SEED, then the config file.
ExperimentSpec load_spec(const Common& c) {
  if (c.config.empty()) throw ConfigError("--config is required");
  ExperimentSpec spec = parse_config_file(c.config);
  if (const char* env = std::getenv("OWQE_SEED"); env && *env) spec.seed = parse_seed(env, "OWQE_SEED");
  if (c.seed) spec.seed = *c.seed;
  if (!c.out.empty()) spec.out = c.out;
  return spec;
}

std::string cell_line(const json& cell) {
  std::ostringstream os;
  os << std::left << std::setw(12) << cell["environment"].get<std::string>() << std::setw(18)
     << cell["group"].get<std::string>() << std::setw(16) << cell["strategy"].get<std::string>();
  if (cell["mean"].is_null()) {
    os << "no completed runs";
  } else {
    os << std::fixed << std::setprecision(2) << cell["mean"].get<double>();
    if (!cell["halfwidth"].is_null()) os << " +- " << cell["halfwidth"].get<double>();
    os << "  (n=" << cell["n"].get<std::size_t>() << ")";
  }
  if (cell["failed_runs"].get<int>() > 0) os << "  failed=" << cell["failed_runs"].get<int>();
  return os.str();
}

void print_summary(const json& summary) {
  for (const auto& cell : summary["cells"]) std::cout << cell_line(cell) << "\n";
  if (summary.contains("regret")) {
    std::cout << "average relative regret:\n";
    for (const auto& [k, v] : summary["regret"].items()) std::cout << "  " << std::setw(16) << std::left << k << v.get<double>() << "\n";
  }
}

int cmd_train(const Common& c, bool quiet) {
  const ExperimentSpec spec = load_spec(c);
  const auto total = expand(spec).size();
  if (!quiet) std::cerr << "owqe: " << total << " runs, writing to " << spec.out << "\n";
  const MatrixResult result = run_matrix(spec, c.jobs, [quiet](const RunOutcome& o, std::size_t done, std::size_t n) {
    if (quiet) return;
    std::cerr << "[" << done << "/" << n << "] " << o.task.directory.string() << ": ";
    if (o.ok) {
      std::cerr << "final " << std::fixed << std::setprecision(2) << o.performance << "\n";
    } else {
      std::cerr << "FAILED (" << o.error << ")\n";
    }
  });
  std::ifstream in(fs::path(spec.out) / "summary.json");
  print_summary(json::parse(in));
  if (result.failures > 0) {
    std::cerr << "owqe: " << result.failures << " run(s) failed\n";
    return kRunFailures;
  }
  return kOk;
}

int cmd_evaluate(const Common& c, int random_episodes) {
  if (random_episodes > 0) {
    const ExperimentSpec spec = load_spec(c);
    json report = json::object();
    for (const auto& env : spec.environments) {
      const double p = random_policy_performance(env, random_episodes, spec.seed);
      report[env] = p;
      std::cout << std::left << std::setw(12) << env << "random policy " << std::fixed << std::setprecision(2) << p
                << " (" << random_episodes << " episodes)\n";
    }
    if (!c.out.empty()) write_text(fs::path(c.out) / "random_baseline.json", dump_json(report));
    return kOk;
  }
  if (c.out.empty()) throw ConfigError("--out (a results directory) is required");
  std::vector<RunOutcome> runs;
  for (const auto& dir : find_run_directories(c.out)) runs.push_back(load_run(dir));
  if (runs.empty()) throw ConfigError("no run directories under " + c.out);
  const json summary = matrix_summary(runs);
  write_text(fs::path(c.out) / "evaluation.json", dump_json(summary));
  print_summary(summary);
  int failed = 0;
  for (const auto& r : runs) failed += r.ok ? 0 : 1;
  return failed ? kRunFailures : kOk;
}

int cmd_regret(const Common& c, const std::string& table_path) {
  fs::path table = table_path;
  if (table.empty()) {
    if (c.out.empty()) throw ConfigError("give --out (results directory) or --table (perf_table.csv)");
    table = fs::path(c.out) / "perf_table.csv";
  }
  const PerfTable t = read_perf_table(table);
  if (const auto gaps = t.missing(); !gaps.empty()) {
    std::cerr << "owqe: incomplete performance table:\n";
    for (const auto& [e, g, k] : gaps) std::cerr << "  " << e << " / " << g << " / " << k << "\n";
    return kRunFailures;
  }
  const json report = regret_report(t);
  if (report.is_null()) throw ConfigError("regret needs at least two strategies");
  for (const auto& [k, v] : report.items()) std::cout << std::setw(16) << std::left << k << v.get<double>() << "\n";
  write_text(table.parent_path() / "regret.json", dump_json(report));
  return kOk;
}

int cmd_sample(const Common& c, int count) {
  std::uint64_t seed = 1;
  if (const char* env = std::getenv("OWQE_SEED"); env && *env) seed = parse_seed(env, "OWQE_SEED");
  if (c.seed) seed = *c.seed;
  Rng rng(seed);
  json out = json::array();
  for (int i = 0; i < count; ++i) out.push_back(to_json(sample_parameterization(rng)));
  const std::string text = dump_json(out);
  if (!c.out.empty()) {
    write_text(c.out, text);
  } else {
    std::cout << text;
  }
  return kOk;
}

int cmd_plot(const Common& c) {
  if (c.out.empty()) throw ConfigError("--out (a results directory) is required");
  for (const auto& p : emit_plots(c.out)) std::cout << p.string() << "\n";
  return kOk;
}

void add_common(CLI::App* app, Common& c, bool config, bool seed, bool jobs) {
  if (config) app->add_option("--config", c.config, "Experiment config (JSON)")->check(CLI::ExistingFile);
  if (seed) {
    app->add_option_function<std::uint64_t>("--seed", [&c](std::uint64_t s) { c.seed = s; },
                                            "Base seed (overrides OWQE_SEED and the config)");
  }
  app->add_option("--out", c.out, "Output directory");
  if (jobs) app->add_option("--jobs", c.jobs, "Parallel runs")->check(CLI::PositiveNumber);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Online Weighted Q-Ensemble experiments"};
  app.require_subcommand(1);
  Common common;

  auto* train = app.add_subcommand("train", "Run the experiment matrix of a config");
  add_common(train, common, true, true, true);
  bool quiet = false;
  train->add_flag("--quiet", quiet, "No per-run progress");

  auto* evaluate = app.add_subcommand("evaluate", "Recompute summaries of a results directory, or a random baseline");
  add_common(evaluate, common, true, true, false);
  int random_episodes = 0;
  evaluate->add_option("--random", random_episodes, "Evaluate a uniform random policy for N episodes per environment");

  auto* regret = app.add_subcommand("regret", "Average relative regret from perf_table.csv");
  add_common(regret, common, false, false, false);
  std::string table;
  regret->add_option("--table", table, "Path to perf_table.csv");

  auto* sample = app.add_subcommand("sample-params", "Draw random parameterizations");
  add_common(sample, common, false, true, false);
  int count = 1;
  sample->add_option("--count", count, "Number of draws")->check(CLI::PositiveNumber);

  auto* plot = app.add_subcommand("plot", "Render SVG plots for a results directory");
  add_common(plot, common, false, false, false);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfigError;
  }

  try {
    if (train->parsed()) return cmd_train(common, quiet);
    if (evaluate->parsed()) return cmd_evaluate(common, random_episodes);
    if (regret->parsed()) return cmd_regret(common, table);
    if (sample->parsed()) return cmd_sample(common, count);
    if (plot->parsed()) return cmd_plot(common);
  } catch (const ConfigError& e) {
    std::cerr << "owqe: configuration error: " << e.what() << "\n";
    return kConfigError;
  } catch (const std::exception& e) {
    std::cerr << "owqe: " << e.what() << "\n";
    return kRunFailures;
  }
  return kOk;
}
