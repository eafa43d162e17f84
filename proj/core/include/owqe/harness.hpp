#pragma once

// Experiment orchestration: configs, ensemble groups, the run matrix and its
// output files.
//
// Output layout under `out`:
//   <env>/<group>/<strategy>/run_<k>/{config.json, curves.csv, weights.csv, actions.csv, summary.json}
//   perf_table.csv, summary.json, regret.json

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "owqe/agent.hpp"
#include "owqe/ensemble.hpp"
#include "owqe/metrics.hpp"

namespace owqe {

/// Allowed values for every varied hyperparameter; the remaining fields are
/// pinned (discount 0.99, reward scale 0.01, tau 0.01).
struct ParameterDomain {
  static const std::vector<int> target_update_interval;
  static const std::vector<double> learning_rate;
  static const std::vector<int> replay_steps;
  static const std::vector<int> minibatch_size;
  static const std::vector<int> layer_size;
  static const std::vector<Activation> activation;
};

/// Throws ValidationError naming `field` (e.g. "group[2].learning_rate") when
/// a value lies outside its domain or replay_steps is not a multiple of
/// minibatch_size.
void validate_domain(const HyperParams& hp, const std::string& field);

/// Uniform independent draws from each domain. Draws whose replay_steps is
/// not a multiple of minibatch_size are redrawn.
HyperParams sample_parameterization(Rng& rng);

inline constexpr const char* kPresetGroups[] = {"ThreeGood", "OneGoodOneBad", "OneGoodThreeBad",
                                                "OneGoodSevenBad"};

/// Curated good/bad parameterizations for one environment.
struct PresetFile {
  std::string environment;
  std::vector<HyperParams> good;
  std::vector<HyperParams> bad;
  std::optional<double> best_search_performance;
  std::optional<double> random_performance;
  int episodes = 0;  // episode count the reference values were measured at

  /// ThreeGood = good[0..2], OneGoodOneBad = good[0] + bad[0],
  /// OneGoodThreeBad = good[0] + bad[0..2], OneGoodSevenBad = good[0] + bad[0..6],
  /// SingleGood = good[0].
  std::vector<HyperParams> group(const std::string& name) const;
};

PresetFile preset_from_json(const nlohmann::json& doc);

/// Directory holding <env>.json preset files: $OWQE_PRESETS_DIR, else the
/// source tree's configs/presets, else the installed share/owqe/presets.
std::filesystem::path presets_directory();
PresetFile load_preset(const std::string& environment);
PresetFile load_preset(const std::string& environment, const std::filesystem::path& dir);

/// One ensemble composition: a preset name, explicit member lists, or
/// `count` random parameterizations drawn from `seed`.
struct GroupSpec {
  enum class Kind { Preset, Explicit, Random };
  Kind kind = Kind::Preset;
  std::string name;
  /// Explicit members per environment; the "" key applies to every environment.
  std::map<std::string, std::vector<HyperParams>> members;
  int count = 0;
  std::uint64_t seed = 0;

  bool operator==(const GroupSpec&) const = default;
};

struct ExperimentSpec {
  std::vector<std::string> environments;
  std::vector<GroupSpec> groups;
  std::vector<Strategy> strategies;
  TrainingMode mode = TrainingMode::Online;
  std::map<std::string, int> episodes;  // per environment
  int runs = 10;
  int first_run = 0;
  std::uint64_t seed = 1;
  std::string out = "results";
  int observation_steps = 1000;
  double weight_learning_rate = 1e-3;
  int weight_batch_size = 64;

  bool operator==(const ExperimentSpec&) const = default;
};

/// Default episode counts: pendulum 300, cartpole 500, others 300.
int default_episodes(const std::string& environment);

/// Accepts "env" (string or list), "group" or "groups" (preset name, member
/// list, {"count","seed"} object, or a list of those; list entries may be
/// {"name","members"} objects), "strategies", "mode", "episodes" (number or
/// per-environment object), "runs", "first_run", "seed", "out",
/// "observation_steps", "weight_learning_rate", "weight_batch_size".
/// Throws ValidationError naming the field.
ExperimentSpec parse_config(const nlohmann::json& doc);
ExperimentSpec parse_config_file(const std::filesystem::path& path);

/// Fully resolved form: every default filled in, every group expanded to
/// explicit per-environment member lists. parse_config(resolved_config(s))
/// describes the same runs as `s`.
nlohmann::json resolved_config(const ExperimentSpec& spec);

std::vector<HyperParams> resolve_group(const GroupSpec& group, const std::string& environment);

/// One (environment, group, strategy, run) cell of the matrix.
struct RunTask {
  std::string environment;
  std::string group;
  std::vector<HyperParams> members;
  Strategy strategy = Strategy::SoftmaxTDError;
  int run_index = 0;
  int episodes = 0;
  std::filesystem::path directory;
};

std::vector<RunTask> expand(const ExperimentSpec& spec);

/// Seed of run k: derived from the base seed and k only, so every strategy
/// and group sees the same agent initializations for a given run.
std::uint64_t run_seed(std::uint64_t base, int run_index);

struct RunOutcome {
  RunTask task;
  RunRecord record;
  double performance = 0.0;
  bool ok = false;
  std::string error;
};

/// Trains one cell without touching the filesystem.
RunOutcome execute_run(const RunTask& task, const ExperimentSpec& spec);

void write_run_outputs(const RunOutcome& outcome, const ExperimentSpec& spec);

struct MatrixResult {
  std::vector<RunOutcome> runs;  // in expand() order
  PerfTable table;               // mean performance over runs per cell
  int failures = 0;
};

using ProgressFn = std::function<void(const RunOutcome&, std::size_t done, std::size_t total)>;

/// Executes every task on `jobs` worker threads, writes per-run outputs and
/// the aggregate files. Failed runs are recorded and skipped.
MatrixResult run_matrix(const ExperimentSpec& spec, int jobs = 1, const ProgressFn& progress = {});

/// Aggregate summary: per cell mean, 95% halfwidth (when >= 2 runs), median,
/// per-run performances, and the regret of each strategy when the table is
/// complete with at least two strategies.
nlohmann::json matrix_summary(const std::vector<RunOutcome>& runs);
nlohmann::json regret_report(const PerfTable& table);

/// Re-reads perf_table.csv (environment, group, strategy, seed, performance)
/// into per-cell means.
PerfTable read_perf_table(const std::filesystem::path& csv);

/// Reads the curves.csv of a run directory.
std::vector<double> read_curve(const std::filesystem::path& run_dir);

struct NumericTable {
  std::vector<std::string> header;
  std::vector<std::vector<double>> rows;
};

/// Reads a CSV with a header row and numeric fields.
NumericTable read_numeric_csv(const std::filesystem::path& csv);

/// Directories below `root` holding a run's summary.json, in sorted order.
std::vector<std::filesystem::path> find_run_directories(const std::filesystem::path& root);

/// Rebuilds a run's outcome from its directory (config.json, summary.json,
/// curves.csv, weights.csv, actions.csv), recomputing the final performance.
RunOutcome load_run(const std::filesystem::path& run_dir);

/// Mean reward of `episodes` episodes of a uniform random policy.
double random_policy_performance(const std::string& environment, int episodes, std::uint64_t seed);

/// Writes `text` to `path` (creating parent directories).
void write_text(const std::filesystem::path& path, const std::string& text);

/// Canonical JSON text used for every file the harness writes.
std::string dump_json(const nlohmann::json& doc);

}  // namespace owqe
