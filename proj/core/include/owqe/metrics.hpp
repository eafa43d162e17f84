#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <tuple>
#include <vector>

namespace owqe {

/// Everything recorded by one training run.
struct RunRecord {
  std::vector<double> episode_rewards;         // cumulative raw reward per episode
  std::vector<std::vector<double>> weights;    // normalized critic weights at episode end
  std::vector<std::vector<long>> action_counts;  // per episode, how often each actor's action was executed
  std::vector<int> behavior_actor;             // alternate mode: member acting in each episode; -1 online
  std::vector<int> episode_lengths;
  std::uint64_t seed = 0;
  std::string config_id;
  long observation_steps = 0;
  bool aborted = false;
  std::string error;
};

struct FinalPerformance {
  double value = 0.0;
  bool short_record = false;  // fewer than `window` episodes were available
};

/// Mean of the last `window` (default 20) episode rewards. With fewer episodes
/// the mean of what is available is returned and `short_record` is set.
FinalPerformance final_performance(const std::vector<double>& episode_rewards, std::size_t window = 20);
inline FinalPerformance final_performance(const RunRecord& r) { return final_performance(r.episode_rewards); }

struct Interval {
  double mean = 0.0;
  double halfwidth = 0.0;
};

/// Student-t interval: mean +- t_{(1+level)/2, m-1} * s / sqrt(m).
/// Throws std::invalid_argument when fewer than two samples are given.
Interval confidence_interval(const std::vector<double>& samples, double level = 0.95);

double median(std::vector<double> samples);

/// Performance of strategy k in environment e for ensemble group g.
class PerfTable {
 public:
  void set(const std::string& env, const std::string& group, const std::string& strategy, double p);
  std::optional<double> get(const std::string& env, const std::string& group,
                            const std::string& strategy) const;

  std::vector<std::string> environments() const;
  std::vector<std::string> groups() const;
  std::vector<std::string> strategies() const;

  /// (env, group, strategy) triples that are absent from a full cross product.
  std::vector<std::tuple<std::string, std::string, std::string>> missing() const;

 private:
  std::map<std::tuple<std::string, std::string, std::string>, double> cells_;
};

class IncompleteTable : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Sum over (environment, group) cells of |(max_l p - p_k) / (max_l p - min_l p)|.
/// Cells where every strategy scored the same contribute 0. Throws
/// IncompleteTable listing the gaps when any cell is missing.
double average_relative_regret(const PerfTable& table, const std::string& strategy);

}  // namespace owqe
