#include "owqe/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <stdexcept>

#include <boost/math/distributions/students_t.hpp>

namespace owqe {

FinalPerformance final_performance(const std::vector<double>& episode_rewards, std::size_t window) {
  FinalPerformance out;
  if (episode_rewards.empty()) {
    out.short_record = true;
    out.value = std::nan("");
    return out;
  }
  out.short_record = episode_rewards.size() < window;
  const auto n = std::min(window, episode_rewards.size());
  const auto first = episode_rewards.end() - static_cast<std::ptrdiff_t>(n);
  out.value = std::accumulate(first, episode_rewards.end(), 0.0) / static_cast<double>(n);
  return out;
}

Interval confidence_interval(const std::vector<double>& samples, double level) {
  const auto m = samples.size();
  if (m < 2) throw std::invalid_argument("confidence interval needs at least two samples");
  if (!(level > 0.0 && level < 1.0)) throw std::invalid_argument("confidence level must lie in (0, 1)");
  const double mean = std::accumulate(samples.begin(), samples.end(), 0.0) / static_cast<double>(m);
  double ss = 0.0;
  for (double x : samples) ss += (x - mean) * (x - mean);
  const double sd = std::sqrt(ss / static_cast<double>(m - 1));
  const boost::math::students_t dist(static_cast<double>(m - 1));
  const double t = boost::math::quantile(dist, 0.5 + level / 2.0);
  return {mean, t * sd / std::sqrt(static_cast<double>(m))};
}

double median(std::vector<double> samples) {
  if (samples.empty()) throw std::invalid_argument("median of no samples");
  std::sort(samples.begin(), samples.end());
  const auto n = samples.size();
  return n % 2 ? samples[n / 2] : 0.5 * (samples[n / 2 - 1] + samples[n / 2]);
}

void PerfTable::set(const std::string& env, const std::string& group, const std::string& strategy,
                    double p) {
  cells_[{env, group, strategy}] = p;
}

std::optional<double> PerfTable::get(const std::string& env, const std::string& group,
                                     const std::string& strategy) const {
  auto it = cells_.find({env, group, strategy});
  if (it == cells_.end()) return std::nullopt;
  return it->second;
}

std::vector<std::string> PerfTable::environments() const {
  std::set<std::string> s;
  for (const auto& [k, _] : cells_) s.insert(std::get<0>(k));
  return {s.begin(), s.end()};
}

std::vector<std::string> PerfTable::groups() const {
  std::set<std::string> s;
  for (const auto& [k, _] : cells_) s.insert(std::get<1>(k));
  return {s.begin(), s.end()};
}

std::vector<std::string> PerfTable::strategies() const {
  std::set<std::string> s;
  for (const auto& [k, _] : cells_) s.insert(std::get<2>(k));
  return {s.begin(), s.end()};
}

std::vector<std::tuple<std::string, std::string, std::string>> PerfTable::missing() const {
  std::vector<std::tuple<std::string, std::string, std::string>> gaps;
  for (const auto& e : environments())
    for (const auto& g : groups())
      for (const auto& k : strategies())
        if (!cells_.count({e, g, k})) gaps.emplace_back(e, g, k);
  return gaps;
}

double average_relative_regret(const PerfTable& table, const std::string& strategy) {
  const auto gaps = table.missing();
  if (!gaps.empty()) {
    std::string msg = "performance table is incomplete; missing:";
    for (const auto& [e, g, k] : gaps) msg += " (" + e + ", " + g + ", " + k + ")";
    throw IncompleteTable(msg);
  }
  const auto strategies = table.strategies();
  if (std::find(strategies.begin(), strategies.end(), strategy) == strategies.end()) {
    throw IncompleteTable("strategy '" + strategy + "' does not appear in the table");
  }
  double total = 0.0;
  for (const auto& e : table.environments()) {
    for (const auto& g : table.groups()) {
      double best = -INFINITY;
      double worst = INFINITY;
      for (const auto& k : strategies) {
        const double p = *table.get(e, g, k);
        best = std::max(best, p);
        worst = std::min(worst, p);
      }
      if (best == worst) continue;
      total += std::abs((best - *table.get(e, g, strategy)) / (best - worst));
    }
  }
  return total;
}

}  // namespace owqe
