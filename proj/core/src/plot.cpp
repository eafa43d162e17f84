#include "owqe/plot.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "owqe/error.hpp"
#include "owqe/harness.hpp"
#include "owqe/metrics.hpp"

namespace fs = std::filesystem;

namespace owqe {

namespace {

constexpr double kWidth = 720, kHeight = 420;
constexpr double kLeft = 80, kRight = 170, kTop = 40, kBottom = 60;
constexpr const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd",
                                    "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};

std::string color(std::size_t i) { return kPalette[i % (sizeof kPalette / sizeof *kPalette)]; }

std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

std::string num(double v) {
  std::ostringstream os;
  os.precision(6);
  os << v;
  return os.str();
}

// Round step (1, 2 or 5 times a power of ten) giving about `target` ticks.
std::vector<double> ticks(double lo, double hi, int target = 6) {
  if (!(hi > lo)) return {lo};
  const double raw = (hi - lo) / target;
  const double mag = std::pow(10.0, std::floor(std::log10(raw)));
  double step = mag;
  for (double m : {1.0, 2.0, 5.0, 10.0}) {
    step = m * mag;
    if (step >= raw) break;
  }
  std::vector<double> out;
  for (double t = std::ceil(lo / step) * step; t <= hi + 1e-9 * step; t += step) out.push_back(std::abs(t) < 1e-12 * step ? 0.0 : t);
  return out;
}

struct Frame {
  double x0, x1, y0, y1;

  double px(double x) const { return kLeft + (x - x0) / (x1 - x0) * (kWidth - kLeft - kRight); }
  double py(double y) const { return kHeight - kBottom - (y - y0) / (y1 - y0) * (kHeight - kTop - kBottom); }
};

void pad_range(double& lo, double& hi) {
  if (!std::isfinite(lo) || !std::isfinite(hi)) {
    lo = 0.0;
    hi = 1.0;
  }
  if (hi - lo < 1e-12) {
    const double d = std::max(1.0, std::abs(lo) * 0.1);
    lo -= d;
    hi += d;
  } else {
    const double d = 0.05 * (hi - lo);
    lo -= d;
    hi += d;
  }
}

void header(std::ostringstream& os, const ChartText& text) {
  os << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
     << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\"" << kHeight
     << "\" viewBox=\"0 0 " << kWidth << " " << kHeight << "\" font-family=\"sans-serif\" font-size=\"12\">\n"
     << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
     << "<text x=\"" << kWidth / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">" << escape(text.title)
     << "</text>\n";
}

void axes(std::ostringstream& os, const Frame& f, const ChartText& text, bool x_ticks) {
  const double left = f.px(f.x0), right = f.px(f.x1), top = f.py(f.y1), bottom = f.py(f.y0);
  os << "<g stroke=\"#333\" fill=\"none\">"
     << "<line x1=\"" << left << "\" y1=\"" << bottom << "\" x2=\"" << right << "\" y2=\"" << bottom << "\"/>"
     << "<line x1=\"" << left << "\" y1=\"" << top << "\" x2=\"" << left << "\" y2=\"" << bottom << "\"/></g>\n";
  os << "<g class=\"yticks\">\n";
  for (double t : ticks(f.y0, f.y1)) {
    const double y = f.py(t);
    os << "<line x1=\"" << left - 4 << "\" y1=\"" << y << "\" x2=\"" << right << "\" y2=\"" << y
       << "\" stroke=\"#ddd\"/><text x=\"" << left - 6 << "\" y=\"" << y + 4 << "\" text-anchor=\"end\">" << num(t)
       << "</text>\n";
  }
  os << "</g>\n";
  if (x_ticks) {
    os << "<g class=\"xticks\">\n";
    for (double t : ticks(f.x0, f.x1)) {
      const double x = f.px(t);
      os << "<line x1=\"" << x << "\" y1=\"" << bottom << "\" x2=\"" << x << "\" y2=\"" << bottom + 4
         << "\" stroke=\"#333\"/><text x=\"" << x << "\" y=\"" << bottom + 18 << "\" text-anchor=\"middle\">"
         << num(t) << "</text>\n";
    }
    os << "</g>\n";
  }
  os << "<text x=\"" << (left + right) / 2 << "\" y=\"" << kHeight - 15 << "\" text-anchor=\"middle\">"
     << escape(text.x_label) << "</text>\n"
     << "<text transform=\"translate(18," << (top + bottom) / 2 << ") rotate(-90)\" text-anchor=\"middle\">"
     << escape(text.y_label) << "</text>\n";
}

void legend(std::ostringstream& os, const std::vector<std::string>& labels) {
  const double x = kWidth - kRight + 15;
  os << "<g class=\"legend\">\n";
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const double y = kTop + 10 + 18.0 * static_cast<double>(i);
    os << "<rect x=\"" << x << "\" y=\"" << y - 9 << "\" width=\"12\" height=\"12\" fill=\"" << color(i)
       << "\"/><text x=\"" << x + 18 << "\" y=\"" << y + 2 << "\">" << escape(labels[i]) << "</text>\n";
  }
  os << "</g>\n";
}

}  // namespace

Series mean_band(const std::string& label, const std::vector<std::vector<double>>& runs) {
  Series s;
  s.label = label;
  if (runs.empty()) return s;
  std::size_t len = runs.front().size();
  for (const auto& r : runs) len = std::min(len, r.size());
  for (std::size_t t = 0; t < len; ++t) {
    std::vector<double> xs;
    for (const auto& r : runs) xs.push_back(r[t]);
    if (xs.size() >= 2) {
      const Interval ci = confidence_interval(xs);
      s.mean.push_back(ci.mean);
      s.halfwidth.push_back(ci.halfwidth);
    } else {
      s.mean.push_back(xs.front());
      s.halfwidth.push_back(0.0);
    }
  }
  return s;
}

std::string line_chart_svg(const std::vector<Series>& series, const ChartText& text) {
  double lo = INFINITY, hi = -INFINITY;
  std::size_t len = 1;
  for (const auto& s : series) {
    if (!s.halfwidth.empty() && s.halfwidth.size() != s.mean.size()) {
      throw ConfigError("series '" + s.label + "' has a band of the wrong length");
    }
    len = std::max(len, s.mean.size());
    for (std::size_t t = 0; t < s.mean.size(); ++t) {
      const double h = s.halfwidth.empty() ? 0.0 : s.halfwidth[t];
      lo = std::min(lo, s.mean[t] - h);
      hi = std::max(hi, s.mean[t] + h);
    }
  }
  pad_range(lo, hi);
  const Frame f{1.0, std::max(2.0, static_cast<double>(len)), lo, hi};

  std::ostringstream os;
  header(os, text);
  axes(os, f, text, true);
  std::vector<std::string> labels;
  for (std::size_t i = 0; i < series.size(); ++i) {
    const auto& s = series[i];
    labels.push_back(s.label);
    if (s.mean.empty()) continue;
    if (!s.halfwidth.empty()) {
      os << "<path class=\"band\" fill=\"" << color(i) << "\" fill-opacity=\"0.2\" stroke=\"none\" d=\"";
      for (std::size_t t = 0; t < s.mean.size(); ++t)
        os << (t ? " L" : "M") << f.px(static_cast<double>(t + 1)) << "," << f.py(s.mean[t] + s.halfwidth[t]);
      for (std::size_t t = s.mean.size(); t-- > 0;)
        os << " L" << f.px(static_cast<double>(t + 1)) << "," << f.py(s.mean[t] - s.halfwidth[t]);
      os << " Z\"/>\n";
    }
    os << "<polyline class=\"series\" fill=\"none\" stroke=\"" << color(i) << "\" stroke-width=\"1.5\" points=\"";
    for (std::size_t t = 0; t < s.mean.size(); ++t)
      os << (t ? " " : "") << f.px(static_cast<double>(t + 1)) << "," << f.py(s.mean[t]);
    os << "\"/>\n";
  }
  legend(os, labels);
  os << "</svg>\n";
  return os.str();
}

std::string bar_chart_svg(const std::vector<Bar>& bars, const ChartText& text, std::optional<double> reference,
                          const std::string& reference_label) {
  std::vector<std::string> groups, strategies;
  for (const auto& b : bars) {
    if (std::find(groups.begin(), groups.end(), b.group) == groups.end()) groups.push_back(b.group);
    if (std::find(strategies.begin(), strategies.end(), b.strategy) == strategies.end()) strategies.push_back(b.strategy);
  }
  double lo = 0.0, hi = 0.0;
  bool first = true;
  auto extend = [&](double v) {
    lo = first ? v : std::min(lo, v);
    hi = first ? v : std::max(hi, v);
    first = false;
  };
  for (const auto& b : bars) {
    extend(b.mean - b.halfwidth);
    extend(b.mean + b.halfwidth);
  }
  if (reference) extend(*reference);
  if (first) extend(0.0);
  pad_range(lo, hi);
  const Frame f{0.0, static_cast<double>(std::max<std::size_t>(1, groups.size())), lo, hi};
  // Bars grow from the axis value closest to zero so negative rewards read naturally.
  const double base = std::clamp(0.0, lo, hi);

  std::ostringstream os;
  header(os, text);
  axes(os, f, text, false);
  const double slot = f.px(1.0) - f.px(0.0);
  const double bar_w = 0.8 * slot / static_cast<double>(std::max<std::size_t>(1, strategies.size()));
  for (std::size_t g = 0; g < groups.size(); ++g) {
    os << "<text x=\"" << f.px(static_cast<double>(g) + 0.5) << "\" y=\"" << f.py(f.y0) + 18
       << "\" text-anchor=\"middle\">" << escape(groups[g]) << "</text>\n";
  }
  for (const auto& b : bars) {
    const auto g = static_cast<double>(std::find(groups.begin(), groups.end(), b.group) - groups.begin());
    const auto k = static_cast<std::size_t>(std::find(strategies.begin(), strategies.end(), b.strategy) - strategies.begin());
    const double x = f.px(g) + 0.1 * slot + bar_w * static_cast<double>(k);
    const double y_top = f.py(std::max(b.mean, base)), y_bottom = f.py(std::min(b.mean, base));
    const double cx = x + bar_w / 2;
    os << "<rect class=\"bar\" x=\"" << x << "\" y=\"" << y_top << "\" width=\"" << bar_w * 0.9 << "\" height=\""
       << std::max(0.0, y_bottom - y_top) << "\" fill=\"" << color(k) << "\"><title>" << escape(b.group) << " / "
       << escape(b.strategy) << ": " << num(b.mean) << " +- " << num(b.halfwidth) << "</title></rect>\n";
    os << "<g class=\"whisker\" stroke=\"#000\"><line x1=\"" << cx - bar_w * 0.05 << "\" y1=\""
       << f.py(b.mean - b.halfwidth) << "\" x2=\"" << cx - bar_w * 0.05 << "\" y2=\"" << f.py(b.mean + b.halfwidth)
       << "\"/></g>\n";
  }
  if (reference) {
    const double y = f.py(*reference);
    os << "<line class=\"reference\" x1=\"" << f.px(f.x0) << "\" y1=\"" << y << "\" x2=\"" << f.px(f.x1) << "\" y2=\"" << y
       << "\" stroke=\"#000\" stroke-dasharray=\"6,4\"/>\n"
       << "<text x=\"" << f.px(f.x1) + 4 << "\" y=\"" << y + 4 << "\">" << escape(reference_label) << "</text>\n";
  }
  legend(os, strategies);
  os << "</svg>\n";
  return os.str();
}

std::vector<fs::path> emit_plots(const fs::path& out) {
  const auto dirs = find_run_directories(out);
  if (dirs.empty()) throw std::runtime_error("no run directories under " + out.string());
  std::vector<std::string> missing;
  for (const auto& d : dirs)
    for (const char* f : {"config.json", "curves.csv", "weights.csv", "actions.csv"})
      if (!fs::is_regular_file(d / f)) missing.push_back((d / f).string());
  if (!missing.empty()) {
    std::string msg = "missing plot inputs:";
    for (const auto& m : missing) msg += "\n  " + m;
    throw std::runtime_error(msg);
  }

  using Key = std::tuple<std::string, std::string, std::string>;
  std::map<Key, std::vector<RunOutcome>> cells;
  std::vector<std::string> env_order;
  for (const auto& d : dirs) {
    RunOutcome o = load_run(d);
    const std::string env = o.task.environment.rfind("external:", 0) == 0 ? "external" : o.task.environment;
    if (std::find(env_order.begin(), env_order.end(), env) == env_order.end()) env_order.push_back(env);
    cells[{env, o.task.group, std::string(to_string(o.task.strategy))}].push_back(std::move(o));
  }

  const fs::path plots = out / "plots";
  fs::create_directories(plots);
  std::vector<fs::path> written;
  auto save = [&](const std::string& name, const std::string& svg) {
    write_text(plots / name, svg);
    written.push_back(plots / name);
  };

  for (const auto& env : env_order) {
    std::map<std::string, std::vector<Series>> curves_by_group;
    std::vector<Bar> bars;
    for (const auto& [key, runs] : cells) {
      const auto& [e, group, strategy] = key;
      if (e != env) continue;
      std::vector<std::vector<double>> rewards;
      std::vector<double> perfs;
      for (const auto& r : runs) {
        rewards.push_back(r.record.episode_rewards);
        if (r.ok && !r.record.episode_rewards.empty()) perfs.push_back(r.performance);
      }
      curves_by_group[group].push_back(mean_band(strategy, rewards));
      if (!perfs.empty()) {
        Bar b{group, strategy, perfs.front(), 0.0};
        if (perfs.size() >= 2) {
          const Interval ci = confidence_interval(perfs);
          b.mean = ci.mean;
          b.halfwidth = ci.halfwidth;
        }
        bars.push_back(b);
      }

      const std::size_t n = runs.front().task.members.size();
      std::vector<Series> weights, actions;
      for (std::size_t i = 0; i < n; ++i) {
        std::vector<std::vector<double>> w, a;
        for (const auto& r : runs) {
          std::vector<double> wi, ai;
          for (const auto& row : r.record.weights) wi.push_back(row[i]);
          for (const auto& row : r.record.action_counts) ai.push_back(static_cast<double>(row[i]));
          w.push_back(std::move(wi));
          a.push_back(std::move(ai));
        }
        weights.push_back(mean_band("member " + std::to_string(i + 1), w));
        actions.push_back(mean_band("member " + std::to_string(i + 1), a));
      }
      const std::string stem = env + "_" + group + "_" + strategy;
      save(stem + "_weights.svg",
           line_chart_svg(weights, {env + " " + group + " " + strategy + ": critic weights", "episode", "weight"}));
      save(stem + "_actions.svg", line_chart_svg(actions, {env + " " + group + " " + strategy + ": selected actions",
                                                           "episode", "steps per episode"}));
    }
    for (const auto& [group, series] : curves_by_group) {
      save(env + "_" + group + "_curves.svg",
           line_chart_svg(series, {env + " " + group + ": learning curves (95% CI)", "episode", "cumulative reward"}));
    }
    std::optional<double> reference;
    try {
      reference = load_preset(env).best_search_performance;
    } catch (const ConfigError&) {
    }
    save(env + "_bars.svg",
         bar_chart_svg(bars, {env + ": final performance (95% CI)", "group", "final performance"}, reference));
  }
  return written;
}

}  // namespace owqe
