#pragma once

// Minimal SVG charts for learning curves, performance bars and per-member
// traces.

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace owqe {

/// One line with an optional symmetric band (same length as `mean`, or empty).
struct Series {
  std::string label;
  std::vector<double> mean;
  std::vector<double> halfwidth;
};

/// Pointwise mean and 95% Student-t halfwidth over runs (halfwidth 0 with a
/// single run). Runs are truncated to the shortest one.
Series mean_band(const std::string& label, const std::vector<std::vector<double>>& runs);

struct Bar {
  std::string group;
  std::string strategy;
  double mean = 0.0;
  double halfwidth = 0.0;
};

struct ChartText {
  std::string title;
  std::string x_label;
  std::string y_label;
};

/// x is the 1-based episode index.
std::string line_chart_svg(const std::vector<Series>& series, const ChartText& text);

/// Bars grouped by `group` (in first-seen order) and colored by strategy, with
/// CI whiskers and an optional horizontal reference line.
std::string bar_chart_svg(const std::vector<Bar>& bars, const ChartText& text,
                          std::optional<double> reference = std::nullopt,
                          const std::string& reference_label = "best single");

/// Writes plots for every run directory found under `out` into `out/plots`:
///   <env>_<group>_curves.svg, <env>_bars.svg, <env>_<group>_<strategy>_weights.svg,
///   <env>_<group>_<strategy>_actions.svg.
/// Throws std::runtime_error listing the missing files when run outputs are
/// incomplete, or when no run directories exist.
std::vector<std::filesystem::path> emit_plots(const std::filesystem::path& out);

}  // namespace owqe
