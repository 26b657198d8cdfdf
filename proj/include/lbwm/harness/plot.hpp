#pragma once

#include <map>
#include <string>
#include <vector>

#include "lbwm/harness/trainer.hpp"

namespace lbwm::harness {

inline constexpr int kSmoothWindow = 20;

// Valid-mode running mean: n - w + 1 points; a window longer than the series
// yields a single point holding the mean of the whole series.
std::vector<double> running_mean(const std::vector<double>& series, int window = kSmoothWindow);

struct Curve {
  std::string label;
  std::vector<double> x, y;
};

struct Panel {
  std::string title;
  std::vector<Curve> curves;
};

// Smoothed eval curves, one per difficulty. x is the episode at the end of each window.
std::vector<Curve> smoothed_eval_curves(const std::vector<EpisodeRecord>& records, int window = kSmoothWindow);
// Mean over runs of the per-episode eval means, then smoothed. Runs must share episode counts.
std::vector<Curve> averaged_eval_curves(const std::vector<std::vector<EpisodeRecord>>& runs,
                                        int window = kSmoothWindow);

std::string render_svg(const std::vector<Panel>& panels, const std::string& y_label = "eval reward");
std::string curves_csv(const std::vector<Curve>& curves);

struct PlotOutput {
  std::string svg, csv;
};
// Reads <run>/episodes.csv, writes <run>/eval_curves.svg and <run>/eval_curves_smoothed.csv.
PlotOutput plot_run(const std::string& run_dir, int window = kSmoothWindow);
// Side-by-side panels, each averaging its runs over seeds.
PlotOutput plot_comparison(const std::map<std::string, std::vector<std::string>>& panels, const std::string& out_prefix,
                           int window = kSmoothWindow);

}  // namespace lbwm::harness
