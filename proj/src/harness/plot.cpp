#include "lbwm/harness/plot.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace lbwm::harness {

namespace fs = std::filesystem;

std::vector<double> running_mean(const std::vector<double>& series, int window) {
  if (window < 1) throw std::invalid_argument("running_mean: window must be >= 1");
  if (series.empty()) return {};
  const std::size_t w = static_cast<std::size_t>(window);
  if (w >= series.size()) {
    double sum = 0.0;
    for (double v : series) sum += v;
    return {sum / static_cast<double>(series.size())};
  }
  std::vector<double> out;
  out.reserve(series.size() - w + 1);
  for (std::size_t i = 0; i + w <= series.size(); ++i) {
    double sum = 0.0;
    for (std::size_t k = i; k < i + w; ++k) sum += series[k];
    out.push_back(sum / static_cast<double>(w));
  }
  return out;
}

namespace {

// Per difficulty: (episode, mean eval reward) in episode order.
std::map<std::string, std::map<int, double>> eval_means(const std::vector<EpisodeRecord>& records) {
  std::map<std::string, std::map<int, std::pair<double, int>>> acc;
  for (const auto& r : records) {
    if (r.phase != Phase::Eval) continue;
    auto& s = acc[r.difficulty][r.episode];
    s.first += r.cum_reward;
    ++s.second;
  }
  std::map<std::string, std::map<int, double>> out;
  for (const auto& [d, per] : acc)
    for (const auto& [e, s] : per) out[d][e] = s.first / s.second;
  return out;
}

Curve smooth(const std::string& label, const std::vector<int>& episodes, const std::vector<double>& values,
             int window) {
  Curve c;
  c.label = label;
  c.y = running_mean(values, window);
  const std::size_t w = std::min<std::size_t>(static_cast<std::size_t>(window), episodes.size());
  for (std::size_t i = 0; i < c.y.size(); ++i) c.x.push_back(episodes[i + w - 1]);
  return c;
}

std::vector<Curve> difficulty_order(std::map<std::string, Curve> by_label) {
  std::vector<Curve> out;
  for (auto d : workload::kAllDifficulties) {
    auto it = by_label.find(std::string(workload::to_string(d)));
    if (it == by_label.end()) continue;
    out.push_back(std::move(it->second));
    by_label.erase(it);
  }
  for (auto& [_, c] : by_label) out.push_back(std::move(c));
  return out;
}

std::string fmt(double v) {
  std::ostringstream ss;
  ss.precision(6);
  ss << v;
  return ss.str();
}

std::string escape(const std::string& s) {
  std::string out;
  for (char ch : s) {
    if (ch == '<') out += "&lt;";
    else if (ch == '>') out += "&gt;";
    else if (ch == '&') out += "&amp;";
    else out += ch;
  }
  return out;
}

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
  out << text;
  if (!out) throw std::runtime_error("failed writing '" + path.string() + "'");
}

}  // namespace

std::vector<Curve> smoothed_eval_curves(const std::vector<EpisodeRecord>& records, int window) {
  std::map<std::string, Curve> out;
  for (const auto& [d, per] : eval_means(records)) {
    std::vector<int> eps;
    std::vector<double> vals;
    for (const auto& [e, v] : per) eps.push_back(e), vals.push_back(v);
    out[d] = smooth(d, eps, vals, window);
  }
  return difficulty_order(std::move(out));
}

std::vector<Curve> averaged_eval_curves(const std::vector<std::vector<EpisodeRecord>>& runs, int window) {
  if (runs.empty()) throw std::invalid_argument("averaged_eval_curves: no runs");
  std::map<std::string, std::map<int, std::pair<double, int>>> acc;
  for (const auto& run : runs)
    for (const auto& [d, per] : eval_means(run))
      for (const auto& [e, v] : per) {
        auto& s = acc[d][e];
        s.first += v;
        ++s.second;
      }
  std::map<std::string, Curve> out;
  for (const auto& [d, per] : acc) {
    std::vector<int> eps;
    std::vector<double> vals;
    for (const auto& [e, s] : per) {
      if (s.second != static_cast<int>(runs.size()))
        throw std::invalid_argument("averaged_eval_curves: runs disagree on evaluated episodes");
      eps.push_back(e);
      vals.push_back(s.first / s.second);
    }
    out[d] = smooth(d, eps, vals, window);
  }
  return difficulty_order(std::move(out));
}

std::string render_svg(const std::vector<Panel>& panels, const std::string& y_label) {
  constexpr double kW = 480, kH = 320, kLeft = 80, kRight = 20, kTop = 40, kBottom = 50;
  static const char* kColors[] = {"#1b9e77", "#d95f02", "#7570b3", "#e7298a", "#66a61e", "#e6ab02"};
  const double total_w = kW * std::max<std::size_t>(1, panels.size());
  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << total_w << "\" height=\"" << kH
      << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  svg << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  for (std::size_t p = 0; p < panels.size(); ++p) {
    const Panel& panel = panels[p];
    const double ox = kW * static_cast<double>(p);
    double xmin = std::numeric_limits<double>::infinity(), xmax = -xmin, ymin = xmin, ymax = -xmin;
    for (const auto& c : panel.curves)
      for (std::size_t i = 0; i < c.x.size(); ++i) {
        xmin = std::min(xmin, c.x[i]);
        xmax = std::max(xmax, c.x[i]);
        ymin = std::min(ymin, c.y[i]);
        ymax = std::max(ymax, c.y[i]);
      }
    if (!std::isfinite(xmin)) xmin = 0, xmax = 1, ymin = 0, ymax = 1;
    if (xmax == xmin) xmin -= 0.5, xmax += 0.5;
    if (ymax == ymin) {
      const double pad = std::max(1.0, std::abs(ymin) * 0.05);
      ymin -= pad;
      ymax += pad;
    }
    const double pw = kW - kLeft - kRight, ph = kH - kTop - kBottom;
    auto px = [&](double x) { return ox + kLeft + (x - xmin) / (xmax - xmin) * pw; };
    auto py = [&](double y) { return kTop + (ymax - y) / (ymax - ymin) * ph; };

    svg << "<g>\n";
    svg << "<text x=\"" << ox + kW / 2 << "\" y=\"20\" text-anchor=\"middle\" font-size=\"14\">"
        << escape(panel.title) << "</text>\n";
    svg << "<rect x=\"" << ox + kLeft << "\" y=\"" << kTop << "\" width=\"" << pw << "\" height=\"" << ph
        << "\" fill=\"none\" stroke=\"black\"/>\n";
    for (int t = 0; t <= 4; ++t) {
      const double yv = ymin + (ymax - ymin) * t / 4.0, xv = xmin + (xmax - xmin) * t / 4.0;
      svg << "<text x=\"" << ox + kLeft - 6 << "\" y=\"" << py(yv) + 4 << "\" text-anchor=\"end\">" << fmt(yv)
          << "</text>\n";
      svg << "<text x=\"" << px(xv) << "\" y=\"" << kTop + ph + 16 << "\" text-anchor=\"middle\">" << fmt(xv)
          << "</text>\n";
    }
    svg << "<text x=\"" << ox + kLeft + pw / 2 << "\" y=\"" << kH - 10 << "\" text-anchor=\"middle\">episode</text>\n";
    svg << "<text transform=\"translate(" << ox + 14 << "," << kTop + ph / 2
        << ") rotate(-90)\" text-anchor=\"middle\">" << escape(y_label) << "</text>\n";
    for (std::size_t c = 0; c < panel.curves.size(); ++c) {
      const Curve& curve = panel.curves[c];
      const char* color = kColors[c % std::size(kColors)];
      svg << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" data-label=\""
          << escape(curve.label) << "\" points=\"";
      for (std::size_t i = 0; i < curve.x.size(); ++i) {
        if (i) svg << ' ';
        svg << fmt(px(curve.x[i])) << ',' << fmt(py(curve.y[i]));
      }
      svg << "\"/>\n";
      const double ly = kTop + 14 + 16 * static_cast<double>(c);
      svg << "<line x1=\"" << ox + kLeft + 8 << "\" y1=\"" << ly - 4 << "\" x2=\"" << ox + kLeft + 28 << "\" y2=\""
          << ly - 4 << "\" stroke=\"" << color << "\" stroke-width=\"2\"/>\n";
      svg << "<text x=\"" << ox + kLeft + 32 << "\" y=\"" << ly << "\">" << escape(curve.label) << "</text>\n";
    }
    svg << "</g>\n";
  }
  svg << "</svg>\n";
  return svg.str();
}

std::string curves_csv(const std::vector<Curve>& curves) {
  std::string out = "series,episode,smoothed_eval_reward\n";
  for (const auto& c : curves)
    for (std::size_t i = 0; i < c.x.size(); ++i)
      out += c.label + "," + format_number(c.x[i]) + "," + format_number(c.y[i]) + "\n";
  return out;
}

PlotOutput plot_run(const std::string& run_dir, int window) {
  const fs::path dir(run_dir);
  const auto records = read_csv_file((dir / "episodes.csv").string());
  const auto curves = smoothed_eval_curves(records, window);
  std::string title = dir.filename().string();
  if (title.empty()) title = dir.parent_path().filename().string();
  PlotOutput out{(dir / "eval_curves.svg").string(), (dir / "eval_curves_smoothed.csv").string()};
  write_file(out.svg, render_svg({Panel{title, curves}}));
  write_file(out.csv, curves_csv(curves));
  return out;
}

PlotOutput plot_comparison(const std::map<std::string, std::vector<std::string>>& panels,
                           const std::string& out_prefix, int window) {
  std::vector<Panel> rendered;
  std::vector<Curve> all;
  for (const auto& [name, dirs] : panels) {
    std::vector<std::vector<EpisodeRecord>> runs;
    for (const auto& d : dirs) runs.push_back(read_csv_file((fs::path(d) / "episodes.csv").string()));
    Panel p{name + " (mean of " + std::to_string(dirs.size()) + " seeds)", averaged_eval_curves(runs, window)};
    for (auto c : p.curves) {
      c.label = name + "/" + c.label;
      all.push_back(std::move(c));
    }
    rendered.push_back(std::move(p));
  }
  PlotOutput out{out_prefix + ".svg", out_prefix + "_smoothed.csv"};
  write_file(out.svg, render_svg(rendered));
  write_file(out.csv, curves_csv(all));
  return out;
}

}  // namespace lbwm::harness
