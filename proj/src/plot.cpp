#include <algorithm>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "rldecode/errors.hpp"
#include "rldecode/harness.hpp"

namespace rldecode {

std::vector<double> moving_average(const std::vector<double>& values, std::size_t window) {
  if (window == 0) throw ParameterError("moving average window must be >= 1");
  std::vector<double> out;
  out.reserve(values.size());
  double running = 0.0;
  for (std::size_t i = 0; i < values.size(); ++i) {
    running += values[i];
    if (i >= window) running -= values[i - window];
    const std::size_t n = std::min(i + 1, window);
    out.push_back(running / static_cast<double>(n));
  }
  return out;
}

namespace {

std::vector<double> rewards_of(const std::vector<EpisodeRow>& rows) {
  std::vector<double> r;
  r.reserve(rows.size());
  for (const auto& row : rows) r.push_back(row.reward);
  return r;
}

}  // namespace

void write_plot_csv(const std::filesystem::path& path, const std::vector<EpisodeRow>& rows, std::size_t window) {
  const auto avg = moving_average(rewards_of(rows), window);
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write " + path.string());
  out << "episode,reward,moving_avg\n";
  char buf[128];
  for (std::size_t i = 0; i < rows.size(); ++i) {
    std::snprintf(buf, sizeof(buf), "%zu,%.9g,%.9g\n", rows[i].episode, rows[i].reward, avg[i]);
    out << buf;
  }
}

std::string render_svg(const std::vector<EpisodeRow>& rows, std::size_t window) {
  if (rows.empty()) throw InputError("plot needs at least one episode");
  const auto rewards = rewards_of(rows);
  const auto avg = moving_average(rewards, window);

  constexpr double W = 720, H = 400, L = 60, R = 20, T = 40, B = 50;
  const double x_max = static_cast<double>(std::max<std::size_t>(rows.back().episode, 1));
  const double x_min = static_cast<double>(rows.front().episode);
  const double span = std::max(x_max - x_min, 1.0);
  const double y_lo = std::min(0.0, *std::min_element(rewards.begin(), rewards.end()));
  const double y_hi = std::max(1.0, *std::max_element(rewards.begin(), rewards.end()));
  auto px = [&](double x) { return L + (x - x_min) / span * (W - L - R); };
  auto py = [&](double y) { return H - B - (y - y_lo) / (y_hi - y_lo) * (H - T - B); };

  auto polyline = [&](const std::vector<double>& ys, const char* colour, double width) {
    std::ostringstream s;
    s << "<polyline fill=\"none\" stroke=\"" << colour << "\" stroke-width=\"" << width << "\" points=\"";
    char buf[64];
    for (std::size_t i = 0; i < ys.size(); ++i) {
      std::snprintf(buf, sizeof(buf), "%.2f,%.2f ", px(static_cast<double>(rows[i].episode)), py(ys[i]));
      s << buf;
    }
    s << "\"/>\n";
    return s.str();
  };

  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H
      << "\" viewBox=\"0 0 " << W << ' ' << H << "\">\n";
  svg << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  svg << "<text x=\"" << W / 2 << "\" y=\"24\" text-anchor=\"middle\" font-family=\"sans-serif\" "
         "font-size=\"16\">Reward over time</text>\n";
  svg << "<line x1=\"" << L << "\" y1=\"" << H - B << "\" x2=\"" << W - R << "\" y2=\"" << H - B
      << "\" stroke=\"black\"/>\n";
  svg << "<line x1=\"" << L << "\" y1=\"" << T << "\" x2=\"" << L << "\" y2=\"" << H - B << "\" stroke=\"black\"/>\n";
  char buf[160];
  for (int i = 0; i <= 4; ++i) {
    const double y = y_lo + (y_hi - y_lo) * i / 4.0;
    std::snprintf(buf, sizeof(buf),
                  "<text x=\"%.1f\" y=\"%.1f\" text-anchor=\"end\" font-family=\"sans-serif\" "
                  "font-size=\"11\">%.2f</text>\n",
                  L - 6, py(y) + 4, y);
    svg << buf;
  }
  std::snprintf(buf, sizeof(buf),
                "<text x=\"%.1f\" y=\"%.1f\" text-anchor=\"middle\" font-family=\"sans-serif\" "
                "font-size=\"12\">episode</text>\n",
                (L + W - R) / 2, H - 15);
  svg << buf;
  svg << polyline(rewards, "#9ecae1", 1.0);
  svg << polyline(avg, "#d62728", 2.0);
  std::snprintf(buf, sizeof(buf),
                "<text x=\"%.1f\" y=\"%.1f\" font-family=\"sans-serif\" font-size=\"11\" fill=\"#d62728\">"
                "moving average (window %zu)</text>\n",
                W - R - 200, T + 12.0, window);
  svg << buf;
  svg << "</svg>\n";
  return svg.str();
}

void emit_plot(const std::vector<EpisodeRow>& rows, std::size_t window, const std::filesystem::path& svg_path) {
  const std::string svg = render_svg(rows, window);
  if (svg_path.has_parent_path()) std::filesystem::create_directories(svg_path.parent_path());
  std::ofstream out(svg_path);
  if (!out) throw ConfigError("cannot write " + svg_path.string());
  out << svg;
  auto csv_path = svg_path;
  csv_path.replace_extension(".csv");
  write_plot_csv(csv_path, rows, window);
}

}  // namespace rldecode
