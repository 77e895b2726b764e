#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "mixinfer/error.hpp"

namespace mixinfer::orchestrator {

/// Header plus rows of a comma-separated file; numeric cells parsed, others
/// kept as NaN with the column flagged as text.
struct CsvTable {
  std::vector<std::string> columns;
  std::vector<std::vector<double>> rows;
  std::vector<bool> text;  ///< column holds at least one non-numeric cell

  int column(const std::string& name) const {
    auto it = std::find(columns.begin(), columns.end(), name);
    return it == columns.end() ? -1 : static_cast<int>(it - columns.begin());
  }
};

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

inline CsvTable parse_csv(const std::string& content) {
  CsvTable t;
  std::istringstream in(content);
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto cells = split_csv_line(line);
    if (t.columns.empty()) {
      t.columns = cells;
      t.text.assign(cells.size(), false);
      continue;
    }
    if (cells.size() != t.columns.size())
      throw ParseError(n, "expected " + std::to_string(t.columns.size()) + " fields, found " +
                              std::to_string(cells.size()));
    std::vector<double> row;
    for (std::size_t c = 0; c < cells.size(); ++c) {
      const std::string& s = cells[c];
      char* end = nullptr;
      const double v = s.empty() ? std::numeric_limits<double>::quiet_NaN() : std::strtod(s.c_str(), &end);
      if (!s.empty() && (end == s.c_str() || *end != '\0')) {
        t.text[c] = true;
        row.push_back(std::numeric_limits<double>::quiet_NaN());
      } else {
        row.push_back(v);
      }
    }
    t.rows.push_back(std::move(row));
  }
  if (t.columns.empty()) throw ParseError(1, "missing header");
  return t;
}

namespace detail {

inline std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

inline std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    if (c == '<') out += "&lt;";
    else if (c == '>') out += "&gt;";
    else if (c == '&') out += "&amp;";
    else out += c;
  }
  return out;
}

inline const char* colour(std::size_t i) {
  static const char* palette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e",
                                  "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};
  return palette[i % 10];
}

struct Series {
  std::string name;
  int column = 0;
  bool dashed = false;
};

struct Panel {
  std::string title;
  std::vector<Series> series;
};

}  // namespace detail

/// Line chart of a metrics or trace table. Trace tables (with value and
/// target columns) become one panel with a solid value line and a dashed
/// target line; metrics tables get one panel per column group. The first
/// column is the x axis.
inline std::string render_svg(const CsvTable& t) {
  using namespace detail;
  if (t.columns.size() < 2) throw ConfigError("plot needs an x column and at least one series");
  std::vector<Panel> panels;
  const int value = t.column("value"), target = t.column("target");
  if (value >= 0 && target >= 0) {
    panels.push_back({"trace", {{"value", value, false}, {"target", target, true}}});
  } else {
    Panel returns{"returns", {}}, losses{"losses", {}}, accuracy{"accuracy", {}}, other{"other", {}};
    for (std::size_t c = 1; c < t.columns.size(); ++c) {
      if (t.text[c]) continue;
      const std::string& name = t.columns[c];
      Series s{name, static_cast<int>(c), false};
      if (name.find("return") != std::string::npos)
        returns.series.push_back(s);
      else if (name.find("accuracy") != std::string::npos)
        accuracy.series.push_back(s);
      else if (name.rfind("val_", 0) == 0 || name.rfind("train_", 0) == 0 || name.find("loss") != std::string::npos)
        losses.series.push_back(s);
      else
        other.series.push_back(s);
    }
    for (auto* p : {&returns, &losses, &accuracy, &other})
      if (!p->series.empty()) panels.push_back(*p);
  }
  if (panels.empty()) throw ConfigError("plot: no numeric columns");

  const double W = 720, H = 260, left = 70, right = 170, top = 30, bottom = 40;
  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << num(W) << "\" height=\""
      << num(H * static_cast<double>(panels.size())) << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
  svg << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";

  for (std::size_t pi = 0; pi < panels.size(); ++pi) {
    const Panel& p = panels[pi];
    const double y0 = H * static_cast<double>(pi);
    double xmin = INFINITY, xmax = -INFINITY, ymin = INFINITY, ymax = -INFINITY;
    for (const auto& row : t.rows) {
      if (!std::isfinite(row[0])) continue;
      for (const auto& s : p.series) {
        const double v = row[static_cast<std::size_t>(s.column)];
        if (!std::isfinite(v)) continue;
        xmin = std::min(xmin, row[0]);
        xmax = std::max(xmax, row[0]);
        ymin = std::min(ymin, v);
        ymax = std::max(ymax, v);
      }
    }
    if (!std::isfinite(xmin)) xmin = 0, xmax = 1, ymin = 0, ymax = 1;
    if (xmax == xmin) xmin -= 0.5, xmax += 0.5;
    if (ymax == ymin) ymin -= 0.5, ymax += 0.5;
    const double pw = W - left - right, ph = H - top - bottom;
    auto X = [&](double x) { return left + (x - xmin) / (xmax - xmin) * pw; };
    auto Y = [&](double y) { return y0 + top + (1.0 - (y - ymin) / (ymax - ymin)) * ph; };

    svg << "<text x=\"" << num(left) << "\" y=\"" << num(y0 + 18) << "\" font-weight=\"bold\">" << escape(p.title)
        << "</text>\n";
    svg << "<rect x=\"" << num(left) << "\" y=\"" << num(y0 + top) << "\" width=\"" << num(pw) << "\" height=\""
        << num(ph) << "\" fill=\"none\" stroke=\"#444\"/>\n";
    for (int k = 0; k <= 4; ++k) {
      const double fx = xmin + (xmax - xmin) * k / 4.0, fy = ymin + (ymax - ymin) * k / 4.0;
      svg << "<text x=\"" << num(X(fx)) << "\" y=\"" << num(y0 + top + ph + 15) << "\" text-anchor=\"middle\">"
          << num(fx) << "</text>\n";
      svg << "<text x=\"" << num(left - 5) << "\" y=\"" << num(Y(fy) + 4) << "\" text-anchor=\"end\">" << num(fy)
          << "</text>\n";
    }
    svg << "<text x=\"" << num(left + pw / 2) << "\" y=\"" << num(y0 + H - 5) << "\" text-anchor=\"middle\">"
        << escape(t.columns[0]) << "</text>\n";

    for (std::size_t si = 0; si < p.series.size(); ++si) {
      const Series& s = p.series[si];
      std::string points;
      for (const auto& row : t.rows) {
        const double x = row[0], v = row[static_cast<std::size_t>(s.column)];
        if (!std::isfinite(x) || !std::isfinite(v)) continue;
        if (!points.empty()) points += ' ';
        points += num(X(x)) + ',' + num(Y(v));
      }
      svg << "<polyline fill=\"none\" stroke=\"" << colour(si) << "\" stroke-width=\"1.5\""
          << (s.dashed ? " stroke-dasharray=\"6 4\"" : "") << " points=\"" << points << "\"/>\n";
      const double ly = y0 + top + 12 + 14 * static_cast<double>(si);
      svg << "<line x1=\"" << num(W - right + 10) << "\" y1=\"" << num(ly - 4) << "\" x2=\"" << num(W - right + 30)
          << "\" y2=\"" << num(ly - 4) << "\" stroke=\"" << colour(si) << "\" stroke-width=\"1.5\""
          << (s.dashed ? " stroke-dasharray=\"6 4\"" : "") << "/>\n";
      svg << "<text x=\"" << num(W - right + 35) << "\" y=\"" << num(ly) << "\">" << escape(s.name) << "</text>\n";
    }
  }
  svg << "</svg>\n";
  return svg.str();
}

}  // namespace mixinfer::orchestrator
