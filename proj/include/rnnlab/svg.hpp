#pragma once

#include <algorithm>
#include <cmath>
#include <sstream>
#include <string>
#include <vector>

#include "rnnlab/config.hpp"
#include "rnnlab/metrics.hpp"
#include "rnnlab/tensor.hpp"

namespace rnnlab {

struct Series {
    std::string name;
    std::vector<double> x;
    std::vector<double> y;
};

// Self-contained line chart: fixed canvas, one polyline per series, tick
// labels and a legend. No plotting dependency; the output is plain SVG text.
inline std::string render_line_chart(const std::vector<Series>& series, const std::string& x_label,
                                     const std::string& y_label, bool log_y) {
    if (series.empty()) throw ConfigError("plot: no series to draw");
    for (const auto& s : series) {
        if (s.x.empty()) throw ConfigError("plot: series '" + s.name + "' has no data points");
        if (log_y) {
            for (double v : s.y) {
                if (v <= 0.0) {
                    throw ConfigError("plot: series '" + s.name +
                                      "' has non-positive values; a log scale cannot show them");
                }
            }
        }
    }

    const double width = 860, height = 520;
    const double ml = 70, mr = 180, mt = 30, mb = 55;
    const double pw = width - ml - mr, ph = height - mt - mb;

    double xmin = 1e300, xmax = -1e300, ymin = 1e300, ymax = -1e300;
    for (const auto& s : series) {
        for (double v : s.x) {
            xmin = std::min(xmin, v);
            xmax = std::max(xmax, v);
        }
        for (double v : s.y) {
            const double t = log_y ? std::log10(v) : v;
            ymin = std::min(ymin, t);
            ymax = std::max(ymax, t);
        }
    }
    if (xmax == xmin) xmax = xmin + 1.0;
    if (ymax == ymin) ymax = ymin + 1.0;

    auto px = [&](double v) { return ml + (v - xmin) / (xmax - xmin) * pw; };
    auto py = [&](double v) {
        const double t = log_y ? std::log10(v) : v;
        return mt + ph - (t - ymin) / (ymax - ymin) * ph;
    };

    static const char* palette[] = {"#d62728", "#1f77b4", "#2ca02c", "#000000",
                                    "#bba40c", "#9467bd", "#8c564b", "#e377c2"};

    std::ostringstream os;
    os << "<svg xmlns='http://www.w3.org/2000/svg' width='" << width << "' height='" << height
       << "' viewBox='0 0 " << width << " " << height << "'>\n";
    os << "<rect width='" << width << "' height='" << height << "' fill='white'/>\n";
    os << "<g font-family='sans-serif' font-size='12'>\n";

    // frame
    os << "<rect x='" << ml << "' y='" << mt << "' width='" << pw << "' height='" << ph
       << "' fill='none' stroke='#888'/>\n";

    // ticks
    const int nticks = 5;
    for (int i = 0; i <= nticks; ++i) {
        const double fx = xmin + (xmax - xmin) * i / nticks;
        const double gx = px(fx);
        os << "<line x1='" << fmt_double(gx) << "' y1='" << mt + ph << "' x2='" << fmt_double(gx)
           << "' y2='" << mt + ph + 5 << "' stroke='#444'/>\n";
        os << "<text x='" << fmt_double(gx) << "' y='" << mt + ph + 20
           << "' text-anchor='middle'>" << fmt_double(fx) << "</text>\n";

        const double fy = ymin + (ymax - ymin) * i / nticks;
        const double gy = mt + ph - ph * i / nticks;
        const double label = log_y ? std::pow(10.0, fy) : fy;
        os << "<line x1='" << ml - 5 << "' y1='" << fmt_double(gy) << "' x2='" << ml << "' y2='"
           << fmt_double(gy) << "' stroke='#444'/>\n";
        os << "<text x='" << ml - 8 << "' y='" << fmt_double(gy + 4)
           << "' text-anchor='end'>" << fmt_double(label) << "</text>\n";
    }
    os << "<text x='" << ml + pw / 2 << "' y='" << height - 12 << "' text-anchor='middle'>"
       << x_label << "</text>\n";
    os << "<text x='18' y='" << mt + ph / 2 << "' text-anchor='middle' transform='rotate(-90 18 "
       << mt + ph / 2 << ")'>" << y_label << (log_y ? " (log scale)" : "") << "</text>\n";

    for (std::size_t k = 0; k < series.size(); ++k) {
        const char* color = palette[k % (sizeof(palette) / sizeof(palette[0]))];
        os << "<polyline fill='none' stroke='" << color << "' stroke-width='1.5' points='";
        for (std::size_t i = 0; i < series[k].x.size(); ++i) {
            if (i) os << ' ';
            os << fmt_double(px(series[k].x[i])) << ',' << fmt_double(py(series[k].y[i]));
        }
        os << "'/>\n";
        const double ly = mt + 16 + 18 * static_cast<double>(k);
        os << "<line x1='" << ml + pw + 10 << "' y1='" << fmt_double(ly - 4) << "' x2='"
           << ml + pw + 34 << "' y2='" << fmt_double(ly - 4) << "' stroke='" << color
           << "' stroke-width='2'/>\n";
        os << "<text x='" << ml + pw + 40 << "' y='" << fmt_double(ly) << "'>" << series[k].name
           << "</text>\n";
    }
    os << "</g>\n</svg>\n";
    return os.str();
}

// Minimal reader for the metrics CSV layout: header row, comma separation,
// empty cells allowed.
struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    int column(const std::string& name) const {
        for (std::size_t i = 0; i < header.size(); ++i) {
            if (header[i] == name) return static_cast<int>(i);
        }
        return -1;
    }
};

inline CsvTable read_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("csv: cannot open " + path);
    CsvTable t;
    std::string line;
    bool first = true;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        std::vector<std::string> cells;
        std::string cell;
        std::istringstream ls(line);
        while (std::getline(ls, cell, ',')) cells.push_back(cell);
        if (!line.empty() && line.back() == ',') cells.push_back("");
        if (first) {
            t.header = cells;
            first = false;
        } else {
            t.rows.push_back(cells);
        }
    }
    if (first) throw ConfigError("csv: " + path + " is empty");
    return t;
}

// Pull (step, column) pairs out of a metrics CSV, skipping empty cells.
inline Series series_from_metrics(const std::string& path, const std::string& column,
                                  const std::string& name) {
    CsvTable t = read_csv(path);
    const int xc = t.column("step");
    const int yc = t.column(column);
    if (xc < 0) throw ConfigError("plot: " + path + " has no 'step' column");
    if (yc < 0) throw ConfigError("plot: " + path + " has no '" + column + "' column");
    Series s;
    s.name = name;
    for (const auto& row : t.rows) {
        if (static_cast<int>(row.size()) <= std::max(xc, yc)) continue;
        const std::string& yv = row[static_cast<std::size_t>(yc)];
        if (yv.empty()) continue;
        s.x.push_back(std::stod(row[static_cast<std::size_t>(xc)]));
        s.y.push_back(std::stod(yv));
    }
    if (s.x.empty()) {
        throw ConfigError("plot: " + path + " has no rows with a value in '" + column + "'");
    }
    return s;
}

}  // namespace rnnlab
