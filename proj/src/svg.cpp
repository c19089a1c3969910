#include "calibrex/svg.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <sstream>

namespace calibrex::svg {

namespace {

constexpr double kWidth = 480.0;
constexpr double kHeight = 400.0;
constexpr double kMargin = 50.0;

const char* const kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd",
                                "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};

std::string num(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", v);
    return buf;
}

std::string escape(const std::string& text) {
    std::string out;
    for (char c : text) {
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

// Maps data coordinates into the plot area; y grows upwards.
struct Frame {
    double x0, x1, y0, y1;

    double px(double x) const { return kMargin + (x - x0) / (x1 - x0) * (kWidth - 2 * kMargin); }
    double py(double y) const { return kHeight - kMargin - (y - y0) / (y1 - y0) * (kHeight - 2 * kMargin); }
};

void open(std::ostringstream& s, const std::string& title) {
    s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\"" << kHeight
      << "\" viewBox=\"0 0 " << kWidth << ' ' << kHeight << "\" font-family=\"sans-serif\" font-size=\"11\">\n"
      << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
      << "<text x=\"" << kWidth / 2 << "\" y=\"20\" text-anchor=\"middle\" font-size=\"13\">" << escape(title)
      << "</text>\n";
}

void unit_axes(std::ostringstream& s, const Frame& f, const char* xlabel, const char* ylabel) {
    s << "<rect x=\"" << num(f.px(0)) << "\" y=\"" << num(f.py(1)) << "\" width=\"" << num(f.px(1) - f.px(0))
      << "\" height=\"" << num(f.py(0) - f.py(1)) << "\" fill=\"none\" stroke=\"black\"/>\n";
    for (int k = 0; k <= 5; ++k) {
        const double t = k / 5.0;
        s << "<text x=\"" << num(f.px(t)) << "\" y=\"" << num(f.py(0) + 15) << "\" text-anchor=\"middle\">"
          << num(t).substr(0, 3) << "</text>\n"
          << "<text x=\"" << num(f.px(0) - 6) << "\" y=\"" << num(f.py(t) + 4) << "\" text-anchor=\"end\">"
          << num(t).substr(0, 3) << "</text>\n";
    }
    s << "<text x=\"" << kWidth / 2 << "\" y=\"" << kHeight - 12 << "\" text-anchor=\"middle\">" << xlabel
      << "</text>\n"
      << "<text x=\"14\" y=\"" << kHeight / 2 << "\" text-anchor=\"middle\" transform=\"rotate(-90 14 "
      << kHeight / 2 << ")\">" << ylabel << "</text>\n"
      << "<line x1=\"" << num(f.px(0)) << "\" y1=\"" << num(f.py(0)) << "\" x2=\"" << num(f.px(1)) << "\" y2=\""
      << num(f.py(1)) << "\" stroke=\"gray\" stroke-dasharray=\"4 3\"/>\n";
}

}  // namespace

std::string reliability_chart(const ReliabilityCurve& curve, const std::string& title) {
    const Frame f{0, 1, 0, 1};
    std::ostringstream s;
    open(s, title);
    const std::size_t n = curve.grid.size();
    const std::size_t stride = std::max<std::size_t>(1, n / 400);
    auto for_each_point = [&](auto&& fn) {
        for (std::size_t i = 0; i < n; i += stride) fn(i);
        if ((n - 1) % stride != 0)
            fn(n - 1);
    };
    if (curve.bands) {
        s << "<path fill=\"#1f77b4\" fill-opacity=\"0.2\" stroke=\"none\" d=\"";
        char cmd = 'M';
        for_each_point([&](std::size_t i) {
            s << cmd << num(f.px(curve.grid.point(i))) << ' ' << num(f.py(curve.bands->upper[i])) << ' ';
            cmd = 'L';
        });
        std::vector<std::size_t> back;
        for_each_point([&](std::size_t i) { back.push_back(i); });
        for (auto it = back.rbegin(); it != back.rend(); ++it)
            s << 'L' << num(f.px(curve.grid.point(*it))) << ' ' << num(f.py(curve.bands->lower[*it])) << ' ';
        s << "Z\"/>\n";
    }
    unit_axes(s, f, "score", "reliability");
    s << "<polyline fill=\"none\" stroke=\"#1f77b4\" stroke-width=\"1.5\" points=\"";
    for_each_point([&](std::size_t i) {
        s << num(f.px(curve.grid.point(i))) << ',' << num(f.py(std::clamp(curve.rel[i], 0.0, 1.0))) << ' ';
    });
    s << "\"/>\n</svg>\n";
    return s.str();
}

std::string diagram_chart(const BinningScheme& binning, const std::vector<DiagramPoint>& points,
                          const std::string& title) {
    const Frame f{0, 1, 0, 1};
    std::ostringstream s;
    open(s, title);
    for (std::size_t j = 0; j + 1 < binning.size(); ++j)
        s << "<line x1=\"" << num(f.px(binning.upper(j))) << "\" y1=\"" << num(f.py(0)) << "\" x2=\""
          << num(f.px(binning.upper(j))) << "\" y2=\"" << num(f.py(1)) << "\" stroke=\"#dddddd\"/>\n";
    unit_axes(s, f, "mean score", "event rate");
    for (std::size_t j = 0; j < points.size(); ++j) {
        const auto& p = points[j];
        if (p.empty)
            continue;
        s << "<line x1=\"" << num(f.px(p.mean_score)) << "\" y1=\"" << num(f.py(p.mean_score)) << "\" x2=\""
          << num(f.px(p.mean_score)) << "\" y2=\"" << num(f.py(p.event_rate))
          << "\" stroke=\"#d62728\" stroke-opacity=\"0.6\"/>\n"
          << "<circle cx=\"" << num(f.px(p.mean_score)) << "\" cy=\"" << num(f.py(p.event_rate))
          << "\" r=\"3.5\" fill=\"#1f77b4\"/>\n";
    }
    s << "</svg>\n";
    return s.str();
}

std::string benchmark_chart(const std::vector<bench::ReportRow>& rows, const std::string& setting) {
    std::map<std::string, std::vector<std::pair<double, double>>> lines;
    double xmin = INFINITY, xmax = -INFINITY, ymin = INFINITY, ymax = -INFINITY;
    for (const auto& r : rows) {
        if (r.setting != setting || r.n_distributions == 0 || !(r.median_p95_error > 0.0))
            continue;
        const double x = std::log10(static_cast<double>(r.eval_size));
        const double y = std::log10(r.median_p95_error);
        lines[r.estimator + " " + r.hyperparams].emplace_back(x, y);
        xmin = std::min(xmin, x), xmax = std::max(xmax, x);
        ymin = std::min(ymin, y), ymax = std::max(ymax, y);
    }
    std::ostringstream s;
    open(s, "median error, " + setting);
    if (lines.empty()) {
        s << "</svg>\n";
        return s.str();
    }
    xmin = std::floor(xmin * 10) / 10 - 0.05, xmax = std::ceil(xmax * 10) / 10 + 0.05;
    ymin = std::floor(ymin) , ymax = std::ceil(ymax);
    if (ymax - ymin < 1)
        ymax = ymin + 1;
    const Frame f{xmin, xmax, ymin, ymax};
    s << "<rect x=\"" << num(f.px(xmin)) << "\" y=\"" << num(f.py(ymax)) << "\" width=\""
      << num(f.px(xmax) - f.px(xmin)) << "\" height=\"" << num(f.py(ymin) - f.py(ymax))
      << "\" fill=\"none\" stroke=\"black\"/>\n";
    for (double d = ymin; d <= ymax + 1e-9; d += 1.0)
        s << "<text x=\"" << num(f.px(xmin) - 6) << "\" y=\"" << num(f.py(d) + 4) << "\" text-anchor=\"end\">1e"
          << static_cast<int>(d) << "</text>\n";
    std::vector<double> xticks;
    for (const auto& [name, pts] : lines)
        for (const auto& p : pts) xticks.push_back(p.first);
    std::sort(xticks.begin(), xticks.end());
    xticks.erase(std::unique(xticks.begin(), xticks.end()), xticks.end());
    for (double x : xticks)
        s << "<text x=\"" << num(f.px(x)) << "\" y=\"" << num(f.py(ymin) + 15) << "\" text-anchor=\"middle\">"
          << static_cast<long>(std::llround(std::pow(10.0, x))) << "</text>\n";
    s << "<text x=\"" << kWidth / 2 << "\" y=\"" << kHeight - 12
      << "\" text-anchor=\"middle\">evaluation size (log)</text>\n";
    std::size_t k = 0;
    for (auto& [name, pts] : lines) {
        std::sort(pts.begin(), pts.end());
        const char* colour = kPalette[k % std::size(kPalette)];
        s << "<polyline fill=\"none\" stroke=\"" << colour << "\" stroke-width=\"1.5\" points=\"";
        for (const auto& [x, y] : pts) s << num(f.px(x)) << ',' << num(f.py(y)) << ' ';
        s << "\"/>\n<text x=\"" << num(f.px(xmax) - 4) << "\" y=\"" << num(f.py(ymax) + 14 + 13.0 * k)
          << "\" text-anchor=\"end\" fill=\"" << colour << "\">" << escape(name) << "</text>\n";
        ++k;
    }
    s << "</svg>\n";
    return s.str();
}

}  // namespace calibrex::svg
