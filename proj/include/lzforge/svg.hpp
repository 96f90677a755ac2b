#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace lzforge {

struct SvgSeries {
    std::vector<double> x;
    std::vector<double> y;
    std::string color = "#1f77b4";
    bool markers = false;  // draw circles instead of a polyline
};

namespace detail {

struct AxisMap {
    double lo = 0.0, hi = 1.0;
    double p0 = 0.0, p1 = 1.0;  // pixel range
    double to_px(double v) const { return p0 + (v - lo) / (hi - lo) * (p1 - p0); }
};

inline void expand_range(double& lo, double& hi) {
    if (!(hi > lo)) {
        const double pad = std::max(1.0, std::fabs(lo));
        lo -= pad;
        hi += pad;
    }
}

inline std::string fmt_tick(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.4g", v);
    return buf;
}

inline void svg_axes(std::ostringstream& s, const AxisMap& xm, const AxisMap& ym,
                     const std::string& title, const std::string& xlabel,
                     const std::string& ylabel) {
    s << "<rect x='" << xm.p0 << "' y='" << ym.p1 << "' width='" << xm.p1 - xm.p0
      << "' height='" << ym.p0 - ym.p1
      << "' fill='none' stroke='#333' stroke-width='1'/>\n";
    for (int k = 0; k <= 4; ++k) {
        const double fx = xm.lo + (xm.hi - xm.lo) * k / 4.0;
        const double px = xm.to_px(fx);
        s << "<line x1='" << px << "' y1='" << ym.p0 << "' x2='" << px << "' y2='"
          << ym.p0 + 5 << "' stroke='#333'/>\n";
        s << "<text x='" << px << "' y='" << ym.p0 + 18
          << "' font-size='11' text-anchor='middle'>" << fmt_tick(fx) << "</text>\n";
        const double fy = ym.lo + (ym.hi - ym.lo) * k / 4.0;
        const double py = ym.to_px(fy);
        s << "<line x1='" << xm.p0 - 5 << "' y1='" << py << "' x2='" << xm.p0 << "' y2='" << py
          << "' stroke='#333'/>\n";
        s << "<text x='" << xm.p0 - 8 << "' y='" << py + 4
          << "' font-size='11' text-anchor='end'>" << fmt_tick(fy) << "</text>\n";
    }
    const double cx = 0.5 * (xm.p0 + xm.p1);
    s << "<text x='" << cx << "' y='20' font-size='14' text-anchor='middle'>" << title
      << "</text>\n";
    s << "<text x='" << cx << "' y='" << ym.p0 + 36 << "' font-size='12' text-anchor='middle'>"
      << xlabel << "</text>\n";
    s << "<text x='16' y='" << 0.5 * (ym.p0 + ym.p1)
      << "' font-size='12' text-anchor='middle' transform='rotate(-90 16 "
      << 0.5 * (ym.p0 + ym.p1) << ")'>" << ylabel << "</text>\n";
}

// five-stop blue-to-yellow gradient
inline std::string heat_color(double f) {
    static const double stops[5][3] = {{68, 1, 84},
                                       {59, 82, 139},
                                       {33, 145, 140},
                                       {94, 201, 98},
                                       {253, 231, 37}};
    f = std::clamp(f, 0.0, 1.0) * 4.0;
    const int k = std::min(3, static_cast<int>(f));
    const double w = f - k;
    char buf[16];
    std::snprintf(buf, sizeof(buf), "#%02x%02x%02x",
                  static_cast<int>(stops[k][0] + w * (stops[k + 1][0] - stops[k][0])),
                  static_cast<int>(stops[k][1] + w * (stops[k + 1][1] - stops[k][1])),
                  static_cast<int>(stops[k][2] + w * (stops[k + 1][2] - stops[k][2])));
    return buf;
}

}  // namespace detail

inline std::string svg_line_plot(const std::vector<SvgSeries>& series, const std::string& title,
                                 const std::string& xlabel, const std::string& ylabel,
                                 int width = 760, int height = 480) {
    double xlo = HUGE_VAL, xhi = -HUGE_VAL, ylo = HUGE_VAL, yhi = -HUGE_VAL;
    for (const auto& sr : series) {
        if (sr.x.size() != sr.y.size())
            throw std::invalid_argument("svg_line_plot: series length mismatch");
        for (std::size_t i = 0; i < sr.x.size(); ++i) {
            if (!std::isfinite(sr.x[i]) || !std::isfinite(sr.y[i])) continue;
            xlo = std::min(xlo, sr.x[i]);
            xhi = std::max(xhi, sr.x[i]);
            ylo = std::min(ylo, sr.y[i]);
            yhi = std::max(yhi, sr.y[i]);
        }
    }
    if (!(xlo <= xhi)) {
        xlo = 0.0;
        xhi = 1.0;
        ylo = 0.0;
        yhi = 1.0;
    }
    detail::expand_range(xlo, xhi);
    detail::expand_range(ylo, yhi);
    const double ypad = 0.05 * (yhi - ylo);
    ylo -= ypad;
    yhi += ypad;

    detail::AxisMap xm{xlo, xhi, 64.0, width - 20.0};
    detail::AxisMap ym{ylo, yhi, height - 48.0, 32.0};

    std::ostringstream s;
    s << "<svg xmlns='http://www.w3.org/2000/svg' width='" << width << "' height='" << height
      << "' viewBox='0 0 " << width << ' ' << height << "'>\n";
    s << "<rect width='100%' height='100%' fill='white'/>\n";
    detail::svg_axes(s, xm, ym, title, xlabel, ylabel);
    for (const auto& sr : series) {
        if (sr.markers) {
            for (std::size_t i = 0; i < sr.x.size(); ++i) {
                if (!std::isfinite(sr.x[i]) || !std::isfinite(sr.y[i])) continue;
                s << "<circle cx='" << xm.to_px(sr.x[i]) << "' cy='" << ym.to_px(sr.y[i])
                  << "' r='3' fill='" << sr.color << "'/>\n";
            }
            continue;
        }
        bool open = false;
        for (std::size_t i = 0; i < sr.x.size(); ++i) {
            if (!std::isfinite(sr.x[i]) || !std::isfinite(sr.y[i])) {
                if (open) s << "'/>\n";
                open = false;
                continue;
            }
            if (!open) {
                s << "<polyline fill='none' stroke='" << sr.color
                  << "' stroke-width='1.5' points='";
                open = true;
            }
            s << xm.to_px(sr.x[i]) << ',' << ym.to_px(sr.y[i]) << ' ';
        }
        if (open) s << "'/>\n";
    }
    s << "</svg>\n";
    return s.str();
}

inline std::string svg_heatmap(const std::vector<double>& xs, const std::vector<double>& ys,
                               const std::vector<double>& values, const std::string& title,
                               const std::string& xlabel, const std::string& ylabel,
                               int width = 760, int height = 520) {
    if (xs.empty() || ys.empty() || values.size() != xs.size() * ys.size())
        throw std::invalid_argument("svg_heatmap: dimensions do not match");
    double vlo = HUGE_VAL, vhi = -HUGE_VAL;
    for (double v : values) {
        if (!std::isfinite(v)) continue;
        vlo = std::min(vlo, v);
        vhi = std::max(vhi, v);
    }
    if (!(vlo <= vhi)) {
        vlo = 0.0;
        vhi = 1.0;
    }
    detail::expand_range(vlo, vhi);

    double xlo = *std::min_element(xs.begin(), xs.end());
    double xhi = *std::max_element(xs.begin(), xs.end());
    double ylo = *std::min_element(ys.begin(), ys.end());
    double yhi = *std::max_element(ys.begin(), ys.end());
    detail::expand_range(xlo, xhi);
    detail::expand_range(ylo, yhi);
    detail::AxisMap xm{xlo, xhi, 64.0, width - 20.0};
    detail::AxisMap ym{ylo, yhi, height - 48.0, 32.0};

    std::ostringstream s;
    s << "<svg xmlns='http://www.w3.org/2000/svg' width='" << width << "' height='" << height
      << "' viewBox='0 0 " << width << ' ' << height << "'>\n";
    s << "<rect width='100%' height='100%' fill='white'/>\n";
    // cell extents from midpoints between neighbors
    auto edges = [](const std::vector<double>& g) {
        std::vector<double> e(g.size() + 1);
        for (std::size_t k = 1; k < g.size(); ++k) e[k] = 0.5 * (g[k - 1] + g[k]);
        e.front() = g.size() > 1 ? g.front() - 0.5 * (g[1] - g[0]) : g.front() - 0.5;
        e.back() = g.size() > 1 ? g.back() + 0.5 * (g.back() - g[g.size() - 2]) : g.back() + 0.5;
        return e;
    };
    const auto xe = edges(xs), ye = edges(ys);
    for (std::size_t i = 0; i < xs.size(); ++i) {
        for (std::size_t j = 0; j < ys.size(); ++j) {
            const double v = values[i * ys.size() + j];
            const double f = std::isfinite(v) ? (v - vlo) / (vhi - vlo) : 0.0;
            const double px0 = xm.to_px(xe[i]), px1 = xm.to_px(xe[i + 1]);
            const double py0 = ym.to_px(ye[j]), py1 = ym.to_px(ye[j + 1]);
            s << "<rect x='" << std::min(px0, px1) << "' y='" << std::min(py0, py1)
              << "' width='" << std::fabs(px1 - px0) << "' height='" << std::fabs(py1 - py0)
              << "' fill='" << detail::heat_color(f) << "'/>\n";
        }
    }
    detail::svg_axes(s, xm, ym, title, xlabel, ylabel);
    s << "</svg>\n";
    return s.str();
}

inline void write_svg(const std::string& path, const std::string& content) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open for writing: " + path);
    out << content;
    if (!out) throw std::runtime_error("write failed: " + path);
}

}  // namespace lzforge
