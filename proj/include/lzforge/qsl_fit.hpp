#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <optional>
#include <stdexcept>
#include <utility>
#include <vector>

namespace lzforge {

// Eq. (10): T_QSL(delta) = t0 + c / (delta + delta0)
struct QslFit {
    double t0 = 0.0;
    double c = 0.0;
    double delta0 = 0.0;
    bool t0_fixed = false;
    std::vector<std::pair<double, double>> data;  // (delta, T_QSL)
    std::vector<double> residuals;                // data minus fit

    double evaluate(double delta) const { return t0 + c / (delta + delta0); }

    double residual_rms() const {
        if (residuals.empty()) return 0.0;
        double s = 0.0;
        for (double r : residuals) s += r * r;
        return std::sqrt(s / static_cast<double>(residuals.size()));
    }
};

namespace detail {

inline double qsl_model(double d, double t0, double c, double d0) { return t0 + c / (d + d0); }

inline double qsl_sse(const std::vector<std::pair<double, double>>& data, double t0, double c,
                      double d0) {
    double s = 0.0;
    for (const auto& [d, t] : data) {
        const double r = qsl_model(d, t0, c, d0) - t;
        s += r * r;
    }
    return s;
}

// least squares over the linear parameters at fixed delta0;
// returns false when the normal equations are singular
inline bool qsl_linear_solve(const std::vector<std::pair<double, double>>& data, double d0,
                             const std::optional<double>& fix_t0, double& t0, double& c) {
    const auto n = static_cast<double>(data.size());
    if (fix_t0) {
        double num = 0.0, den = 0.0;
        for (const auto& [d, t] : data) {
            const double x = 1.0 / (d + d0);
            num += x * (t - *fix_t0);
            den += x * x;
        }
        if (!(den > 0.0)) return false;
        t0 = *fix_t0;
        c = num / den;
        return true;
    }
    double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
    for (const auto& [d, t] : data) {
        const double x = 1.0 / (d + d0);
        sx += x;
        sy += t;
        sxx += x * x;
        sxy += x * t;
    }
    const double det = n * sxx - sx * sx;
    if (std::fabs(det) < 1e-300) return false;
    c = (n * sxy - sx * sy) / det;
    t0 = (sy * sxx - sx * sxy) / det;
    return true;
}

// Gaussian elimination with partial pivoting for the p x p normal equations
template <std::size_t P>
inline bool solve_small(std::array<std::array<double, P>, P> m, std::array<double, P> g,
                        std::array<double, P>& x) {
    for (std::size_t col = 0; col < P; ++col) {
        std::size_t piv = col;
        for (std::size_t r = col + 1; r < P; ++r)
            if (std::fabs(m[r][col]) > std::fabs(m[piv][col])) piv = r;
        if (std::fabs(m[piv][col]) < 1e-300) return false;
        std::swap(m[col], m[piv]);
        std::swap(g[col], g[piv]);
        for (std::size_t r = col + 1; r < P; ++r) {
            const double f = m[r][col] / m[col][col];
            for (std::size_t cc = col; cc < P; ++cc) m[r][cc] -= f * m[col][cc];
            g[r] -= f * g[col];
        }
    }
    for (std::size_t r = P; r-- > 0;) {
        double s = g[r];
        for (std::size_t cc = r + 1; cc < P; ++cc) s -= m[r][cc] * x[cc];
        x[r] = s / m[r][r];
    }
    return true;
}

// one damped Gauss-Newton pass over the active parameters; updates in place
// and returns whether any step was accepted
template <std::size_t P>
inline bool qsl_levenberg(const std::vector<std::pair<double, double>>& data, bool free_t0,
                          double dmin, double& t0, double& c, double& d0, double& sse) {
    double lam = 1e-3;
    bool any = false;
    for (int iter = 0; iter < 400; ++iter) {
        std::array<std::array<double, P>, P> a{};
        std::array<double, P> g{};
        for (const auto& [d, t] : data) {
            const double u = 1.0 / (d + d0);
            std::array<double, P> row{};
            std::size_t k = 0;
            if (free_t0) row[k++] = 1.0;
            row[k++] = u;
            row[k++] = -c * u * u;
            const double r = qsl_model(d, t0, c, d0) - t;
            for (std::size_t i = 0; i < P; ++i) {
                g[i] += row[i] * r;
                for (std::size_t j = 0; j < P; ++j) a[i][j] += row[i] * row[j];
            }
        }
        bool stepped = false;
        for (int damp = 0; damp < 60; ++damp) {
            auto m = a;
            for (std::size_t i = 0; i < P; ++i) m[i][i] += lam * a[i][i];
            std::array<double, P> x{};
            if (!solve_small<P>(m, g, x)) {
                lam *= 10.0;
                continue;
            }
            std::size_t k = 0;
            const double nt0 = free_t0 ? t0 - x[k++] : t0;
            const double nc = c - x[k++];
            const double nd0 = d0 - x[k++];
            if (!(nd0 > -dmin)) {  // keep the pole off the data range
                lam *= 10.0;
                continue;
            }
            const double nsse = qsl_sse(data, nt0, nc, nd0);
            if (nsse <= sse) {
                const double rel = std::max(
                    {std::fabs(nt0 - t0) / std::max(1.0, std::fabs(t0)),
                     std::fabs(nc - c) / std::max(1e-300, std::fabs(c)),
                     std::fabs(nd0 - d0) / std::max(1e-300, std::fabs(d0))});
                t0 = nt0;
                c = nc;
                d0 = nd0;
                sse = nsse;
                lam = std::max(lam * 0.3, 1e-12);
                stepped = true;
                any = true;
                if (rel < 1e-14) return any;
                break;
            }
            lam *= 10.0;
        }
        if (!stepped) break;
    }
    return any;
}

}  // namespace detail

// nonlinear least squares for Eq. (10): a delta0 grid with exact linear
// subproblems seeds a Levenberg-damped Gauss-Newton refinement
inline QslFit fit_qsl(const std::vector<std::pair<double, double>>& data,
                      std::optional<double> fix_t0 = std::nullopt) {
    const std::size_t min_pts = fix_t0 ? 2 : 3;
    if (data.size() < min_pts)
        throw std::invalid_argument("fit_qsl: need at least 3 points (2 with t0 fixed)");
    double dmin = data.front().first, dmax = dmin;
    for (const auto& [d, t] : data) {
        if (!std::isfinite(d) || !std::isfinite(t))
            throw std::invalid_argument("fit_qsl: non-finite data point");
        if (!(d >= 0.0)) throw std::invalid_argument("fit_qsl: delta must be >= 0");
        dmin = std::min(dmin, d);
        dmax = std::max(dmax, d);
    }
    if (dmax - dmin < 1e-15 * std::max(1.0, dmax))
        throw std::invalid_argument("fit_qsl: degenerate data, all delta equal");

    QslFit fit;
    fit.t0_fixed = fix_t0.has_value();
    fit.data = data;

    double t0 = fix_t0.value_or(0.0), c = 0.0, d0 = dmax, sse = HUGE_VAL;

    // exact interpolation for the two-point fixed-t0 case
    bool seeded = false;
    if (fix_t0 && data.size() == 2) {
        const auto [d1, T1] = data[0];
        const auto [d2, T2] = data[1];
        const double y1 = T1 - *fix_t0, y2 = T2 - *fix_t0;
        const double den = y1 - y2;
        if (std::fabs(den) > 1e-14 * std::max(std::fabs(y1), std::fabs(y2))) {
            const double cand_d0 = (y2 * d2 - y1 * d1) / den;
            if (cand_d0 > -dmin) {
                d0 = cand_d0;
                c = y1 * (d1 + d0);
                t0 = *fix_t0;
                sse = detail::qsl_sse(data, t0, c, d0);
                seeded = true;
            }
        }
    }

    if (!seeded) {
        const double scale = std::max(dmax, 1e-12);
        for (int k = 0; k <= 240; ++k) {
            const double cand = scale * std::pow(10.0, -8.0 + 10.0 * k / 240.0);
            double tt = 0.0, cc = 0.0;
            if (!detail::qsl_linear_solve(data, cand, fix_t0, tt, cc)) continue;
            const double s = detail::qsl_sse(data, tt, cc, cand);
            if (s < sse) {
                sse = s;
                t0 = tt;
                c = cc;
                d0 = cand;
            }
        }
        if (!std::isfinite(sse)) throw std::runtime_error("fit_qsl: no admissible seed found");
        if (fix_t0)
            detail::qsl_levenberg<2>(data, false, dmin, t0, c, d0, sse);
        else
            detail::qsl_levenberg<3>(data, true, dmin, t0, c, d0, sse);
    }

    fit.t0 = t0;
    fit.c = c;
    fit.delta0 = d0;
    fit.residuals.reserve(data.size());
    for (const auto& [d, t] : data) fit.residuals.push_back(t - fit.evaluate(d));
    return fit;
}

}  // namespace lzforge
