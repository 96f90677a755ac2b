#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <vector>

#include "propagate.hpp"
#include "pulse.hpp"
#include "two_level.hpp"

namespace lzforge {

struct SimplexConfig {
    double initial_simplex_scale = 0.05;
    std::size_t max_iterations = 5000;
    double target_value = 1e-6;
    double reflect = 1.0;
    double expand = 2.0;
    double contract = 0.5;
    double shrink = 0.5;
    std::size_t restarts = 3;

    void validate() const {
        if (!(reflect > 0.0 && expand > reflect && contract > 0.0 && shrink > 0.0))
            throw std::invalid_argument("SimplexConfig: coefficients out of range");
        if (!(initial_simplex_scale > 0.0))
            throw std::invalid_argument("SimplexConfig: initial_simplex_scale must be > 0");
    }
};

struct OptimizationResult {
    std::vector<double> best_parameters;
    double best_value = std::numeric_limits<double>::infinity();
    std::size_t iterations_used = 0;
    bool converged = false;
    std::vector<double> value_history;  // best-so-far, non-increasing
};

namespace detail {

inline double guarded_eval(const std::function<double(const std::vector<double>&)>& f,
                           const std::vector<double>& x) {
    double v;
    try {
        v = f(x);
    } catch (...) {
        return std::numeric_limits<double>::infinity();
    }
    return std::isfinite(v) ? v : std::numeric_limits<double>::infinity();
}

}  // namespace detail

inline OptimizationResult nelder_mead(
    const std::function<double(const std::vector<double>&)>& objective,
    const std::vector<double>& initial, const SimplexConfig& config = {}) {
    config.validate();
    const std::size_t n = initial.size();
    if (n == 0) throw std::invalid_argument("nelder_mead: empty parameter vector");

    OptimizationResult res;
    res.best_parameters = initial;
    res.best_value = detail::guarded_eval(objective, initial);
    if (!std::isfinite(res.best_value))
        throw std::invalid_argument("nelder_mead: objective not finite at initial point");

    auto seed_simplex = [&](const std::vector<double>& center) {
        std::vector<std::vector<double>> pts(n + 1, center);
        for (std::size_t i = 0; i < n; ++i) {
            double step = config.initial_simplex_scale * std::fabs(center[i]);
            if (step == 0.0) step = config.initial_simplex_scale;
            pts[i + 1][i] += step;
        }
        return pts;
    };

    for (std::size_t round = 0; round <= config.restarts; ++round) {
        auto verts = seed_simplex(res.best_parameters);
        std::vector<double> vals(n + 1);
        for (std::size_t i = 0; i <= n; ++i) vals[i] = detail::guarded_eval(objective, verts[i]);

        while (res.iterations_used < config.max_iterations) {
            std::vector<std::size_t> order(n + 1);
            std::iota(order.begin(), order.end(), std::size_t{0});
            std::stable_sort(order.begin(), order.end(),
                             [&](std::size_t a, std::size_t b) { return vals[a] < vals[b]; });
            const std::size_t lo = order[0], hi = order[n], nh = order[n - 1];

            if (vals[lo] < res.best_value) {
                res.best_value = vals[lo];
                res.best_parameters = verts[lo];
            }
            res.value_history.push_back(res.best_value);
            ++res.iterations_used;
            if (res.best_value <= config.target_value) {
                res.converged = true;
                return res;
            }

            double diam = 0.0, scale = 0.0;
            for (std::size_t i = 0; i <= n; ++i) {
                double d = 0.0;
                for (std::size_t k = 0; k < n; ++k) {
                    d = std::max(d, std::fabs(verts[i][k] - verts[lo][k]));
                    scale = std::max(scale, std::fabs(verts[i][k]));
                }
                diam = std::max(diam, d);
            }
            if (diam <= 1e-12 * std::max(1.0, scale)) break;

            std::vector<double> centroid(n, 0.0);
            for (std::size_t i = 0; i <= n; ++i) {
                if (i == hi) continue;
                for (std::size_t k = 0; k < n; ++k) centroid[k] += verts[i][k];
            }
            for (double& c : centroid) c /= static_cast<double>(n);

            auto blend = [&](double coef) {
                std::vector<double> p(n);
                for (std::size_t k = 0; k < n; ++k)
                    p[k] = centroid[k] + coef * (centroid[k] - verts[hi][k]);
                return p;
            };

            auto xr = blend(config.reflect);
            const double fr = detail::guarded_eval(objective, xr);
            if (fr < vals[lo]) {
                auto xe = blend(config.expand);
                const double fe = detail::guarded_eval(objective, xe);
                if (fe < fr) {
                    verts[hi] = xe;
                    vals[hi] = fe;
                } else {
                    verts[hi] = xr;
                    vals[hi] = fr;
                }
                continue;
            }
            if (fr < vals[nh]) {
                verts[hi] = xr;
                vals[hi] = fr;
                continue;
            }
            auto xc = blend(fr < vals[hi] ? config.contract : -config.contract);
            const double fc = detail::guarded_eval(objective, xc);
            if (fc < std::min(fr, vals[hi])) {
                verts[hi] = xc;
                vals[hi] = fc;
                continue;
            }
            for (std::size_t i = 0; i <= n; ++i) {
                if (i == lo) continue;
                for (std::size_t k = 0; k < n; ++k)
                    verts[i][k] = verts[lo][k] + config.shrink * (verts[i][k] - verts[lo][k]);
                vals[i] = detail::guarded_eval(objective, verts[i]);
            }
        }
        if (res.iterations_used >= config.max_iterations) break;
    }
    res.converged = res.best_value <= config.target_value;
    return res;
}

// NM over (v, lambda, omega, phi) of the bare Eq. (2) pulse on [-T/2, T/2];
// v and omega are searched in log space to stay positive
inline OptimizationResult optimize_oscillation_params(const TwoLevelSystem& sys, double T,
                                                      const std::vector<double>& initial,
                                                      const SimplexConfig& config = {}) {
    sys.validate();
    if (!(T > 0.0)) throw std::invalid_argument("optimize_oscillation_params: T must be > 0");
    if (initial.size() != 4)
        throw std::invalid_argument("optimize_oscillation_params: initial must be (v, lambda, omega, phi)");
    if (!(initial[0] > 0.0) || !(initial[2] > 0.0))
        throw std::invalid_argument("optimize_oscillation_params: v and omega must be > 0");

    auto wrap_phi = [](double phi) {
        const double two_pi = 2.0 * M_PI;
        double w = std::fmod(phi, two_pi);
        if (w < 0.0) w += two_pi;
        return w;
    };

    if (sys.delta == 0.0) {
        OptimizationResult res;
        res.best_parameters = initial;
        res.best_parameters[3] = wrap_phi(initial[3]);
        res.best_value = 0.0;
        res.converged = true;
        res.value_history.push_back(0.0);
        return res;
    }

    auto decode = [&](const std::vector<double>& u) {
        return std::vector<double>{std::exp(u[0]), u[1], std::exp(u[2]), u[3]};
    };
    auto objective = [&](const std::vector<double>& u) {
        const auto p = decode(u);
        LinearOscillating pulse{p[0], p[1], p[2], p[3], std::nullopt};
        const PulseWaveform wf = pulse;
        const std::size_t steps = recommended_steps(sys, wf, -0.5 * T, 0.5 * T);
        const auto prop = propagate(sys, wf, -0.5 * T, 0.5 * T, steps, {cplx(0.0), cplx(1.0)}, 0);
        return survival_error(prop.unitary);
    };

    const std::vector<double> u0{std::log(initial[0]), initial[1], std::log(initial[2]),
                                 initial[3]};
    OptimizationResult res = nelder_mead(objective, u0, config);
    res.best_parameters = decode(res.best_parameters);
    res.best_parameters[3] = wrap_phi(res.best_parameters[3]);
    return res;
}

}  // namespace lzforge
