#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <stdexcept>
#include <vector>

#include "propagate.hpp"
#include "pulse.hpp"
#include "two_level.hpp"

namespace lzforge {

struct GrapeConfig {
    std::size_t pixel_count = 256;
    double learning_rate = 1e-3;
    std::size_t max_iterations = 200000;
    double target_error = 1e-5;
    std::size_t buffer_pixels = 3;
    std::optional<double> smoothing_sigma;  // in pixels, applied to the update
    bool record_history = true;

    void validate() const {
        if (!(learning_rate > 0.0))
            throw std::invalid_argument("GrapeConfig: learning_rate must be > 0");
        if (pixel_count <= 2 * buffer_pixels)
            throw std::invalid_argument("GrapeConfig: pixel_count must exceed 2*buffer_pixels");
    }
};

struct GrapeResult {
    Pixelated best_pulse;
    double best_fidelity = 0.0;
    double best_error = 1.0;
    std::size_t iterations_used = 0;
    bool converged = false;
    std::vector<double> fidelity_history;  // non-decreasing under backtracking
};

namespace detail {

inline cplx trace_target_prod(const Unitary2& target_dag, const Unitary2& u) {
    return target_dag.u00 * u.u00 + target_dag.u01 * u.u10 + target_dag.u10 * u.u01 +
           target_dag.u11 * u.u11;
}

// d/d eps of exp(-i (eps sz + delta sx) dt / 2)
inline void step_unitary_derivative(double eps, double delta, double dt, Unitary2& du) {
    const double a = 0.5 * eps;
    const double b = 0.5 * delta;
    const double e = std::sqrt(a * a + b * b);
    if (e < 1e-100) {
        du.u00 = cplx(0.0, -0.5 * dt);
        du.u01 = du.u10 = 0.0;
        du.u11 = cplx(0.0, 0.5 * dt);
        return;
    }
    const double th = e * dt;
    const double c = std::cos(th), s = std::sin(th);
    const double nz = a / e, nx = b / e;
    const double thp = 0.5 * dt * a / e;
    const double nzp = 0.5 * b * b / (e * e * e);
    const double nxp = -0.5 * a * b / (e * e * e);
    du.u00 = cplx(-s * thp, -(c * thp * nz + s * nzp));
    du.u01 = cplx(0.0, -(c * thp * nx + s * nxp));
    du.u10 = du.u01;
    du.u11 = cplx(-s * thp, c * thp * nz + s * nzp);
}

}  // namespace detail

inline double grape_fidelity(const TwoLevelSystem& sys, const Pixelated& pulse,
                             const Unitary2& target) {
    Unitary2 u;
    for (double eps : pulse.values) u = mul(step_unitary(eps, sys.delta, pulse.dt), u);
    return gate_fidelity(u, target);
}

// analytic gradient of Eq. (8) with respect to each pixel amplitude;
// the first/last buffer_pixels entries are forced to zero
inline std::vector<double> grape_gradient(const TwoLevelSystem& sys, const Pixelated& pulse,
                                          const Unitary2& target, std::size_t buffer_pixels = 0,
                                          double* fidelity_out = nullptr) {
    sys.validate();
    validate(pulse);
    const std::size_t n = pulse.values.size();
    const Unitary2 target_dag = dagger(target);

    std::vector<Unitary2> prefix(n + 1);
    for (std::size_t j = 0; j < n; ++j)
        prefix[j + 1] = mul(step_unitary(pulse.values[j], sys.delta, pulse.dt), prefix[j]);

    const cplx g = detail::trace_target_prod(target_dag, prefix[n]);
    if (fidelity_out) *fidelity_out = 0.25 * std::norm(g);
    const cplx gc = std::conj(g);

    std::vector<double> grad(n, 0.0);
    Unitary2 suffix;  // U_n ... U_{j+1}
    Unitary2 du;
    for (std::size_t jj = n; jj-- > 0;) {
        detail::step_unitary_derivative(pulse.values[jj], sys.delta, pulse.dt, du);
        const Unitary2 m = mul(suffix, mul(du, prefix[jj]));
        grad[jj] = 0.5 * (gc * detail::trace_target_prod(target_dag, m)).real();
        suffix = mul(suffix, step_unitary(pulse.values[jj], sys.delta, pulse.dt));
    }
    for (std::size_t k = 0; k < std::min(buffer_pixels, n); ++k) {
        grad[k] = 0.0;
        grad[n - 1 - k] = 0.0;
    }
    return grad;
}

// first-order ascent u_j <- u_j + lr * grad_j with backtracking on lr
inline GrapeResult grape_optimize(const TwoLevelSystem& sys, const Pixelated& initial,
                                  const Unitary2& target, const GrapeConfig& config) {
    sys.validate();
    validate(initial);
    config.validate();
    if (initial.values.size() != config.pixel_count)
        throw std::invalid_argument("grape_optimize: initial pixel count must equal config.pixel_count");

    const std::size_t n = config.pixel_count;
    const std::size_t nbuf = config.buffer_pixels;
    GrapeResult res;
    res.best_pulse = initial;

    double fid = grape_fidelity(sys, res.best_pulse, target);
    if (config.record_history) res.fidelity_history.push_back(fid);
    double lr = config.learning_rate;
    Pixelated trial = res.best_pulse;

    while (1.0 - fid > config.target_error && res.iterations_used < config.max_iterations) {
        auto dir = grape_gradient(sys, res.best_pulse, target, nbuf);
        if (config.smoothing_sigma) {
            dir = gaussian_smooth_values(dir, *config.smoothing_sigma);
            for (std::size_t k = 0; k < std::min(nbuf, n); ++k) {
                dir[k] = 0.0;
                dir[n - 1 - k] = 0.0;
            }
        }
        bool improved = false;
        double trial_fid = fid;
        for (int bt = 0; bt < 64; ++bt) {
            for (std::size_t j = 0; j < n; ++j)
                trial.values[j] = res.best_pulse.values[j] + lr * dir[j];
            trial_fid = grape_fidelity(sys, trial, target);
            if (trial_fid > fid) {
                improved = true;
                break;
            }
            lr *= 0.5;
        }
        if (!improved) break;  // stalled line search
        std::swap(res.best_pulse.values, trial.values);
        fid = trial_fid;
        lr *= 1.1;
        ++res.iterations_used;
        if (config.record_history) res.fidelity_history.push_back(fid);
    }

    if (config.smoothing_sigma) {
        auto smoothed = gaussian_smooth_values(res.best_pulse.values, *config.smoothing_sigma);
        for (std::size_t k = 0; k < std::min(nbuf, n); ++k) {
            smoothed[k] = initial.values[k];
            smoothed[n - 1 - k] = initial.values[n - 1 - k];
        }
        res.best_pulse.values = std::move(smoothed);
        // history documents the monotone ascent; the output pass is scored
        // separately through best_fidelity
        fid = grape_fidelity(sys, res.best_pulse, target);
    }

    res.best_fidelity = fid;
    res.best_error = 1.0 - fid;
    res.converged = res.best_error <= config.target_error;
    return res;
}

}  // namespace lzforge
