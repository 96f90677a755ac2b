#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <vector>

#include "pulse.hpp"
#include "two_level.hpp"

namespace lzforge {

struct Trajectory {
    std::vector<double> times;
    std::vector<std::array<cplx, 2>> states;
    std::vector<double> populations;  // |<0|psi>|^2
};

struct PropagationResult {
    Unitary2 unitary;
    Trajectory trajectory;
};

// exact step propagator exp(-i (eps sz + delta sx) dt / 2)
inline Unitary2 step_unitary(double eps, double delta, double dt) {
    const double a = 0.5 * eps;
    const double b = 0.5 * delta;
    const double e = std::sqrt(a * a + b * b);
    Unitary2 u;
    if (e < 1e-300) return u;
    const double th = e * dt;
    const double c = std::cos(th), s = std::sin(th);
    u.u00 = cplx(c, -s * (a / e));
    u.u01 = cplx(0.0, -s * (b / e));
    u.u10 = u.u01;
    u.u11 = cplx(c, s * (a / e));
    return u;
}

namespace detail {

inline double abs_eps_bound(const LinearOscillating& p, double t0, double t1) {
    return std::max(std::fabs(p.v * t0), std::fabs(p.v * t1)) + std::fabs(p.lambda_r);
}

inline double abs_eps_bound(const ErfTan& p, double, double) { return p.eps0; }

inline double abs_eps_bound(const Pixelated& p, double, double) {
    double m = 0.0;
    for (double v : p.values) m = std::max(m, std::fabs(v));
    return m;
}

inline double rate_scale(const PulseWaveform& p, double delta, double t0, double t1) {
    double r = std::visit([&](const auto& w) { return abs_eps_bound(w, t0, t1); }, p);
    if (const auto* lo = std::get_if<LinearOscillating>(&p)) r = std::max(r, std::fabs(lo->omega));
    return std::max(r, delta);
}

}  // namespace detail

// step count for the 0.05 rad-per-step rule; pixel-aligned for Pixelated
// pulses spanning their full domain so each step sees a constant amplitude
inline std::size_t recommended_steps(const TwoLevelSystem& sys, const PulseWaveform& pulse,
                                     double t_start, double t_end) {
    if (!(t_end > t_start)) throw std::domain_error("recommended_steps: empty interval");
    const double span = t_end - t_start;
    const double rate = detail::rate_scale(pulse, sys.delta, t_start, t_end);
    auto base = static_cast<std::size_t>(std::ceil(span * std::max(rate, 1e-12) / 0.05));
    base = std::max<std::size_t>(base, 16);
    if (const auto* px = std::get_if<Pixelated>(&pulse)) {
        const double dom = px->dt * static_cast<double>(px->values.size());
        if (std::fabs(t_start) < 1e-12 * dom && std::fabs(t_end - dom) < 1e-12 * dom) {
            const std::size_t n = px->values.size();
            const std::size_t per = (base + n - 1) / n;
            return n * std::max<std::size_t>(per, 1);
        }
    }
    return base;
}

inline PropagationResult propagate(const TwoLevelSystem& sys, const PulseWaveform& pulse,
                                   double t_start, double t_end, std::size_t steps,
                                   std::array<cplx, 2> initial = {cplx(0.0), cplx(1.0)},
                                   std::size_t trajectory_samples = 2000) {
    sys.validate();
    validate(pulse);
    if (steps == 0) throw std::domain_error("propagate: steps must be >= 1");
    if (!(t_end > t_start)) throw std::domain_error("propagate: t_end must exceed t_start");

    const double nrm = std::sqrt(std::norm(initial[0]) + std::norm(initial[1]));
    if (!(nrm > 0.0)) throw std::invalid_argument("propagate: initial state must be nonzero");
    initial[0] /= nrm;
    initial[1] /= nrm;

    const double dt = (t_end - t_start) / static_cast<double>(steps);
    const std::size_t nsamp = std::min<std::size_t>(trajectory_samples, steps);
    const std::size_t stride = nsamp ? std::max<std::size_t>(steps / nsamp, 1) : steps + 1;

    PropagationResult res;
    res.trajectory.times.reserve(nsamp + 2);
    res.trajectory.states.reserve(nsamp + 2);
    res.trajectory.populations.reserve(nsamp + 2);

    Unitary2 u;
    auto record = [&](std::size_t k) {
        const cplx a = u.u00 * initial[0] + u.u01 * initial[1];
        const cplx b = u.u10 * initial[0] + u.u11 * initial[1];
        res.trajectory.times.push_back(t_start + dt * static_cast<double>(k));
        res.trajectory.states.push_back({a, b});
        res.trajectory.populations.push_back(std::norm(a));
    };
    record(0);
    for (std::size_t k = 0; k < steps; ++k) {
        const double tm = t_start + (static_cast<double>(k) + 0.5) * dt;
        const double eps = evaluate_pulse(pulse, tm);
        if (!std::isfinite(eps)) throw std::runtime_error("propagate: non-finite pulse value");
        u = mul(step_unitary(eps, sys.delta, dt), u);
        if ((k + 1) % stride == 0 || k + 1 == steps) record(k + 1);
    }
    res.unitary = u;
    return res;
}

}  // namespace lzforge
