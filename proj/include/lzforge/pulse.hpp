#pragma once

#include <cmath>
#include <optional>
#include <stdexcept>
#include <variant>
#include <vector>

namespace lzforge {

struct Window {
    double T = 0.0;   // total pulse duration
    double Ts = 0.0;  // switching (ramp) time
};

// Eq. (2), optionally with the Eq. (7) amplitude window
struct LinearOscillating {
    double v = 0.0;
    double lambda_r = 0.0;
    double omega = 0.0;
    double phi = 0.0;
    std::optional<Window> window;
};

// Eq. (9); delta enters the closed form, so the waveform carries it
struct ErfTan {
    double eps0 = 0.0;
    double lambda_erf = 0.0;
    double T = 0.0;
    double delta = 1.0;
};

// piecewise-constant pulse on [0, N*dt)
struct Pixelated {
    std::vector<double> values;
    double dt = 0.0;
};

using PulseWaveform = std::variant<LinearOscillating, ErfTan, Pixelated>;

inline void validate(const LinearOscillating& p) {
    if (p.window) {
        if (!(p.window->Ts > 0.0))
            throw std::invalid_argument("LinearOscillating: window.Ts must be > 0");
        if (!(p.window->T > p.window->Ts))
            throw std::invalid_argument("LinearOscillating: window.T must exceed window.Ts");
    }
}

inline void validate(const ErfTan& p) {
    if (!(p.T > 0.0)) throw std::invalid_argument("ErfTan: T must be > 0");
    if (!(p.eps0 > 0.0)) throw std::invalid_argument("ErfTan: eps0 must be > 0");
    if (!(p.lambda_erf > 0.0)) throw std::invalid_argument("ErfTan: lambda_erf must be > 0");
    if (!(p.delta > 0.0)) throw std::invalid_argument("ErfTan: delta must be > 0");
}

inline void validate(const Pixelated& p) {
    if (p.values.empty()) throw std::invalid_argument("Pixelated: values must be non-empty");
    if (!(p.dt > 0.0)) throw std::invalid_argument("Pixelated: dt must be > 0");
}

inline void validate(const PulseWaveform& p) {
    std::visit([](const auto& w) { validate(w); }, p);
}

// Eq. (7)
inline double window_amplitude(const LinearOscillating& p, double t) {
    if (!p.window) return p.lambda_r;
    const double at = std::fabs(t);
    const double T = p.window->T, Ts = p.window->Ts;
    if (at < 0.5 * (T - Ts)) return p.lambda_r;
    if (at < 0.5 * (T + Ts)) return p.lambda_r / Ts * (0.5 * (T + Ts) - at);
    return 0.0;
}

inline double evaluate_pulse(const LinearOscillating& p, double t) {
    return p.v * t + window_amplitude(p, t) * std::cos(p.omega * t + p.phi);
}

inline double evaluate_pulse(const ErfTan& p, double t) {
    if (std::fabs(t) > 0.5 * p.T * (1.0 + 1e-12))
        throw std::domain_error("ErfTan: |t| exceeds T/2");
    const double pref =
        (std::atan(p.delta / p.eps0) - 0.5 * M_PI) / std::erf(-0.5 * p.lambda_erf * p.T);
    return -p.delta * std::tan(pref * std::erf(p.lambda_erf * t));
}

inline double evaluate_pulse(const Pixelated& p, double t) {
    const double span = p.dt * static_cast<double>(p.values.size());
    if (t < 0.0 || t >= span)
        throw std::domain_error("Pixelated: t outside [0, N*dt)");
    auto idx = static_cast<std::size_t>(std::floor(t / p.dt));
    if (idx >= p.values.size()) idx = p.values.size() - 1;
    return p.values[idx];
}

inline double evaluate_pulse(const PulseWaveform& p, double t) {
    return std::visit([t](const auto& w) { return evaluate_pulse(w, t); }, p);
}

// midpoint sampling of any waveform onto n pixels covering [t_start, t_end)
inline Pixelated pixelate(const PulseWaveform& p, std::size_t n, double t_start, double t_end) {
    if (n == 0) throw std::invalid_argument("pixelate: n must be >= 1");
    if (!(t_end > t_start)) throw std::invalid_argument("pixelate: t_end must exceed t_start");
    Pixelated out;
    out.dt = (t_end - t_start) / static_cast<double>(n);
    out.values.resize(n);
    for (std::size_t j = 0; j < n; ++j)
        out.values[j] = evaluate_pulse(p, t_start + (static_cast<double>(j) + 0.5) * out.dt);
    return out;
}

// Gaussian smoothing of a pixel array, truncated at 4 sigma, kernel
// renormalized near the edges so constants are preserved exactly.
inline std::vector<double> gaussian_smooth_values(const std::vector<double>& v, double sigma) {
    if (!(sigma > 0.0)) return v;
    const auto n = static_cast<long>(v.size());
    const long half = static_cast<long>(std::ceil(4.0 * sigma));
    std::vector<double> kern(static_cast<std::size_t>(2 * half + 1));
    for (long k = -half; k <= half; ++k)
        kern[static_cast<std::size_t>(k + half)] =
            std::exp(-0.5 * (static_cast<double>(k) / sigma) * (static_cast<double>(k) / sigma));
    std::vector<double> out(v.size());
    for (long j = 0; j < n; ++j) {
        double acc = 0.0, wsum = 0.0;
        const long lo = std::max<long>(0, j - half);
        const long hi = std::min<long>(n - 1, j + half);
        for (long k = lo; k <= hi; ++k) {
            const double w = kern[static_cast<std::size_t>(k - j + half)];
            acc += w * v[static_cast<std::size_t>(k)];
            wsum += w;
        }
        out[static_cast<std::size_t>(j)] = acc / wsum;
    }
    return out;
}

inline Pixelated gaussian_smooth(const Pixelated& p, double sigma) {
    Pixelated out = p;
    out.values = gaussian_smooth_values(p.values, sigma);
    return out;
}

}  // namespace lzforge
