#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

#include "bessel.hpp"
#include "pulse.hpp"
#include "two_level.hpp"

namespace lzforge {

inline constexpr double kBesselJ0Zero = 2.404825557695773;

// Eqs. (3)-(6) parameter bundle. m0 < 0 requests the default
// floor(v T / (2 omega)), the largest order whose jump lands inside the window.
struct JumpModelParams {
    double delta = 1.0;
    double v = 1.0;
    double lambda = 0.0;
    double omega = 1.0;
    double phi = 0.0;
    double T = 1.0;
    int m0 = -1;

    int max_order() const {
        if (m0 >= 0) return m0;
        return static_cast<int>(std::floor(v * T / (2.0 * omega)));
    }
    // regime checks the model's derivation assumes
    bool gap_much_smaller_than_omega() const { return delta <= 0.04 * omega; }
    bool stokes_expansion_valid() const { return delta * delta / (4.0 * v) <= 1.0; }

    void validate() const {
        if (!(delta >= 0.0)) throw std::invalid_argument("JumpModelParams: delta must be >= 0");
        if (!(v > 0.0)) throw std::invalid_argument("JumpModelParams: v must be > 0");
        if (!(omega > 0.0)) throw std::invalid_argument("JumpModelParams: omega must be > 0");
        if (!(T > 0.0)) throw std::invalid_argument("JumpModelParams: T must be > 0");
    }
};

struct JumpEvent {
    int m = 0;
    double time = 0.0;
    double effective_gap = 0.0;
    double stokes_phase = 0.0;
    double transition_prob = 0.0;
};

inline double effective_gap(const JumpModelParams& p, int m) {
    return p.delta * bessel_j(m, p.lambda / p.omega);
}

// Eq. (5); shifted by pi when the effective gap is negative so the
// factor below can always carry |gap|
inline double stokes_phase(const JumpModelParams& p, int m) {
    double ph = -(p.delta * p.delta / (4.0 * p.v)) * std::log(p.T * p.T * p.v / 4.0) -
                0.25 * M_PI - static_cast<double>(m) * static_cast<double>(m) * p.omega *
                p.omega / (2.0 * p.v) - static_cast<double>(m) * p.phi;
    if (effective_gap(p, m) < 0.0) ph += M_PI;
    return ph;
}

// chronological: largest m jumps first (t = -m omega / v)
inline std::vector<JumpEvent> jump_events(const JumpModelParams& p) {
    p.validate();
    const int m0 = p.max_order();
    std::vector<JumpEvent> ev;
    ev.reserve(static_cast<std::size_t>(2 * m0 + 1));
    for (int m = m0; m >= -m0; --m) {
        JumpEvent e;
        e.m = m;
        e.time = -static_cast<double>(m) * p.omega / p.v;
        e.effective_gap = effective_gap(p, m);
        e.stokes_phase = stokes_phase(p, m);
        e.transition_prob = lz_probability(std::fabs(e.effective_gap), p.v);
        ev.push_back(e);
    }
    return ev;
}

// single Eq. (6) crossing factor
inline Unitary2 jump_factor(const JumpModelParams& p, int m) {
    const double gap = effective_gap(p, m);
    const double psurv = std::exp(-M_PI * gap * gap / (2.0 * p.v));
    const double sp = std::sqrt(psurv);
    const double sq = std::sqrt(std::max(0.0, 1.0 - psurv));
    const double ph = stokes_phase(p, m);
    const cplx e(std::cos(ph), std::sin(ph));
    Unitary2 u;
    u.u00 = sp;
    u.u01 = e * sq;
    u.u10 = -std::conj(e) * sq;
    u.u11 = sp;
    return u;
}

// partial products after each jump, earliest first; the last entry is the
// full Eq. (6) product. |u01|^2 of entry k is the model's plateau
// population after the k-th crossing for a system started in |1>.
inline std::vector<Unitary2> multi_jump_partials(const JumpModelParams& p) {
    const auto ev = jump_events(p);
    std::vector<Unitary2> parts;
    parts.reserve(ev.size());
    Unitary2 u;
    for (const auto& e : ev) {
        u = mul(jump_factor(p, e.m), u);
        parts.push_back(u);
    }
    return parts;
}

inline Unitary2 multi_jump_unitary(const JumpModelParams& p) {
    auto parts = multi_jump_partials(p);
    return parts.empty() ? Unitary2::identity() : parts.back();
}

struct DesignResult {
    LinearOscillating pulse;
    double T = 0.0;
    double Ts = 0.0;
    // timing constraints, lhs > rhs and lhs2 < rhs2 respectively
    double hold_half = 0.0;      // (T - Ts)/2
    double hold_min = 0.0;       // omega / v
    double extent_half = 0.0;    // (T + Ts)/2
    double extent_max = 0.0;     // 2 omega / v
};

// Eq. (7) recipe: lambda_r at the J0 zero, T = 3 omega / v
inline DesignResult design_diabatic_pulse(double v, double omega, double Ts, double delta) {
    if (!(v > 0.0)) throw std::invalid_argument("design_diabatic_pulse: v must be > 0");
    if (!(omega > 0.0)) throw std::invalid_argument("design_diabatic_pulse: omega must be > 0");
    if (!(Ts > 0.0)) throw std::invalid_argument("design_diabatic_pulse: Ts must be > 0");
    if (!(delta >= 0.0)) throw std::invalid_argument("design_diabatic_pulse: delta must be >= 0");
    if (!(Ts < omega / (2.0 * v)))
        throw std::invalid_argument(
            "design_diabatic_pulse: infeasible switching time, requires Ts < omega/(2 v)");

    DesignResult r;
    r.T = 3.0 * omega / v;
    r.Ts = Ts;
    r.hold_half = 0.5 * (r.T - Ts);
    r.hold_min = omega / v;
    r.extent_half = 0.5 * (r.T + Ts);
    r.extent_max = 2.0 * omega / v;
    if (!(r.hold_half > r.hold_min))
        throw std::invalid_argument("design_diabatic_pulse: (T - Ts)/2 > omega/v violated");
    if (!(r.extent_half < r.extent_max))
        throw std::invalid_argument("design_diabatic_pulse: (T + Ts)/2 < 2 omega/v violated");

    r.pulse.v = v;
    r.pulse.lambda_r = kBesselJ0Zero * omega;
    r.pulse.omega = omega;
    r.pulse.phi = 0.0;
    r.pulse.window = Window{r.T, Ts};
    return r;
}

}  // namespace lzforge
