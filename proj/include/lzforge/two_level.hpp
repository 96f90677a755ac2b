#pragma once

#include <cmath>
#include <complex>
#include <stdexcept>

namespace lzforge {

using cplx = std::complex<double>;

// H = eps(t) sigma_z / 2 + delta sigma_x / 2, hbar = 1.
// delta = 0 is accepted so the bare-sweep limits remain expressible.
struct TwoLevelSystem {
    double delta = 1.0;

    void validate() const {
        if (!(delta >= 0.0) || !std::isfinite(delta))
            throw std::invalid_argument("TwoLevelSystem: delta must be finite and >= 0");
    }
};

struct Unitary2 {
    cplx u00{1.0, 0.0};
    cplx u01{0.0, 0.0};
    cplx u10{0.0, 0.0};
    cplx u11{1.0, 0.0};

    static Unitary2 identity() { return {}; }

    static Unitary2 sigma_x() {
        Unitary2 u;
        u.u00 = 0.0; u.u01 = 1.0; u.u10 = 1.0; u.u11 = 0.0;
        return u;
    }
};

inline Unitary2 mul(const Unitary2& a, const Unitary2& b) {
    Unitary2 r;
    r.u00 = a.u00 * b.u00 + a.u01 * b.u10;
    r.u01 = a.u00 * b.u01 + a.u01 * b.u11;
    r.u10 = a.u10 * b.u00 + a.u11 * b.u10;
    r.u11 = a.u10 * b.u01 + a.u11 * b.u11;
    return r;
}

inline Unitary2 dagger(const Unitary2& a) {
    Unitary2 r;
    r.u00 = std::conj(a.u00);
    r.u01 = std::conj(a.u10);
    r.u10 = std::conj(a.u01);
    r.u11 = std::conj(a.u11);
    return r;
}

// max-norm of U^dag U - 1
inline double unitarity_defect(const Unitary2& u) {
    Unitary2 p = mul(dagger(u), u);
    double d = std::abs(p.u00 - cplx(1.0));
    d = std::max(d, std::abs(p.u01));
    d = std::max(d, std::abs(p.u10));
    d = std::max(d, std::abs(p.u11 - cplx(1.0)));
    return d;
}

inline cplx det(const Unitary2& u) { return u.u00 * u.u11 - u.u01 * u.u10; }

// Eq. (1)
inline double lz_probability(double delta, double v) {
    if (!(delta >= 0.0))
        throw std::domain_error("lz_probability: delta must be >= 0");
    if (!(v > 0.0))
        throw std::domain_error("lz_probability: v must be > 0");
    return -std::expm1(-M_PI * delta * delta / (2.0 * v));
}

// Eq. (8) with an arbitrary target gate
inline double gate_fidelity(const Unitary2& u, const Unitary2& target) {
    Unitary2 p = mul(dagger(target), u);
    cplx tr = p.u00 + p.u11;
    return 0.25 * std::norm(tr);
}

inline double phase_insensitive_fidelity(const Unitary2& u) {
    return 0.5 * (std::norm(u.u01) + std::norm(u.u10));
}

// population leaked out of |1> into |0>
inline double survival_error(const Unitary2& u) { return std::norm(u.u01); }

}  // namespace lzforge
