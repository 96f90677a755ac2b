#pragma once

#include <cmath>
#include <cstdlib>

namespace lzforge {

// J_m(x) by Miller's backward recurrence with even-order sum normalization.
// Good to ~1e-13 relative for |m| <= 60, |x| <= 500.
inline double bessel_j(int m, double x) {
    bool neg = false;
    if (m < 0) {
        m = -m;
        if (m & 1) neg = !neg;
    }
    if (x < 0.0) {
        x = -x;
        if (m & 1) neg = !neg;
    }
    if (x == 0.0) return m == 0 ? 1.0 : 0.0;
    if (x < 1e-6) {
        double r = 1.0;
        for (int k = 1; k <= m; ++k) r *= x / (2.0 * k);
        r *= 1.0 - 0.25 * x * x / (m + 1);
        return neg ? -r : r;
    }

    const double margin = std::max(40.0, 12.0 * std::cbrt(x));
    int top = static_cast<int>(std::max(static_cast<double>(m), x) + margin);
    if (top & 1) ++top;

    double jp = 0.0;       // J_{k+1}
    double jc = 1e-300;    // J_k, seeded at k = top+1
    double res = 0.0;
    double sum = 0.0;      // J_0 + 2 sum J_{2k}
    for (int k = top; k >= 0; --k) {
        const double jm = (2.0 * (k + 1) / x) * jc - jp;
        jp = jc;
        jc = jm;
        if (k == m) res = jc;
        if ((k & 1) == 0) sum += (k == 0) ? jc : 2.0 * jc;
        if (std::fabs(jc) > 1e250) {
            jc *= 1e-250;
            jp *= 1e-250;
            res *= 1e-250;
            sum *= 1e-250;
        }
    }
    const double val = res / sum;
    return neg ? -val : val;
}

}  // namespace lzforge
