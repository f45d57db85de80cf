#pragma once

#include <array>
#include <cmath>
#include <stdexcept>

#include "surfns/util.hpp"

namespace surfns {

inline constexpr int kMaxHarmonicDegree = 8;

namespace detail {

/// T[n][m] = d^m P_n / du^m, the m-th derivative of the Legendre polynomial.
/// Obtained by differentiating the three-term recurrence m times; all entries
/// are polynomials in u, so the evaluation is regular at the poles u = +/-1.
struct LegendreDerivTable {
    // n in [0, kMaxHarmonicDegree], m in [0, n+1] (m = n+1 entries are zero).
    double v[kMaxHarmonicDegree + 1][kMaxHarmonicDegree + 2];

    explicit LegendreDerivTable(double u) {
        for (auto& row : v)
            for (auto& x : row) x = 0.0;
        v[0][0] = 1.0;
        for (int n = 1; n <= kMaxHarmonicDegree; ++n) {
            for (int m = 0; m <= n; ++m) {
                const double tm1 = (m >= 1) ? v[n - 1][m - 1] : 0.0;
                const double prev = (n >= 2) ? v[n - 2][m] : 0.0;
                v[n][m] = ((2.0 * n - 1.0) * (u * v[n - 1][m] + m * tm1) - (n - 1.0) * prev) / n;
            }
        }
    }
};

inline double factorial_ratio(int n, int m) {
    // (n-m)! / (n+m)!
    double r = 1.0;
    for (int k = n - m + 1; k <= n + m; ++k) r /= k;
    return r;
}

inline double norm_factor(int n, int m) {
    return std::sqrt((2.0 * n + 1.0) / (4.0 * M_PI) * factorial_ratio(n, m));
}

} // namespace detail

inline void check_harmonic_index(int n, int m) {
    if (n < 0 || std::abs(m) > n)
        throw std::invalid_argument("spherical harmonic requires 0 <= |m| <= n");
    if (n > kMaxHarmonicDegree)
        throw std::invalid_argument("spherical harmonic degree limited to 8");
}

/// Value and formal Cartesian gradient of the real orthonormal spherical
/// harmonic Y_n^m at a unit vector. "Formal" means the gradient of the
/// polynomial representation with the three components treated as independent;
/// the tangential gradient on the unit sphere is P * formal.
struct HarmonicEval {
    double value;
    Vec3 grad_formal;
};

inline HarmonicEval sph_harmonic_eval(int n, int m, const Vec3& xhat) {
    check_harmonic_index(n, m);
    const detail::LegendreDerivTable tab(xhat.z());
    const int ma = std::abs(m);
    // c_k + i s_k = (x + i y)^k on the unit sphere: sin^k(theta) * e^{i k phi}
    double c = 1.0, s = 0.0, cp = 0.0, sp = 0.0; // (c,s) at order ma, (cp,sp) at ma-1
    for (int k = 0; k < ma; ++k) {
        cp = c;
        sp = s;
        c = cp * xhat.x() - sp * xhat.y();
        s = sp * xhat.x() + cp * xhat.y();
    }
    const double T = tab.v[n][ma];
    const double Tp = tab.v[n][ma + 1];
    HarmonicEval out;
    if (m == 0) {
        const double N = detail::norm_factor(n, 0);
        out.value = N * T;
        out.grad_formal = Vec3(0.0, 0.0, N * Tp);
    } else if (m > 0) {
        const double K = std::sqrt(2.0) * detail::norm_factor(n, ma);
        out.value = K * c * T;
        out.grad_formal = Vec3(K * ma * cp * T, -K * ma * sp * T, K * c * Tp);
    } else {
        const double K = std::sqrt(2.0) * detail::norm_factor(n, ma);
        out.value = K * s * T;
        out.grad_formal = Vec3(K * ma * sp * T, K * ma * cp * T, K * s * Tp);
    }
    return out;
}

/// Real orthonormal spherical harmonic, ||Y_n^m||_{L2(unit sphere)} = 1.
inline double sph_harmonic(int n, int m, double theta, double phi) {
    const Vec3 xhat(std::sin(theta) * std::cos(phi), std::sin(theta) * std::sin(phi),
                    std::cos(theta));
    return sph_harmonic_eval(n, m, xhat).value;
}

/// Gradient of the 0-homogeneous extension Y_n^m(x/|x|) at x != 0.
/// This vector is tangential to the sphere through x.
inline Vec3 sph_harmonic_homog_grad(int n, int m, const Vec3& x) {
    const double rho = x.norm();
    const Vec3 xhat = x / rho;
    const HarmonicEval e = sph_harmonic_eval(n, m, xhat);
    const Vec3 g = e.grad_formal - xhat * (xhat.dot(e.grad_formal));
    return g / rho;
}

} // namespace surfns
