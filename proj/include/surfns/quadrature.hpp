#pragma once

#include <array>
#include <cmath>

#include "surfns/util.hpp"

namespace surfns {

/// Quadrature rule in barycentric coordinates. Weights are normalized to the
/// reference measure 1, so physical weights are w * |element|.
template <int NPTS, int NBARY>
struct QuadratureRule {
    std::array<std::array<double, NBARY>, NPTS> bary;
    std::array<double, NPTS> weights;
    int exactness; // all polynomials up to this total degree are integrated exactly
};

/// 6-point symmetric triangle rule, degree 4 (Dunavant).
inline const QuadratureRule<6, 3>& triangle_rule() {
    static const QuadratureRule<6, 3> rule = [] {
        QuadratureRule<6, 3> r{};
        const double a = 0.445948490915965;
        const double wa = 0.223381589678011;
        const double b = 0.091576213509771;
        const double wb = 0.109951743655322;
        int k = 0;
        for (int i = 0; i < 3; ++i) {
            std::array<double, 3> p{a, a, a};
            p[i] = 1.0 - 2.0 * a;
            r.bary[k] = p;
            r.weights[k++] = wa;
        }
        for (int i = 0; i < 3; ++i) {
            std::array<double, 3> p{b, b, b};
            p[i] = 1.0 - 2.0 * b;
            r.bary[k] = p;
            r.weights[k++] = wb;
        }
        r.exactness = 4;
        return r;
    }();
    return rule;
}

/// 11-point tetrahedron rule, degree 4 (Keast). One negative weight.
inline const QuadratureRule<11, 4>& tet_rule() {
    static const QuadratureRule<11, 4> rule = [] {
        QuadratureRule<11, 4> r{};
        int k = 0;
        r.bary[k] = {0.25, 0.25, 0.25, 0.25};
        r.weights[k++] = -148.0 / 1875.0;
        const double a = 1.0 / 14.0;
        for (int i = 0; i < 4; ++i) {
            std::array<double, 4> p{a, a, a, a};
            p[i] = 1.0 - 3.0 * a;
            r.bary[k] = p;
            r.weights[k++] = 343.0 / 7500.0;
        }
        const double b = 0.25 + 0.25 * std::sqrt(5.0 / 14.0);
        const double c = 0.25 - 0.25 * std::sqrt(5.0 / 14.0);
        // the six (b,b,c,c) permutations
        const int pairs[6][2] = {{0, 1}, {0, 2}, {0, 3}, {1, 2}, {1, 3}, {2, 3}};
        for (auto& pr : pairs) {
            std::array<double, 4> p{c, c, c, c};
            p[pr[0]] = b;
            p[pr[1]] = b;
            r.bary[k] = p;
            r.weights[k++] = 56.0 / 375.0;
        }
        r.exactness = 4;
        return r;
    }();
    return rule;
}

inline double triangle_area(const Vec3& p0, const Vec3& p1, const Vec3& p2) {
    return 0.5 * (p1 - p0).cross(p2 - p0).norm();
}

inline double tet_volume(const std::array<Vec3, 4>& v) {
    return (v[1] - v[0]).dot((v[2] - v[0]).cross(v[3] - v[0])) / 6.0;
}

/// Integrates f over a tetrahedron with the degree-4 rule.
template <class F>
double volume_integrate(const std::array<Vec3, 4>& v, F&& f) {
    const auto& rule = tet_rule();
    const double vol = std::abs(tet_volume(v));
    double sum = 0.0;
    for (int q = 0; q < 11; ++q) {
        const auto& b = rule.bary[q];
        const Vec3 x = b[0] * v[0] + b[1] * v[1] + b[2] * v[2] + b[3] * v[3];
        sum += rule.weights[q] * f(x);
    }
    return vol * sum;
}

} // namespace surfns
