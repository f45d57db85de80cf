#pragma once

#include <cmath>
#include <functional>
#include <stdexcept>
#include <utility>
#include <vector>

#include "surfns/sph.hpp"
#include "surfns/util.hpp"

namespace surfns {

/// Differential-geometric data of the surface at a point: unit normal,
/// tangential projector P = I - n n^T, Weingarten map H (shape operator),
/// doubled mean curvature kappa = tr H, and normal speed w_N.
struct SurfaceFrame {
    Vec3 n;
    Mat3 P;
    Mat3 H;
    double kappa;
    double w_N;
};

/// One radial spherical-harmonic mode: r = 1 + sum A_{n,m}(t) Y_n^m.
struct HarmonicMode {
    int n;
    int m;
    std::function<double(double)> A;
    std::function<double(double)> Adot;
};

/// Instantaneous coefficient values, input to area_variation_rate.
struct ModeValue {
    int n;
    int m;
    double A;
    double Adot;
};

enum class SurfaceKind { SphereRadial, HarmonicRadial, Custom };

/// A time-dependent implicit surface Gamma(t) = { phi(.,t) = 0 }.
/// All evaluation is pure; instances are safe to share across threads.
struct LevelSetSurface {
    SurfaceKind kind = SurfaceKind::SphereRadial;

    // sphere-radial: phi = |x| - r(t)
    std::function<double(double)> radius;
    std::function<double(double)> radius_dot;

    // harmonic-radial: phi = |x| - 1 - xi(xhat, t)
    std::vector<HarmonicMode> modes;
    bool exact_normal_speed = false; // -phi_t/|grad phi| instead of sum A' Y

    // custom: user level set (phi_t, grad optional; finite differences otherwise)
    std::function<double(const Vec3&, double)> phi_fn;
    std::function<double(const Vec3&, double)> phi_t_fn;
    std::function<Vec3(const Vec3&, double)> grad_fn;

    double fd_step = 1e-4; // step for Hessian / fallback derivatives
};

inline LevelSetSurface make_sphere_surface(std::function<double(double)> r,
                                           std::function<double(double)> rdot) {
    LevelSetSurface s;
    s.kind = SurfaceKind::SphereRadial;
    s.radius = std::move(r);
    s.radius_dot = std::move(rdot);
    return s;
}

inline LevelSetSurface make_static_sphere(double r0 = 1.0) {
    return make_sphere_surface([r0](double) { return r0; }, [](double) { return 0.0; });
}

/// r(t) = 1 + sin(2 pi t)/4, the expanding/contracting sphere.
inline LevelSetSurface make_oscillating_sphere() {
    return make_sphere_surface(
        [](double t) { return 1.0 + 0.25 * std::sin(2.0 * M_PI * t); },
        [](double t) { return 0.5 * M_PI * std::cos(2.0 * M_PI * t); });
}

inline LevelSetSurface make_harmonic_surface(std::vector<HarmonicMode> modes) {
    LevelSetSurface s;
    s.kind = SurfaceKind::HarmonicRadial;
    s.modes = std::move(modes);
    for (const auto& m : s.modes) check_harmonic_index(m.n, m.m);
    return s;
}

inline LevelSetSurface make_custom_surface(std::function<double(const Vec3&, double)> phi,
                                           std::function<double(const Vec3&, double)> phi_t = {},
                                           std::function<Vec3(const Vec3&, double)> grad = {}) {
    LevelSetSurface s;
    s.kind = SurfaceKind::Custom;
    s.phi_fn = std::move(phi);
    s.phi_t_fn = std::move(phi_t);
    s.grad_fn = std::move(grad);
    return s;
}

namespace detail {

struct XiEval {
    double xi;
    double xi_t;
    Vec3 grad_homog; // gradient of xi(x/|x|) at x, tangential to the sphere through x
};

/// Evaluates the radial displacement, its time derivative, and the gradient of
/// its 0-homogeneous extension in one pass (shared Legendre table).
inline XiEval xi_eval(const LevelSetSurface& s, const Vec3& x, double t) {
    const double rho = x.norm();
    const Vec3 xhat = x / rho;
    XiEval out{0.0, 0.0, Vec3::Zero()};
    Vec3 formal = Vec3::Zero();
    for (const auto& mode : s.modes) {
        const HarmonicEval e = sph_harmonic_eval(mode.n, mode.m, xhat);
        const double a = mode.A(t);
        out.xi += a * e.value;
        out.xi_t += mode.Adot(t) * e.value;
        formal += a * e.grad_formal;
    }
    out.grad_homog = (formal - xhat * xhat.dot(formal)) / rho;
    return out;
}

inline void require_not_origin(const Vec3& x) {
    if (x.norm() == 0.0)
        throw std::domain_error("level set undefined at the origin for radial surfaces");
}

} // namespace detail

/// Signed level set value; negative inside, zero on Gamma(t).
inline double eval_phi(const LevelSetSurface& s, const Vec3& x, double t) {
    switch (s.kind) {
    case SurfaceKind::SphereRadial:
        detail::require_not_origin(x);
        return x.norm() - s.radius(t);
    case SurfaceKind::HarmonicRadial:
        detail::require_not_origin(x);
        return x.norm() - 1.0 - detail::xi_eval(s, x, t).xi;
    case SurfaceKind::Custom:
        return s.phi_fn(x, t);
    }
    throw std::logic_error("unreachable");
}

/// Level set value with the origin special-cased for radial kinds (the value
/// there is deep inside for every surface treated here). Mesh scans hit the
/// origin as a lattice point; the public eval_phi keeps its domain contract.
inline double eval_phi_safe(const LevelSetSurface& s, const Vec3& x, double t) {
    if (s.kind != SurfaceKind::Custom && x.squaredNorm() == 0.0)
        return s.kind == SurfaceKind::SphereRadial ? -s.radius(t) : -1.0;
    return eval_phi(s, x, t);
}

inline double eval_phi_t(const LevelSetSurface& s, const Vec3& x, double t) {
    switch (s.kind) {
    case SurfaceKind::SphereRadial:
        return -s.radius_dot(t);
    case SurfaceKind::HarmonicRadial:
        detail::require_not_origin(x);
        return -detail::xi_eval(s, x, t).xi_t;
    case SurfaceKind::Custom:
        if (s.phi_t_fn) return s.phi_t_fn(x, t);
        return (s.phi_fn(x, t + s.fd_step) - s.phi_fn(x, t - s.fd_step)) / (2.0 * s.fd_step);
    }
    throw std::logic_error("unreachable");
}

inline Vec3 grad_phi(const LevelSetSurface& s, const Vec3& x, double t) {
    switch (s.kind) {
    case SurfaceKind::SphereRadial:
        detail::require_not_origin(x);
        return x.normalized();
    case SurfaceKind::HarmonicRadial: {
        detail::require_not_origin(x);
        return x.normalized() - detail::xi_eval(s, x, t).grad_homog;
    }
    case SurfaceKind::Custom: {
        if (s.grad_fn) return s.grad_fn(x, t);
        Vec3 g;
        for (int k = 0; k < 3; ++k) {
            Vec3 e = Vec3::Zero();
            e[k] = s.fd_step;
            g[k] = (s.phi_fn(x + e, t) - s.phi_fn(x - e, t)) / (2.0 * s.fd_step);
        }
        return g;
    }
    }
    throw std::logic_error("unreachable");
}

/// Hessian of phi by central differences of the gradient, symmetrized.
inline Mat3 hess_phi_fd(const LevelSetSurface& s, const Vec3& x, double t) {
    Mat3 Hs;
    for (int k = 0; k < 3; ++k) {
        Vec3 e = Vec3::Zero();
        e[k] = s.fd_step;
        Hs.col(k) = (grad_phi(s, x + e, t) - grad_phi(s, x - e, t)) / (2.0 * s.fd_step);
    }
    return 0.5 * (Hs + Hs.transpose());
}

inline Mat3 hess_phi(const LevelSetSurface& s, const Vec3& x, double t) {
    if (s.kind == SurfaceKind::SphereRadial) {
        const double rho = x.norm();
        const Vec3 xhat = x / rho;
        return (Mat3::Identity() - xhat * xhat.transpose()) / rho;
    }
    return hess_phi_fd(s, x, t);
}

namespace detail {

inline SurfaceFrame frame_impl(const LevelSetSurface& s, const Vec3& x, double t,
                               bool force_fd_hessian) {
    const Vec3 g = grad_phi(s, x, t);
    const double gn = g.norm();
    if (gn < 0.5)
        throw DegenerateGradientError("level set gradient below 0.5, frame undefined");
    SurfaceFrame f;
    f.n = g / gn;
    f.P = Mat3::Identity() - f.n * f.n.transpose();
    const Mat3 Hess = force_fd_hessian ? hess_phi_fd(s, x, t) : hess_phi(s, x, t);
    Mat3 H = f.P * Hess * f.P / gn;
    f.H = 0.5 * (H + H.transpose());
    f.kappa = f.H.trace();
    switch (s.kind) {
    case SurfaceKind::SphereRadial:
        f.w_N = s.radius_dot(t);
        break;
    case SurfaceKind::HarmonicRadial:
        f.w_N = s.exact_normal_speed ? -eval_phi_t(s, x, t) / gn : xi_eval(s, x, t).xi_t;
        break;
    case SurfaceKind::Custom:
        f.w_N = -eval_phi_t(s, x, t) / gn;
        break;
    }
    return f;
}

} // namespace detail

/// Frame at a point near Gamma(t). Throws DegenerateGradientError when the
/// level set gradient is too small.
inline SurfaceFrame frame(const LevelSetSurface& s, const Vec3& x, double t) {
    return detail::frame_impl(s, x, t, false);
}

/// Same as frame() but with the Hessian always taken by finite differences of
/// the gradient; used to validate the closed forms.
inline SurfaceFrame frame_fd(const LevelSetSurface& s, const Vec3& x, double t) {
    return detail::frame_impl(s, x, t, true);
}

/// Quasi-normal direction grad phi / |grad phi| without the Hessian work.
inline Vec3 quasi_normal(const LevelSetSurface& s, const Vec3& x, double t) {
    const Vec3 g = grad_phi(s, x, t);
    const double gn = g.norm();
    if (gn < 0.5)
        throw DegenerateGradientError("level set gradient below 0.5, normal undefined");
    return g / gn;
}

/// Normal speed by the kind-specific rule (no Hessian work).
inline double normal_speed(const LevelSetSurface& s, const Vec3& x, double t) {
    switch (s.kind) {
    case SurfaceKind::SphereRadial:
        return s.radius_dot(t);
    case SurfaceKind::HarmonicRadial:
        if (!s.exact_normal_speed) return detail::xi_eval(s, x, t).xi_t;
        [[fallthrough]];
    case SurfaceKind::Custom:
        return -eval_phi_t(s, x, t) / grad_phi(s, x, t).norm();
    }
    throw std::logic_error("unreachable");
}

/// Radial displacement xi and its time derivative at spherical angles.
inline std::pair<double, double> radial_displacement(const LevelSetSurface& s, double theta,
                                                     double phi, double t) {
    if (s.kind != SurfaceKind::HarmonicRadial)
        throw std::invalid_argument("radial_displacement requires a harmonic-radial surface");
    const Vec3 xhat(std::sin(theta) * std::cos(phi), std::sin(theta) * std::sin(phi),
                    std::cos(theta));
    const auto e = detail::xi_eval(s, xhat, t);
    return {e.xi, e.xi_t};
}

/// Linearized area variation d|Gamma|/dt = sum (n-1)(n+2) A'_{n,m} A_{n,m}.
inline double area_variation_rate(const std::vector<ModeValue>& modes) {
    double rate = 0.0;
    for (const auto& m : modes) rate += (m.n - 1.0) * (m.n + 2.0) * m.Adot * m.A;
    return rate;
}

inline double area_variation_rate(const LevelSetSurface& s, double t) {
    std::vector<ModeValue> vals;
    vals.reserve(s.modes.size());
    for (const auto& m : s.modes) vals.push_back({m.n, m.m, m.A(t), m.Adot(t)});
    return area_variation_rate(vals);
}

} // namespace surfns
