#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <vector>

#include "surfns/fem.hpp"

namespace surfns {

struct RunConfig {
    int level = 3;
    double dt = 0.05;
    double T = 1.0;
    double c_delta = 1.1;
    double mu = 5e-3;
    double tau_scale = 1.0;
    double rho_u_scale = 1.0;
    double rho_p_scale = 1.0;
    int rg = 2;
    int bdf = 2;
    int threads = 1;
    bool deterministic = false;
    SolverMethod solver = SolverMethod::Gmres;
    double solver_tol = 1e-9;
    std::uint64_t seed = 1234567;

    int effective_threads() const { return deterministic ? 1 : std::max(1, threads); }
    void validate() const {
        if (dt <= 0.0) throw std::invalid_argument("dt must be positive");
        if (c_delta < 1.0) throw std::invalid_argument("c_delta must be >= 1");
        if (bdf != 1 && bdf != 2) throw std::invalid_argument("BDF order must be 1 or 2");
        if (rg < 0) throw std::invalid_argument("rg must be >= 0");
    }
};

struct Forcing {
    std::function<Vec3(const Vec3&, double)> f;  // tangential momentum source
    std::function<double(const Vec3&, double)> g; // divergence data
};

struct StepDiagnostics {
    double t = 0.0;
    double area = 0.0;
    double kinetic = 0.0;
    double dissipation = 0.0;
    double exchange = 0.0;
    double power = 0.0;
    double balance_residual = 0.0;
    double un_l2 = 0.0;  // ||u_h . n||_{L2(Gamma_h)}
    double un_max = 0.0; // max over quadrature points of |u_h . n|
    int n_dofs = 0;
    int solver_iterations = 0;
    double solve_seconds = 0.0;
    double rel_residual = 0.0;
};

/// One time level: band, dofs, patches and the velocity living on them.
struct StepData {
    std::shared_ptr<const ActiveBand> band;
    std::shared_ptr<const DofMap> dofs;
    std::shared_ptr<const std::vector<SurfacePatch>> patches;
    FieldVector u;
    double t = 0.0;
    double kinetic = 0.0;
};

struct TransientState {
    LevelSetSurface surface;
    RunConfig config;
    double t = 0.0;
    int steps_taken = 0;
    StepData cur;              // u^n
    std::optional<StepData> prev; // u^{n-1} as history for BDF2
    FieldVector pressure;      // p^n
    std::vector<StepDiagnostics> series;
};

/// delta_n = c_delta * sup |w_N| * dt, the sup estimated by sampling the given
/// points at five equispaced times in [t_prev, t_now] with a 5% margin.
inline double band_width(const LevelSetSurface& s, double t_prev, double t_now, double c_delta,
                         double dt_step, const std::vector<Vec3>& points) {
    if (!(t_prev < t_now)) throw std::invalid_argument("band_width requires t_prev < t_now");
    double sup = 0.0;
    std::array<double, 5> times;
    for (int k = 0; k < 5; ++k) times[k] = t_prev + (t_now - t_prev) * k / 4.0;
    if (s.kind == SurfaceKind::SphereRadial) {
        for (const double tk : times) sup = std::max(sup, std::abs(s.radius_dot(tk)));
    } else if (s.kind == SurfaceKind::HarmonicRadial && !s.exact_normal_speed) {
        // Y_n^m values are time independent; evaluate once per point
        std::vector<double> adot(s.modes.size());
        for (const Vec3& x : points) {
            const Vec3 xhat = x.normalized();
            std::vector<double> yv(s.modes.size());
            for (std::size_t i = 0; i < s.modes.size(); ++i)
                yv[i] = sph_harmonic_eval(s.modes[i].n, s.modes[i].m, xhat).value;
            for (const double tk : times) {
                double w = 0.0;
                for (std::size_t i = 0; i < s.modes.size(); ++i)
                    w += s.modes[i].Adot(tk) * yv[i];
                sup = std::max(sup, std::abs(w));
            }
        }
    } else {
        for (const Vec3& x : points)
            for (const double tk : times) sup = std::max(sup, std::abs(normal_speed(s, x, tk)));
    }
    return c_delta * 1.05 * sup * dt_step;
}

namespace detail {

inline std::vector<Vec3> all_quad_points(const std::vector<SurfacePatch>& patches) {
    std::vector<Vec3> pts;
    std::size_t n = 0;
    for (const auto& p : patches) n += p.qpoints.size();
    pts.reserve(n);
    for (const auto& p : patches) pts.insert(pts.end(), p.qpoints.begin(), p.qpoints.end());
    return pts;
}

/// Per-cut-element partial accumulators, filled in parallel; reduce them in
/// element order so the result does not depend on the thread count.
template <class Kernel>
std::vector<double> cut_element_partials(const StepData& sd, int n_out, Kernel&& kernel,
                                         int threads) {
    const auto& band = *sd.band;
    const std::size_t n_cut = band.cut.size();
    std::vector<double> partial(n_cut * n_out, 0.0);
    parallel_for(
        0, static_cast<index_t>(n_cut),
        [&](index_t ci) {
            const TetRef el = band.elements[band.cut[ci]];
            const SurfacePatch& patch = (*sd.patches)[ci];
            TetBasis basis;
            basis.init(tet_vertices(band.mesh, el));
            std::array<int, 10> vidx{};
            gather_velocity_nodes(*sd.dofs, tet_p2_keys(band.mesh, el), vidx);
            kernel(ci, patch, basis, vidx, &partial[ci * n_out]);
        },
        threads);
    return partial;
}

template <class Kernel>
std::vector<double> cut_element_sums(const StepData& sd, int n_out, Kernel&& kernel,
                                     int threads) {
    const auto partial = cut_element_partials(sd, n_out, kernel, threads);
    std::vector<double> out(n_out, 0.0);
    for (std::size_t ci = 0; ci * n_out < partial.size(); ++ci)
        for (int k = 0; k < n_out; ++k) out[k] += partial[ci * n_out + k];
    return out;
}

} // namespace detail

/// Energy terms of the semi-discrete balance, all over the current Gamma_h:
/// kinetic 1/2||Pu||^2, dissipation 2 mu ||E_s(Pu)||^2, exchange
/// (w_N (H - kappa/2 I) Pu, Pu), and power (f, u).
struct EnergyRecord {
    double kinetic = 0.0;
    double dissipation = 0.0;
    double exchange = 0.0;
    double power = 0.0;
    double balance_residual = 0.0;
};

inline EnergyRecord energy_report(const StepData& sd, double mu,
                                  const std::function<Vec3(const Vec3&, double)>& f,
                                  int threads = 1) {
    auto sums = detail::cut_element_sums(
        sd, 4,
        [&](std::size_t, const SurfacePatch& patch, const TetBasis& basis,
            const std::array<int, 10>& vidx, double* acc) {
            P2Eval pe;
            for (std::size_t q = 0; q < patch.qpoints.size(); ++q) {
                const Vec3& x = patch.qpoints[q];
                const double w = patch.qweights[q];
                const SurfaceFrame& fr = patch.qframes[q];
                basis.eval(x, pe);
                const Vec3 u = eval_velocity(sd.u, vidx, pe);
                const Vec3 Pu = fr.P * u;
                const Mat3 J = eval_velocity_grad(sd.u, vidx, pe);
                const Mat3 E = strain_tensor(J, fr.n.dot(u), fr);
                const Vec3 Xu = fr.H * Pu - 0.5 * fr.kappa * Pu;
                acc[0] += w * 0.5 * Pu.squaredNorm();
                acc[1] += w * 2.0 * mu * E.squaredNorm();
                acc[2] += w * fr.w_N * Xu.dot(Pu);
                acc[3] += f ? w * f(x, sd.t).dot(u) : 0.0;
            }
        },
        threads);
    EnergyRecord rec;
    rec.kinetic = sums[0];
    rec.dissipation = sums[1];
    rec.exchange = sums[2];
    rec.power = sums[3];
    return rec;
}

namespace detail {

inline StepDiagnostics compute_diagnostics(const StepData& sd, double mu,
                                           const std::function<Vec3(const Vec3&, double)>& f,
                                           int threads) {
    StepDiagnostics d;
    d.t = sd.t;
    for (const auto& p : *sd.patches) d.area += p.area;
    EnergyRecord rec = energy_report(sd, mu, f, threads);
    d.kinetic = rec.kinetic;
    d.dissipation = rec.dissipation;
    d.exchange = rec.exchange;
    d.power = rec.power;
    const auto un = cut_element_partials(
        sd, 2,
        [&](std::size_t, const SurfacePatch& patch, const TetBasis& basis,
            const std::array<int, 10>& vidx, double* acc) {
            P2Eval pe;
            for (std::size_t q = 0; q < patch.qpoints.size(); ++q) {
                basis.eval(patch.qpoints[q], pe);
                const double und = patch.qframes[q].n.dot(eval_velocity(sd.u, vidx, pe));
                acc[0] += patch.qweights[q] * und * und;
                acc[1] = std::max(acc[1], std::abs(und));
            }
        },
        threads);
    double l2 = 0.0, mx = 0.0;
    for (std::size_t ci = 0; 2 * ci < un.size(); ++ci) {
        l2 += un[2 * ci];
        mx = std::max(mx, un[2 * ci + 1]);
    }
    d.un_l2 = std::sqrt(l2);
    d.un_max = mx;
    d.n_dofs = sd.dofs->n_total();
    return d;
}

} // namespace detail

/// Builds the state at t0: band sized for the first window, nodal
/// interpolation of the (extended) initial velocity, zero pressure.
inline TransientState initial_state(const LevelSetSurface& surface, const RunConfig& config,
                                    const std::function<Vec3(const Vec3&)>& u0 = {},
                                    double t0 = 0.0) {
    config.validate();
    TransientState st;
    st.surface = surface;
    st.config = config;
    st.t = t0;
    const BackgroundMesh mesh = make_mesh(config.level);
    const int threads = config.effective_threads();

    // preliminary zero-width band provides the sampling points for delta
    auto prelim = extract_band_refined(mesh, surface, t0, 0.0, config.rg);
    auto prelim_patches = build_patches(prelim, surface, t0, config.rg, threads, false);
    const double delta0 =
        band_width(surface, t0, t0 + config.bdf * config.dt, config.c_delta, config.dt,
                   detail::all_quad_points(prelim_patches));

    auto band = std::make_shared<ActiveBand>(
        extract_band_refined(mesh, surface, t0, delta0, config.rg));
    auto dofs = std::make_shared<DofMap>(build_dofmap(*band));
    auto patches = std::make_shared<std::vector<SurfacePatch>>(
        build_patches(*band, surface, t0, config.rg, threads));

    StepData sd;
    sd.band = band;
    sd.dofs = dofs;
    sd.patches = patches;
    sd.t = t0;
    if (u0) {
        sd.u = interpolate_velocity(band, dofs, u0);
        // tangentiality check at surface quadrature points
        double worst = 0.0;
        std::size_t checked = 0;
        for (const auto& p : *patches) {
            for (std::size_t q = 0; q < p.qpoints.size() && checked < 2000; ++q, ++checked)
                worst = std::max(worst,
                                 std::abs(p.qframes[q].n.dot(u0(p.qpoints[q]))));
            if (checked >= 2000) break;
        }
        if (worst > 1e-10)
            throw std::invalid_argument("initial velocity is not tangential on Gamma(0)");
    } else {
        sd.u = zero_velocity_field(band, dofs);
    }
    st.pressure = zero_pressure_field(band, dofs);
    StepDiagnostics d0 = detail::compute_diagnostics(sd, config.mu, {}, threads);
    sd.kinetic = d0.kinetic;
    st.cur = std::move(sd);
    st.series.push_back(d0);
    return st;
}

/// One implicit step to t + dt: band migration with the inclusion check,
/// assembly, solve, diagnostics, history rotation.
inline void advance(TransientState& st, const Forcing& forcing) {
    const RunConfig& cfg = st.config;
    const int threads = cfg.effective_threads();
    const double tn = st.t + cfg.dt;
    const int order = (cfg.bdf == 2 && st.steps_taken >= 1) ? 2 : 1;

    const double delta = band_width(st.surface, tn - order * cfg.dt, tn, cfg.c_delta, cfg.dt,
                                    detail::all_quad_points(*st.cur.patches));
    auto band = std::make_shared<ActiveBand>(
        extract_band_refined(st.cur.band->mesh, st.surface, tn, delta, cfg.rg));

    auto violators = check_band_inclusion(*band, *st.cur.band);
    if (order == 2) {
        auto v2 = check_band_inclusion(*band, *st.prev->band);
        violators.insert(violators.end(), v2.begin(), v2.end());
    }
    if (!violators.empty())
        throw BandInclusionError("band inclusion violated at t = " + std::to_string(tn) +
                                     "; increase c_delta or reduce dt",
                                 violators);

    auto dofs = std::make_shared<DofMap>(build_dofmap(*band));
    auto patches = std::make_shared<std::vector<SurfacePatch>>(
        build_patches(*band, st.surface, tn, cfg.rg, threads));
    FieldVector wn = normal_velocity_field(band, dofs, st.surface, tn);

    AssemblyProblem pb;
    pb.band = band.get();
    pb.patches = patches.get();
    pb.dofs = dofs.get();
    pb.surface = &st.surface;
    pb.t = tn;
    pb.prm = default_params(band->mesh.h, cfg.dt, cfg.mu, cfg.tau_scale, cfg.rho_u_scale,
                            cfg.rho_p_scale);
    pb.prm.bdf = bdf_weights(order);
    pb.hist1 = &st.cur.u;
    pb.hist2 = (order == 2) ? &st.prev->u : nullptr;
    if (order == 2) pb.adv_weights = {2.0, -1.0};
    pb.wn_field = &wn;
    pb.f = forcing.f;
    pb.g = forcing.g;
    pb.threads = threads;
    SaddleSystem sys = assemble(pb);

    SolveOptions opts;
    opts.method = cfg.solver;
    opts.tol = cfg.solver_tol;
    auto [x, report] = solve(sys.A, sys.rhs, opts);

    StepData next;
    next.band = band;
    next.dofs = dofs;
    next.patches = patches;
    next.t = tn;
    next.u = zero_velocity_field(band, dofs);
    std::copy(x.begin(), x.begin() + 3 * dofs->n_u(), next.u.coef.begin());
    FieldVector pn = zero_pressure_field(band, dofs);
    std::copy(x.begin() + 3 * dofs->n_u(), x.begin() + 3 * dofs->n_u() + dofs->n_p(),
              pn.coef.begin());

    StepDiagnostics diag = detail::compute_diagnostics(next, cfg.mu, forcing.f, threads);
    next.kinetic = diag.kinetic;
    const auto a = bdf_weights(order);
    double dk = a[0] * diag.kinetic + a[1] * st.cur.kinetic;
    if (order == 2) dk += a[2] * st.prev->kinetic;
    diag.balance_residual = dk / cfg.dt + diag.dissipation + diag.exchange - diag.power;
    diag.solver_iterations = report.iterations;
    diag.solve_seconds = report.seconds;
    diag.rel_residual = report.rel_residual;

    st.prev = std::move(st.cur);
    st.cur = std::move(next);
    st.pressure = std::move(pn);
    st.t = tn;
    st.steps_taken += 1;
    st.series.push_back(diag);
}

} // namespace surfns
