// Command-line driver: convergence study, deforming-sphere experiments, and a
// quick self test of the geometry/assembly kernels.

#include <cstdio>
#include <iostream>
#include <random>

#include <CLI11.hpp>

#include "surfns/bench.hpp"

namespace {

struct CommonOpts {
    surfns::RunConfig cfg;
    std::string out_dir;
    std::string vtk_dir;
    std::string solver_name = "gmres";
};

void add_common(CLI::App* app, CommonOpts& o) {
    app->add_option("--T", o.cfg.T, "final time")->capture_default_str();
    app->add_option("--mu", o.cfg.mu, "viscosity (default per case)");
    app->add_option("--c-delta", o.cfg.c_delta, "band width factor")->capture_default_str();
    app->add_option("--rg", o.cfg.rg, "geometric sub-refinement levels")->capture_default_str();
    app->add_option("--bdf", o.cfg.bdf, "time scheme order (1 or 2)")
        ->check(CLI::IsMember({1, 2}))
        ->capture_default_str();
    app->add_option("--tau-scale", o.cfg.tau_scale, "scale on tau = h^-2")
        ->capture_default_str();
    app->add_option("--rho-u-scale", o.cfg.rho_u_scale, "scale on rho_u = h^-1")
        ->capture_default_str();
    app->add_option("--rho-p-scale", o.cfg.rho_p_scale, "scale on rho_p = h")
        ->capture_default_str();
    app->add_option("--threads", o.cfg.threads, "worker threads")->capture_default_str();
    app->add_flag("--deterministic", o.cfg.deterministic,
                  "single-threaded reference mode (results are identical either way)");
    app->add_option("--solver", o.solver_name, "linear solver")
        ->check(CLI::IsMember({"direct", "gmres"}))
        ->capture_default_str();
    app->add_option("--seed", o.cfg.seed, "seed for randomized self checks")
        ->capture_default_str();
    app->add_option("--out", o.out_dir, "directory for CSV outputs");
    app->add_option("--vtk", o.vtk_dir, "directory for VTK snapshots");
}

void finalize(CommonOpts& o) {
    o.cfg.solver =
        o.solver_name == "gmres" ? surfns::SolverMethod::Gmres : surfns::SolverMethod::Direct;
}

int run_converge(CommonOpts& o, const std::vector<int>& levels, double dt0, bool mu_set) {
    finalize(o);
    surfns::ManufacturedCase mc;
    if (mu_set) mc.mu = o.cfg.mu;
    mc.T = o.cfg.T;
    auto res = surfns::run_convergence(levels, dt0, o.cfg, mc, o.out_dir);
    std::printf("%-6s %-10s %-10s %-24s %-24s %-24s\n", "level", "h", "dofs", "err_h1 (order)",
                "err_l2 (order)", "err_p (order)");
    for (std::size_t i = 0; i < res.table.rows.size(); ++i) {
        const auto& r = res.table.rows[i];
        auto cell = [&](double e, double eprev) {
            char buf[40];
            if (i == 0)
                std::snprintf(buf, sizeof(buf), "%-12.3e %7s", e, "");
            else
                std::snprintf(buf, sizeof(buf), "%-12.3e (%5.2f)", e,
                              surfns::ErrorTable::order(eprev, e));
            return std::string(buf);
        };
        const auto* prev = i > 0 ? &res.table.rows[i - 1] : nullptr;
        std::printf("%-6d %-10.3e %-10.0f %-24s %-24s %-24s\n", r.level, r.h, r.avg_dofs,
                    cell(r.err_h1, prev ? prev->err_h1 : 0).c_str(),
                    cell(r.err_l2, prev ? prev->err_l2 : 0).c_str(),
                    cell(r.err_p, prev ? prev->err_p : 0).c_str());
    }
    return 0;
}

int run_deform_cmd(CommonOpts& o, const std::string& case_name, bool fix_inext, bool mu_set) {
    finalize(o);
    surfns::DeformCase dc;
    if (case_name == "axisymmetric")
        dc = surfns::axisymmetric_case();
    else
        dc = surfns::asymmetric_case(fix_inext);
    if (mu_set) dc.mu = o.cfg.mu;
    dc.T = o.cfg.T;
    std::printf("case %s: level %d, dt %.4g, mu %.3g\n", dc.name.c_str(), o.cfg.level, o.cfg.dt,
                dc.mu);
    std::printf("inextensibility residual of the coefficient schedule at t=0.1: %.3e\n",
                surfns::area_variation_rate(dc.surface, 0.1));
    auto run = surfns::run_deform(dc, o.cfg, o.out_dir, o.vtk_dir);
    std::printf("steps: %zu  max |area(t)-area(0)|/area(0) = %.4e\n", run.series.size() - 1,
                run.max_rel_area_dev);
    std::printf("corr(div_G u_h, -w_N kappa) at T: %.4f\n", run.final_divergence_correlation);
    return 0;
}

int run_selftest(CommonOpts& o) {
    finalize(o);
    using namespace surfns;
    int failures = 0;
    auto check = [&](const char* name, bool ok) {
        std::printf("[%s] %s\n", ok ? "PASS" : "FAIL", name);
        if (!ok) ++failures;
    };
    std::mt19937_64 rng(o.cfg.seed);
    std::uniform_real_distribution<double> uni(-1.0, 1.0);

    { // quadrature exactness on monomials
        const auto& tri = triangle_rule();
        double s = 0.0;
        for (int q = 0; q < 6; ++q)
            s += tri.weights[q] * tri.bary[q][0] * tri.bary[q][0] * tri.bary[q][1] *
                 tri.bary[q][1];
        // int over reference triangle of x^2 y^2 = 1/180, with area 1/2
        check("triangle rule degree 4", std::abs(s - 2.0 / 180.0) < 1e-14);
        const std::array<Vec3, 4> ref = {Vec3(0, 0, 0), Vec3(1, 0, 0), Vec3(0, 1, 0),
                                         Vec3(0, 0, 1)};
        const double v = volume_integrate(ref, [](const Vec3& x) {
            return x.x() * x.x() * x.y() * x.z();
        });
        check("tet rule degree 4", std::abs(v - 2.0 / 5040.0) < 1e-15);
    }
    { // frame invariants on both surface kinds
        auto sph = make_oscillating_sphere();
        auto harm = axisymmetric_case().surface;
        bool ok = true;
        for (int i = 0; i < 500 && ok; ++i) {
            const double t = 0.5 * (uni(rng) + 1.0);
            Vec3 x(uni(rng), uni(rng), uni(rng));
            if (x.norm() < 0.3) continue;
            for (const auto* s : {&sph, &harm}) {
                const double r0 = (s->kind == SurfaceKind::SphereRadial) ? s->radius(t) : 1.0;
                const Vec3 y = x.normalized() * (r0 + 0.02 * uni(rng));
                const auto fr = frame(*s, y, t);
                ok = ok && std::abs(fr.n.norm() - 1.0) < 1e-12 &&
                     (fr.P * fr.n).norm() < 1e-12 && (fr.H * fr.n).norm() < 1e-8 &&
                     std::abs(fr.kappa - fr.H.trace()) == 0.0;
            }
        }
        check("surface frame invariants", ok);
    }
    { // reconstructed sphere area
        auto sph = make_static_sphere();
        const auto mesh = make_mesh(2);
        auto band = extract_band_refined(mesh, sph, 0.0, 0.0, 2);
        auto patches = build_patches(band, sph, 0.0, 2, o.cfg.threads, false);
        const double area = total_area(patches);
        check("unit sphere area within 1e-3 at level 2",
              std::abs(area - 4.0 * M_PI) / (4.0 * M_PI) < 1e-3);
    }
    { // inextensibility algebra
        auto dc = axisymmetric_case();
        double worst = 0.0;
        for (int i = 0; i < 50; ++i)
            worst = std::max(worst,
                             std::abs(area_variation_rate(dc.surface, 0.5 * (uni(rng) + 1.0))));
        check("axisymmetric schedule is inextensible", worst < 1e-14);
    }
    { // manufactured forcing vs closed form
        ManufacturedCase mc;
        bool ok = true;
        for (int i = 0; i < 10; ++i) {
            Vec3 x(uni(rng), uni(rng), uni(rng));
            if (x.norm() < 0.3) {
                x += Vec3(1, 1, 1);
            }
            const double t = 0.45 * (uni(rng) + 1.0);
            x = mc.surface.radius(t) * x.normalized();
            const auto [f, g] = manufactured_forcing(mc, x, t);
            const auto [fs, gs] = manufactured_forcing_symbolic(mc, x, t);
            ok = ok && (f - fs).norm() < 1e-6 * (1.0 + fs.norm()) &&
                 std::abs(g - gs) < 1e-6 * (1.0 + std::abs(gs));
        }
        check("manufactured forcing matches symbolic oracle", ok);
    }
    { // zero data fixed point
        RunConfig cfg = o.cfg;
        cfg.level = 2;
        cfg.dt = 0.05;
        cfg.bdf = 1;
        cfg.mu = 1e-2;
        auto st = initial_state(make_static_sphere(), cfg);
        advance(st, Forcing{});
        double un = 0.0;
        for (const double c : st.cur.u.coef) un = std::max(un, std::abs(c));
        check("zero data keeps zero solution", un < 1e-9);
    }
    std::printf("%d failure(s)\n", failures);
    return failures == 0 ? 0 : 1;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"TraceFEM solver for the tangential Navier-Stokes equations on "
                 "prescribed evolving surfaces"};
    app.require_subcommand(1);
    app.set_config("--config", "", "flat key=value configuration file (CLI overrides)");

    CommonOpts o;
    std::vector<int> levels = {2, 3, 4};
    double dt0 = 0.05;
    std::string case_name = "manufactured";
    bool fix_inext = false;

    auto* conv = app.add_subcommand("converge", "manufactured-solution convergence study");
    add_common(conv, o);
    conv->add_option("--levels", levels, "mesh levels, ascending")
        ->delimiter(',')
        ->capture_default_str();
    conv->add_option("--dt0", dt0, "time step at the first level (halved per level)")
        ->capture_default_str();

    auto* def = app.add_subcommand("deform", "tangential flow on a deforming sphere");
    add_common(def, o);
    def->add_option("--level", o.cfg.level, "mesh level")->capture_default_str();
    def->add_option("--dt", o.cfg.dt, "time step")->capture_default_str();
    def->add_option("--case", case_name, "experiment")
        ->check(CLI::IsMember({"axisymmetric", "asymmetric"}))
        ->capture_default_str();
    def->add_flag("--fix-inextensibility", fix_inext,
                  "use sqrt(5)/6 instead of 5/18 for the H_4^2 amplitude");

    auto* self = app.add_subcommand("selftest", "fast built-in checks");
    add_common(self, o);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2; // usage errors exit 2
    }

    try {
        if (conv->parsed()) return run_converge(o, levels, dt0, conv->count("--mu") > 0);
        if (def->parsed()) return run_deform_cmd(o, case_name, fix_inext, def->count("--mu") > 0);
        return run_selftest(o);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
