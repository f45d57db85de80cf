#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "surfns/cutgeom.hpp"

using namespace surfns;

namespace {

double sphere_area(int level, int rg) {
    const auto m = make_mesh(level);
    const auto sphere = make_static_sphere();
    const auto band = extract_band_refined(m, sphere, 0.0, 0.0, rg);
    const auto patches = build_patches(band, sphere, 0.0, rg, 2, /*with_frames=*/false);
    return total_area(patches);
}

} // namespace

TEST_CASE("plane slice of the reference tetrahedron") {
    const auto plane = make_custom_surface(
        [](const Vec3& x, double) { return x.z() - 0.25; },
        [](const Vec3&, double) { return 0.0; },
        [](const Vec3&, double) { return Vec3(0, 0, 1); });
    const std::array<Vec3, 4> ref = {Vec3(0, 0, 0), Vec3(1, 0, 0), Vec3(0, 1, 0), Vec3(0, 0, 1)};
    const auto patch = reconstruct_tet(ref, plane, 0.0, 0);
    REQUIRE(patch.tris.size() == 1);
    // cross-section at z = 0.25: right triangle with legs 0.75
    REQUIRE(patch.area == Catch::Approx(0.5 * 0.75 * 0.75).epsilon(1e-13));
    // quadrature weights sum to the area
    double wsum = 0.0;
    for (const double w : patch.qweights) wsum += w;
    REQUIRE(wsum == Catch::Approx(patch.area).epsilon(1e-14));
    // patch vertices are roots of the linear interpolant (here phi itself)
    for (const auto& tri : patch.tris)
        for (const auto& v : tri) REQUIRE(std::abs(v.z() - 0.25) < 1e-12);
}

TEST_CASE("uncut tetrahedron yields an empty patch") {
    const auto plane = make_custom_surface([](const Vec3& x, double) { return x.z() - 5.0; });
    const std::array<Vec3, 4> ref = {Vec3(0, 0, 0), Vec3(1, 0, 0), Vec3(0, 1, 0), Vec3(0, 0, 1)};
    REQUIRE(reconstruct_tet(ref, plane, 0.0, 2).empty());
}

TEST_CASE("sub-refined patches are watertight across elements") {
    // total sphere area must have no cracks: compare rg sweep at fixed level
    const double a4pi = 4.0 * M_PI;
    const double e0 = std::abs(sphere_area(2, 0) - a4pi) / a4pi;
    const double e1 = std::abs(sphere_area(2, 1) - a4pi) / a4pi;
    const double e2 = std::abs(sphere_area(2, 2) - a4pi) / a4pi;
    const double e3 = std::abs(sphere_area(2, 3) - a4pi) / a4pi;
    // O(4^-rg): rate at least 1.9 per rg increment, measured on the tail
    REQUIRE(std::log2(e1 / e2) > 1.9);
    REQUIRE(std::log2(e2 / e3) > 1.9);
    REQUIRE(e0 > e1);
}

TEST_CASE("sphere area error constant of the reconstruction") {
    // The zero set of the piecewise-linear interpolant on the Kuhn sub-grid
    // carries a systematic inward bias of about 0.26 (h 2^-rg)^2 relative
    // area deficit on the unit sphere. Pin the constant as a regression
    // bound; one further halving brings it under 2e-4.
    const auto m = make_mesh(3);
    const double e2 = std::abs(sphere_area(3, 2) - 4.0 * M_PI) / (4.0 * M_PI);
    const double heff2 = m.h * 0.25;
    REQUIRE(e2 < 0.30 * heff2 * heff2);
    REQUIRE(e2 > 0.20 * heff2 * heff2); // the bias is real, not a lucky zero
    const double e3 = std::abs(sphere_area(3, 3) - 4.0 * M_PI) / (4.0 * M_PI);
    REQUIRE(e3 < 2e-4);
}

TEST_CASE("surface integration over the full sphere") {
    const auto m = make_mesh(3);
    const auto sphere = make_static_sphere();
    const auto band = extract_band_refined(m, sphere, 0.0, 0.0, 3);
    const auto patches = build_patches(band, sphere, 0.0, 3, 2, false);
    const double area = surface_integrate(patches, [](const Vec3&) { return 1.0; });
    REQUIRE(area == Catch::Approx(12.566).margin(3e-3));
    // odd symmetry: the Kuhn lattice is invariant under central reflection
    const double m1 = surface_integrate(patches, [](const Vec3& x) { return x.x(); });
    REQUIRE(std::abs(m1) < 1e-10);
}

TEST_CASE("patch quadrature points sit on the exact surface up to O(h_eff^2)") {
    const auto sphere = make_static_sphere();
    for (const int level : {2, 3}) {
        for (const int rg : {0, 1, 2}) {
            const auto m = make_mesh(level);
            const auto band = extract_band_refined(m, sphere, 0.0, 0.0, rg);
            const auto patches = build_patches(band, sphere, 0.0, rg, 2, false);
            const double heff = m.h * std::ldexp(1.0, -rg);
            double worst = 0.0;
            for (const auto& p : patches)
                for (const auto& x : p.qpoints)
                    worst = std::max(worst, std::abs(eval_phi(sphere, x, 0.0)));
            REQUIRE(worst < 0.75 * heff * heff); // C calibrated once on the sphere
        }
    }
}

TEST_CASE("patch triangle vertices are roots of the sub-tet linear interpolant") {
    const auto m = make_mesh(2);
    const auto sphere = make_static_sphere();
    const auto band = extract_band_refined(m, sphere, 0.0, 0.0, 1);
    const auto patches = build_patches(band, sphere, 0.0, 1, 1, false);
    // verify the invariant by re-running marching on one element and checking
    // that every vertex interpolates phi to zero within its sub-tet
    const int rg = 1, ns = 1 << rg;
    const double hf = m.h * std::ldexp(1.0, -rg);
    const double perturb = 1e-14 * m.h;
    std::size_t checked = 0;
    for (std::size_t ci = 0; ci < patches.size() && checked < 200; ++ci) {
        const TetRef el = band.elements[band.cut[ci]];
        const int base[3] = {el.ci * ns, el.cj * ns, el.ck * ns};
        for (const auto& sub : detail::kuhn_subdivision(el.loc, rg)) {
            std::array<Vec3, 4> v;
            std::array<double, 4> f;
            Mat3 M;
            for (int a = 0; a < 4; ++a) {
                const auto corners = detail::tet_corners(sub.loc);
                v[a] = Vec3(m.xmin + (base[0] + sub.f[0] + corners[a][0]) * hf,
                            m.xmin + (base[1] + sub.f[1] + corners[a][1]) * hf,
                            m.xmin + (base[2] + sub.f[2] + corners[a][2]) * hf);
                f[a] = eval_phi(sphere, v[a], 0.0) + perturb;
            }
            for (int k = 0; k < 3; ++k) M.col(k) = v[k + 1] - v[0];
            const Mat3 Minv = M.inverse();
            for (const auto& tri : patches[ci].tris)
                for (const auto& p : tri) {
                    const Vec3 lam123 = Minv * (p - v[0]);
                    const double l0 = 1.0 - lam123.sum();
                    if (l0 < -1e-9 || lam123.minCoeff() < -1e-9) continue; // other sub-tet
                    const double interp =
                        l0 * f[0] + lam123[0] * f[1] + lam123[1] * f[2] + lam123[2] * f[3];
                    REQUIRE(std::abs(interp) < 1e-12);
                    ++checked;
                }
        }
    }
    REQUIRE(checked >= 200);
}
