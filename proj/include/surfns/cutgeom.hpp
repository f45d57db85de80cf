#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <vector>

#include "surfns/mesh.hpp"
#include "surfns/quadrature.hpp"

namespace surfns {

/// Piecewise-planar reconstruction of Gamma inside one tetrahedron:
/// triangles from marching the sub-refined linear interpolant, an
/// area-weighted quadrature on them, and exact level-set frames per point.
struct SurfacePatch {
    index_t owner = -1;
    std::vector<std::array<Vec3, 3>> tris;
    std::vector<Vec3> qpoints;
    std::vector<double> qweights; // sum equals area
    std::vector<SurfaceFrame> qframes;
    double area = 0.0;

    bool empty() const { return tris.empty(); }
    std::size_t n_quad() const { return qpoints.size(); }
};

namespace detail {

// Sub-tet of the Kuhn refinement: fine-cube offset plus chain type.
struct SubTet {
    int f[3];
    int loc;
};

/// Sub-tets of the 2^rg-refined Kuhn lattice that tile coarse chain `loc`.
/// Membership is decided by the (exactly representable) centroid.
inline const std::vector<SubTet>& kuhn_subdivision(int loc, int rg) {
    static constexpr int kMaxCachedRg = 4;
    static const auto cache = [] {
        std::array<std::array<std::vector<SubTet>, 6>, kMaxCachedRg + 1> c{};
        for (int r = 0; r <= kMaxCachedRg; ++r) {
            const int ns = 1 << r;
            for (int fi = 0; fi < ns; ++fi)
                for (int fj = 0; fj < ns; ++fj)
                    for (int fk = 0; fk < ns; ++fk)
                        for (int l2 = 0; l2 < 6; ++l2) {
                            const int a = kChainPerm[l2][0], b = kChainPerm[l2][1],
                                      cc = kChainPerm[l2][2];
                            double cen[3] = {fi * 4.0, fj * 4.0, fk * 4.0};
                            cen[a] += 3.0;
                            cen[b] += 2.0;
                            cen[cc] += 1.0;
                            for (int l = 0; l < 6; ++l) {
                                const int A = kChainPerm[l][0], B = kChainPerm[l][1],
                                          C = kChainPerm[l][2];
                                if (cen[A] >= cen[B] && cen[B] >= cen[C])
                                    c[r][l].push_back({{fi, fj, fk}, l2});
                            }
                        }
        }
        return c;
    }();
    if (rg <= kMaxCachedRg) return cache[rg][loc];
    throw std::invalid_argument("sub-refinement level above 4 not supported");
}

inline Vec3 edge_crossing(double fa, double fb, const Vec3& va, const Vec3& vb) {
    // symmetric in (a,b) down to the last bit, so shared faces stay watertight
    const double d = fa - fb;
    return Vec3((fa * vb.x() - fb * va.x()) / d, (fa * vb.y() - fb * va.y()) / d,
                (fa * vb.z() - fb * va.z()) / d);
}

/// Marching step on one sub-tet with perturbed vertex values.
inline void march_subtet(const std::array<Vec3, 4>& v, const std::array<double, 4>& f,
                         std::vector<std::array<Vec3, 3>>& tris) {
    int neg[4], pos[4], nn = 0, np = 0;
    for (int i = 0; i < 4; ++i) {
        if (f[i] > 0.0)
            pos[np++] = i;
        else
            neg[nn++] = i;
    }
    if (nn == 0 || np == 0) return;
    if (nn == 1 || np == 1) {
        const int k = (nn == 1) ? neg[0] : pos[0];
        const int* o = (nn == 1) ? pos : neg;
        Vec3 c[3];
        for (int e = 0; e < 3; ++e) c[e] = edge_crossing(f[k], f[o[e]], v[k], v[o[e]]);
        tris.push_back({c[0], c[1], c[2]});
        return;
    }
    // 2-2: quad cycle (ik, il, jl, jk), split along ik-jl
    const int i = neg[0], j = neg[1], k = pos[0], l = pos[1];
    const Vec3 cik = edge_crossing(f[i], f[k], v[i], v[k]);
    const Vec3 cil = edge_crossing(f[i], f[l], v[i], v[l]);
    const Vec3 cjl = edge_crossing(f[j], f[l], v[j], v[l]);
    const Vec3 cjk = edge_crossing(f[j], f[k], v[j], v[k]);
    tris.push_back({cik, cil, cjl});
    tris.push_back({cik, cjl, cjk});
}

inline void finalize_patch(SurfacePatch& patch, const LevelSetSurface& s, double t,
                           double area_floor, bool with_frames) {
    const auto& rule = triangle_rule();
    std::vector<std::array<Vec3, 3>> kept;
    kept.reserve(patch.tris.size());
    for (const auto& tri : patch.tris) {
        const double area = triangle_area(tri[0], tri[1], tri[2]);
        if (area <= area_floor) continue;
        kept.push_back(tri);
        patch.area += area;
        for (int q = 0; q < 6; ++q) {
            const auto& b = rule.bary[q];
            patch.qpoints.push_back(b[0] * tri[0] + b[1] * tri[1] + b[2] * tri[2]);
            patch.qweights.push_back(rule.weights[q] * area);
        }
    }
    patch.tris = std::move(kept);
    if (with_frames) {
        patch.qframes.reserve(patch.qpoints.size());
        for (const auto& x : patch.qpoints) patch.qframes.push_back(frame(s, x, t));
    }
}

} // namespace detail

/// Reconstructs Gamma_h inside mesh tetrahedron K on the 8^rg Kuhn sub-grid.
/// Sub-tet vertices lie on the global fine lattice, so patches of neighboring
/// tetrahedra match exactly along shared faces.
inline SurfacePatch reconstruct(const BackgroundMesh& m, const TetRef& K,
                                const LevelSetSurface& s, double t, int rg,
                                bool with_frames = true) {
    SurfacePatch patch;
    patch.owner = tet_id(m, K);
    const int ns = 1 << rg;
    const double hf = m.h * std::ldexp(1.0, -rg);
    const double perturb = 1e-14 * m.h;
    const int base[3] = {K.ci * ns, K.cj * ns, K.ck * ns};

    // memoized level-set values on the local fine vertex lattice
    const int nv = ns + 1;
    std::vector<double> vals(static_cast<std::size_t>(nv) * nv * nv,
                             std::numeric_limits<double>::quiet_NaN());
    auto value_at = [&](int li, int lj, int lk) {
        double& slot = vals[(static_cast<std::size_t>(li) * nv + lj) * nv + lk];
        if (std::isnan(slot)) {
            const Vec3 x(m.xmin + (base[0] + li) * hf, m.xmin + (base[1] + lj) * hf,
                         m.xmin + (base[2] + lk) * hf);
            slot = eval_phi_safe(s, x, t) + perturb;
        }
        return slot;
    };

    for (const auto& sub : detail::kuhn_subdivision(K.loc, rg)) {
        const auto corners = detail::tet_corners(sub.loc);
        std::array<Vec3, 4> v;
        std::array<double, 4> f;
        for (int a = 0; a < 4; ++a) {
            const int li = sub.f[0] + corners[a][0];
            const int lj = sub.f[1] + corners[a][1];
            const int lk = sub.f[2] + corners[a][2];
            v[a] = Vec3(m.xmin + (base[0] + li) * hf, m.xmin + (base[1] + lj) * hf,
                        m.xmin + (base[2] + lk) * hf);
            f[a] = value_at(li, lj, lk);
        }
        detail::march_subtet(v, f, patch.tris);
    }
    detail::finalize_patch(patch, s, t, 1e-14 * hf * hf, with_frames);
    return patch;
}

/// Reconstruction inside an arbitrary tetrahedron (vertex list), via the
/// affine image of the reference Kuhn subdivision. Not face-conforming with
/// neighbors; intended for standalone geometry work and tests.
inline SurfacePatch reconstruct_tet(const std::array<Vec3, 4>& w, const LevelSetSurface& s,
                                    double t, int rg, bool with_frames = true) {
    SurfacePatch patch;
    const int ns = 1 << rg;
    const Vec3 L0 = w[1] - w[0], L1 = w[2] - w[1], L2 = w[3] - w[2];
    double scale = std::max({L0.norm(), L1.norm(), L2.norm()});
    const double perturb = 1e-14 * scale;
    auto map = [&](int i, int j, int k) {
        const double u0 = double(i) / ns, u1 = double(j) / ns, u2 = double(k) / ns;
        return Vec3(w[0] + u0 * L0 + u1 * L1 + u2 * L2);
    };
    for (const auto& sub : detail::kuhn_subdivision(0, rg)) {
        const auto corners = detail::tet_corners(sub.loc);
        std::array<Vec3, 4> v;
        std::array<double, 4> f;
        for (int a = 0; a < 4; ++a) {
            v[a] = map(sub.f[0] + corners[a][0], sub.f[1] + corners[a][1],
                       sub.f[2] + corners[a][2]);
            f[a] = eval_phi_safe(s, v[a], t) + perturb;
        }
        detail::march_subtet(v, f, patch.tris);
    }
    detail::finalize_patch(patch, s, t, 1e-14 * (scale * scale) / (ns * ns), with_frames);
    return patch;
}

template <class F>
double surface_integrate(const SurfacePatch& patch, F&& f) {
    double sum = 0.0;
    for (std::size_t q = 0; q < patch.qpoints.size(); ++q)
        sum += patch.qweights[q] * f(patch.qpoints[q]);
    return sum;
}

template <class F>
double surface_integrate(const std::vector<SurfacePatch>& patches, F&& f) {
    double sum = 0.0;
    for (const auto& p : patches) sum += surface_integrate(p, f);
    return sum;
}

inline double total_area(const std::vector<SurfacePatch>& patches) {
    double a = 0.0;
    for (const auto& p : patches) a += p.area;
    return a;
}

/// Patches for all cut elements of a band, in cut order.
inline std::vector<SurfacePatch> build_patches(const ActiveBand& band, const LevelSetSurface& s,
                                               double t, int rg, int threads = 1,
                                               bool with_frames = true) {
    std::vector<SurfacePatch> patches(band.cut.size());
    parallel_for(
        0, static_cast<index_t>(band.cut.size()),
        [&](index_t i) {
            patches[i] =
                reconstruct(band.mesh, band.elements[band.cut[i]], s, t, rg, with_frames);
        },
        threads);
    return patches;
}

/// extract_band with the sub-refined intersection probe wired in.
inline ActiveBand extract_band_refined(const BackgroundMesh& m, const LevelSetSurface& s,
                                       double t, double delta, int rg) {
    CutProbe probe = [&](const TetRef& K) {
        return !reconstruct(m, K, s, t, rg, /*with_frames=*/false).empty();
    };
    return extract_band(m, s, t, delta, probe);
}

} // namespace surfns
