#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <vector>

#include "surfns/geometry.hpp"
#include "surfns/util.hpp"

namespace surfns {

class EmptyBandError : public std::runtime_error {
public:
    explicit EmptyBandError(const std::string& what) : std::runtime_error(what) {}
};

/// Implicit uniform tetrahedral mesh of the box (-5/3, 5/3)^3.
/// Each cube of side h = (5/3) 2^-level is split into six tetrahedra by the
/// Kuhn decomposition (all cubes identically oriented, hence conforming).
/// Nothing is materialized; tetrahedra and nodes are addressed by integers.
struct BackgroundMesh {
    int level = 0;
    double h = 5.0 / 3.0;
    int ncubes = 2;        // cubes per axis, 2^(level+1)
    double xmin = -5.0 / 3.0;
    int nhalf = 0;         // half-lattice points per axis, 2*ncubes + 1

    index_t num_cubes() const { return static_cast<index_t>(ncubes) * ncubes * ncubes; }
    index_t num_tets() const { return num_cubes() * 6; }
    double half_step() const { return 0.5 * h; }
    double tet_diameter() const { return std::sqrt(3.0) * h; }
};

inline BackgroundMesh make_mesh(int level) {
    if (level < 0 || level > 7) throw std::invalid_argument("mesh level must be in [0,7]");
    BackgroundMesh m;
    m.level = level;
    m.h = (5.0 / 3.0) * std::ldexp(1.0, -level);
    m.ncubes = 2 << level;
    m.nhalf = 2 * m.ncubes + 1;
    return m;
}

/// One tetrahedron: cube index plus local Kuhn index in [0,6).
struct TetRef {
    int ci = 0, cj = 0, ck = 0;
    int loc = 0;
};

namespace detail {

// Kuhn chains: tet loc = { x_a >= x_b >= x_c } in cube-local coordinates,
// with (a,b,c) the permutations below in lexicographic order.
inline constexpr int kChainPerm[6][3] = {{0, 1, 2}, {0, 2, 1}, {1, 0, 2},
                                         {1, 2, 0}, {2, 0, 1}, {2, 1, 0}};
inline constexpr bool kChainOdd[6] = {false, true, true, false, false, true};

// Cube-local corner offsets of tet loc, reordered for positive volume.
inline std::array<std::array<int, 3>, 4> tet_corners(int loc) {
    const int a = kChainPerm[loc][0], b = kChainPerm[loc][1];
    std::array<std::array<int, 3>, 4> q{};
    q[0] = {0, 0, 0};
    q[1][a] = 1;
    q[2][a] = 1;
    q[2][b] = 1;
    q[3] = {1, 1, 1};
    if (kChainOdd[loc]) std::swap(q[2], q[3]);
    return q;
}

} // namespace detail

inline index_t tet_id(const BackgroundMesh& m, const TetRef& t) {
    return ((static_cast<index_t>(t.ci) * m.ncubes + t.cj) * m.ncubes + t.ck) * 6 + t.loc;
}

inline TetRef tet_from_id(const BackgroundMesh& m, index_t id) {
    TetRef t;
    t.loc = static_cast<int>(id % 6);
    index_t c = id / 6;
    t.ck = static_cast<int>(c % m.ncubes);
    c /= m.ncubes;
    t.cj = static_cast<int>(c % m.ncubes);
    t.ci = static_cast<int>(c / m.ncubes);
    return t;
}

/// Vertex positions on the half-step lattice (even indices are cube corners).
inline Vec3 half_lattice_point(const BackgroundMesh& m, int i, int j, int k) {
    const double s = m.half_step();
    return Vec3(m.xmin + i * s, m.xmin + j * s, m.xmin + k * s);
}

inline index_t half_lattice_key(const BackgroundMesh& m, int i, int j, int k) {
    const index_t M = m.nhalf;
    return (static_cast<index_t>(i) * M + j) * M + k;
}

inline std::array<std::array<int, 3>, 4> tet_vertex_half_coords(const BackgroundMesh&,
                                                                const TetRef& t) {
    const auto corners = detail::tet_corners(t.loc);
    std::array<std::array<int, 3>, 4> v{};
    const int base[3] = {t.ci, t.cj, t.ck};
    for (int a = 0; a < 4; ++a)
        for (int d = 0; d < 3; ++d) v[a][d] = 2 * (base[d] + corners[a][d]);
    return v;
}

inline std::array<Vec3, 4> tet_vertices(const BackgroundMesh& m, const TetRef& t) {
    const auto hc = tet_vertex_half_coords(m, t);
    std::array<Vec3, 4> v;
    for (int a = 0; a < 4; ++a) v[a] = half_lattice_point(m, hc[a][0], hc[a][1], hc[a][2]);
    return v;
}

// Local P2 node order: 4 vertices, then edge midpoints (01)(02)(03)(12)(13)(23).
inline constexpr int kEdgePairs[6][2] = {{0, 1}, {0, 2}, {0, 3}, {1, 2}, {1, 3}, {2, 3}};

/// Global keys of the ten P2 nodes of a tetrahedron.
inline std::array<index_t, 10> tet_p2_keys(const BackgroundMesh& m, const TetRef& t) {
    const auto hc = tet_vertex_half_coords(m, t);
    std::array<index_t, 10> keys{};
    for (int a = 0; a < 4; ++a) keys[a] = half_lattice_key(m, hc[a][0], hc[a][1], hc[a][2]);
    for (int e = 0; e < 6; ++e) {
        const auto& p = kEdgePairs[e];
        keys[4 + e] = half_lattice_key(m, (hc[p[0]][0] + hc[p[1]][0]) / 2,
                                       (hc[p[0]][1] + hc[p[1]][1]) / 2,
                                       (hc[p[0]][2] + hc[p[1]][2]) / 2);
    }
    return keys;
}

inline std::array<Vec3, 10> tet_p2_points(const BackgroundMesh& m, const TetRef& t) {
    const auto hc = tet_vertex_half_coords(m, t);
    std::array<Vec3, 10> pts;
    for (int a = 0; a < 4; ++a) pts[a] = half_lattice_point(m, hc[a][0], hc[a][1], hc[a][2]);
    for (int e = 0; e < 6; ++e) {
        const auto& p = kEdgePairs[e];
        pts[4 + e] = half_lattice_point(m, (hc[p[0]][0] + hc[p[1]][0]) / 2,
                                        (hc[p[0]][1] + hc[p[1]][1]) / 2,
                                        (hc[p[0]][2] + hc[p[1]][2]) / 2);
    }
    return pts;
}

/// Narrow band O_dt and its cut subset omega at one time level. Immutable
/// after construction; elements and ids are in ascending id order.
struct ActiveBand {
    BackgroundMesh mesh;
    double time = 0.0;
    double delta = 0.0;
    std::vector<TetRef> elements;
    std::vector<index_t> ids;          // sorted, parallel to elements
    std::vector<std::int32_t> cut;     // indices into elements, ascending

    bool has_element(index_t id) const {
        return std::binary_search(ids.begin(), ids.end(), id);
    }
    std::size_t size() const { return elements.size(); }
};

using CutProbe = std::function<bool(const TetRef&)>;

/// Extracts the narrow band: all tetrahedra whose sampled distance
/// min over the ten P2 nodes of |phi|/|grad phi| is at most delta + diam(K)/4,
/// plus every cut tetrahedron. Every point of a Kuhn tetrahedron lies inside
/// one of its eight half-scale children, whose circumradius is diam/4 and
/// whose vertices are P2 nodes, so diam/4 is a covering radius of the node
/// sample and the test errs on the inclusive side of the true
/// dist(K, Gamma) <= delta condition. Cut detection is by vertex sign change
/// of the (perturbed) level set; the optional probe catches intersections
/// without a vertex sign change. delta == 0 yields the zero-width band,
/// exactly the cut set.
inline ActiveBand extract_band(const BackgroundMesh& m, const LevelSetSurface& s, double t,
                               double delta, const CutProbe& probe = {}) {
    if (delta < 0.0) throw std::invalid_argument("band width must be nonnegative");
    ActiveBand band;
    band.mesh = m;
    band.time = t;
    band.delta = delta;
    const double margin = 0.25 * m.tet_diameter();
    const double perturb = 1e-14 * m.h;
    const double skip_radius = 2.0 * (delta + 4.0 * margin);

    // phi and |grad phi| on the 27 half-lattice points of a cube (all of them
    // are P2 nodes of its six tetrahedra)
    std::array<double, 27> phiv, ratio;
    auto idx3 = [](int i, int j, int k) { return (i * 3 + j) * 3 + k; };
    for (int ci = 0; ci < m.ncubes; ++ci)
        for (int cj = 0; cj < m.ncubes; ++cj)
            for (int ck = 0; ck < m.ncubes; ++ck) {
                const Vec3 base = half_lattice_point(m, 2 * ci, 2 * cj, 2 * ck);
                const Vec3 center = base + 0.5 * m.h * Vec3::Ones();
                if (std::abs(eval_phi_safe(s, center, t)) > skip_radius) continue;

                for (int i = 0; i < 3; ++i)
                    for (int j = 0; j < 3; ++j)
                        for (int k = 0; k < 3; ++k) {
                            const Vec3 v = base + 0.5 * m.h * Vec3(i, j, k);
                            const double p = eval_phi_safe(s, v, t) + perturb;
                            const double gn =
                                (s.kind != SurfaceKind::Custom && v.squaredNorm() == 0.0)
                                    ? 1.0
                                    : grad_phi(s, v, t).norm();
                            phiv[idx3(i, j, k)] = p;
                            ratio[idx3(i, j, k)] = std::abs(p) / gn;
                        }
                for (int loc = 0; loc < 6; ++loc) {
                    const auto corners = detail::tet_corners(loc);
                    bool pos = false, neg = false;
                    double minratio = std::numeric_limits<double>::max();
                    double minabs = std::numeric_limits<double>::max();
                    for (int a = 0; a < 4; ++a) {
                        const auto& q = corners[a];
                        const int c = idx3(2 * q[0], 2 * q[1], 2 * q[2]);
                        (phiv[c] > 0.0 ? pos : neg) = true;
                        minratio = std::min(minratio, ratio[c]);
                        minabs = std::min(minabs, std::abs(phiv[c]));
                    }
                    for (const auto& e : kEdgePairs) {
                        const auto &qa = corners[e[0]], &qb = corners[e[1]];
                        const int c = idx3(qa[0] + qb[0], qa[1] + qb[1], qa[2] + qb[2]);
                        minratio = std::min(minratio, ratio[c]);
                        minabs = std::min(minabs, std::abs(phiv[c]));
                    }
                    const TetRef tet{ci, cj, ck, loc};
                    bool is_cut = pos && neg;
                    if (!is_cut && probe && minratio <= 2.5 * margin) is_cut = probe(tet);
                    // second guard: |phi|/|grad phi| underestimates the distance far
                    // inside radial surfaces, where the homogeneous gradient blows up
                    const bool in_band =
                        is_cut || (delta > 0.0 && minratio <= delta + margin &&
                                   minabs <= 1.25 * (delta + margin));
                    if (!in_band) continue;
                    if (is_cut) band.cut.push_back(static_cast<std::int32_t>(band.elements.size()));
                    band.elements.push_back(tet);
                    band.ids.push_back(tet_id(m, tet));
                }
            }
    if (band.cut.empty())
        throw EmptyBandError("no cut tetrahedra: surface does not intersect the mesh");
    return band;
}

/// Ids of cut elements of band_new that the old band does not cover
/// (the discrete inclusion condition omega^n subset O_dt^{n-1}).
inline std::vector<index_t> check_band_inclusion(const ActiveBand& band_new,
                                                 const ActiveBand& band_old) {
    if (band_new.mesh.level != band_old.mesh.level)
        throw std::invalid_argument("band inclusion check requires a common background mesh");
    std::vector<index_t> violators;
    for (const auto c : band_new.cut) {
        const index_t id = band_new.ids[c];
        if (!band_old.has_element(id)) violators.push_back(id);
    }
    return violators;
}

} // namespace surfns
