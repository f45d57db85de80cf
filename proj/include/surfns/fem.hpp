#pragma once

#include <array>
#include <functional>
#include <memory>
#include <unordered_map>
#include <vector>

#include "surfns/cutgeom.hpp"
#include "surfns/mesh.hpp"
#include "surfns/solver.hpp"

namespace surfns {

// ---------------------------------------------------------------------------
// P2 / P1 nodal bases on a tetrahedron
// ---------------------------------------------------------------------------

struct P2Eval {
    std::array<double, 4> lam;  // barycentric coordinates (the P1 basis)
    std::array<double, 10> N;   // P2 shape values
    std::array<Vec3, 10> G;     // P2 shape gradients (full ambient gradients)
};

struct TetBasis {
    std::array<Vec3, 4> v;
    std::array<Vec3, 4> grad_lam;

    void init(const std::array<Vec3, 4>& verts) {
        v = verts;
        Mat3 M;
        for (int k = 0; k < 3; ++k) M.col(k) = v[k + 1] - v[0];
        const Mat3 Minv = M.inverse();
        for (int k = 0; k < 3; ++k) grad_lam[k + 1] = Minv.row(k);
        grad_lam[0] = -(grad_lam[1] + grad_lam[2] + grad_lam[3]);
    }

    void eval(const Vec3& x, P2Eval& out) const {
        const Vec3 d = x - v[0];
        out.lam[1] = grad_lam[1].dot(d);
        out.lam[2] = grad_lam[2].dot(d);
        out.lam[3] = grad_lam[3].dot(d);
        out.lam[0] = 1.0 - out.lam[1] - out.lam[2] - out.lam[3];
        for (int a = 0; a < 4; ++a) {
            out.N[a] = out.lam[a] * (2.0 * out.lam[a] - 1.0);
            out.G[a] = (4.0 * out.lam[a] - 1.0) * grad_lam[a];
        }
        for (int e = 0; e < 6; ++e) {
            const int p = kEdgePairs[e][0], q = kEdgePairs[e][1];
            out.N[4 + e] = 4.0 * out.lam[p] * out.lam[q];
            out.G[4 + e] = 4.0 * (out.lam[p] * grad_lam[q] + out.lam[q] * grad_lam[p]);
        }
    }
};

inline Vec3 project_tangential(const Vec3& v, const SurfaceFrame& f) { return f.P * v; }

/// E_s(P u) = E_s(u) - u_N H with E_s(u) = P sym(grad u) P (full ambient gradient).
inline Mat3 strain_tensor(const Mat3& grad_u, double u_N, const SurfaceFrame& f) {
    const Mat3 sym = 0.5 * (grad_u + grad_u.transpose());
    return Mat3(f.P * sym * f.P) - u_N * f.H;
}

// ---------------------------------------------------------------------------
// Degrees of freedom
// ---------------------------------------------------------------------------

/// Velocity nodes are the P2 nodes of all band elements (x3 components);
/// pressure nodes are the vertices of cut elements. Index assignment follows
/// the sorted node keys, so it is deterministic given the band.
struct DofMap {
    std::vector<index_t> vel_keys; // sorted
    std::vector<index_t> pre_keys; // sorted
    std::unordered_map<index_t, int> vel_index;
    std::unordered_map<index_t, int> pre_index;

    int n_u() const { return static_cast<int>(vel_keys.size()); }
    int n_p() const { return static_cast<int>(pre_keys.size()); }
    int n_total() const { return 3 * n_u() + n_p() + 1; } // + zero-mean multiplier
    int lambda_index() const { return 3 * n_u() + n_p(); }
};

inline DofMap build_dofmap(const ActiveBand& band) {
    DofMap d;
    d.vel_keys.reserve(band.elements.size() * 4);
    for (const auto& el : band.elements) {
        const auto keys = tet_p2_keys(band.mesh, el);
        d.vel_keys.insert(d.vel_keys.end(), keys.begin(), keys.end());
    }
    std::sort(d.vel_keys.begin(), d.vel_keys.end());
    d.vel_keys.erase(std::unique(d.vel_keys.begin(), d.vel_keys.end()), d.vel_keys.end());
    for (const auto c : band.cut) {
        const auto keys = tet_p2_keys(band.mesh, band.elements[c]);
        for (int a = 0; a < 4; ++a) d.pre_keys.push_back(keys[a]);
    }
    std::sort(d.pre_keys.begin(), d.pre_keys.end());
    d.pre_keys.erase(std::unique(d.pre_keys.begin(), d.pre_keys.end()), d.pre_keys.end());
    d.vel_index.reserve(d.vel_keys.size() * 2);
    d.pre_index.reserve(d.pre_keys.size() * 2);
    for (std::size_t i = 0; i < d.vel_keys.size(); ++i)
        d.vel_index.emplace(d.vel_keys[i], static_cast<int>(i));
    for (std::size_t i = 0; i < d.pre_keys.size(); ++i)
        d.pre_index.emplace(d.pre_keys[i], static_cast<int>(i));
    return d;
}

inline Vec3 node_position(const BackgroundMesh& m, index_t key) {
    const index_t M = m.nhalf;
    const int k = static_cast<int>(key % M);
    const int j = static_cast<int>((key / M) % M);
    const int i = static_cast<int>(key / (M * M));
    return half_lattice_point(m, i, j, k);
}

// ---------------------------------------------------------------------------
// Fields
// ---------------------------------------------------------------------------

/// Coefficient vector over a DofMap: 3 components per P2 node for velocity
/// (layout 3*node+comp), or one value per P1 pressure node.
struct FieldVector {
    std::shared_ptr<const ActiveBand> band;
    std::shared_ptr<const DofMap> dofs;
    int comps = 3;
    std::vector<double> coef;
};

inline FieldVector zero_velocity_field(std::shared_ptr<const ActiveBand> band,
                                       std::shared_ptr<const DofMap> dofs) {
    FieldVector f;
    f.band = std::move(band);
    f.dofs = std::move(dofs);
    f.comps = 3;
    f.coef.assign(3 * static_cast<std::size_t>(f.dofs->n_u()), 0.0);
    return f;
}

inline FieldVector zero_pressure_field(std::shared_ptr<const ActiveBand> band,
                                       std::shared_ptr<const DofMap> dofs) {
    FieldVector f;
    f.band = std::move(band);
    f.dofs = std::move(dofs);
    f.comps = 1;
    f.coef.assign(static_cast<std::size_t>(f.dofs->n_p()), 0.0);
    return f;
}

/// Nodal interpolation of a velocity-valued function.
inline FieldVector interpolate_velocity(std::shared_ptr<const ActiveBand> band,
                                        std::shared_ptr<const DofMap> dofs,
                                        const std::function<Vec3(const Vec3&)>& fn) {
    FieldVector f = zero_velocity_field(std::move(band), std::move(dofs));
    for (std::size_t i = 0; i < f.dofs->vel_keys.size(); ++i) {
        const Vec3 x = node_position(f.band->mesh, f.dofs->vel_keys[i]);
        const Vec3 u = fn(x);
        for (int c = 0; c < 3; ++c) f.coef[3 * i + c] = u[c];
    }
    return f;
}

/// I_h(w_N n): nodal interpolant of the normal velocity extension. A node at
/// the origin (possible for very coarse bands around radial surfaces) gets a
/// zero value; such nodes are order-one away from the surface, so their value
/// never reaches a surface integral.
inline FieldVector normal_velocity_field(std::shared_ptr<const ActiveBand> band,
                                         std::shared_ptr<const DofMap> dofs,
                                         const LevelSetSurface& s, double t) {
    return interpolate_velocity(std::move(band), std::move(dofs), [&](const Vec3& x) {
        if (s.kind != SurfaceKind::Custom && x.squaredNorm() == 0.0) return Vec3(Vec3::Zero());
        return Vec3(normal_speed(s, x, t) * quasi_normal(s, x, t));
    });
}

/// Per-element velocity node indices into a (possibly foreign) DofMap.
/// Returns false if some node is not covered (band-inclusion violation).
inline bool gather_velocity_nodes(const DofMap& dofs, const std::array<index_t, 10>& keys,
                                  std::array<int, 10>& idx) {
    bool ok = true;
    for (int a = 0; a < 10; ++a) {
        const auto it = dofs.vel_index.find(keys[a]);
        if (it == dofs.vel_index.end()) {
            idx[a] = -1;
            ok = false;
        } else {
            idx[a] = it->second;
        }
    }
    return ok;
}

inline Vec3 eval_velocity(const FieldVector& f, const std::array<int, 10>& idx,
                          const P2Eval& e) {
    Vec3 u = Vec3::Zero();
    for (int a = 0; a < 10; ++a) {
        const double* c = &f.coef[3 * static_cast<std::size_t>(idx[a])];
        u.x() += e.N[a] * c[0];
        u.y() += e.N[a] * c[1];
        u.z() += e.N[a] * c[2];
    }
    return u;
}

inline Mat3 eval_velocity_grad(const FieldVector& f, const std::array<int, 10>& idx,
                               const P2Eval& e) {
    Mat3 J = Mat3::Zero(); // J(i,j) = d u_i / d x_j
    for (int a = 0; a < 10; ++a) {
        const double* c = &f.coef[3 * static_cast<std::size_t>(idx[a])];
        for (int i = 0; i < 3; ++i) J.row(i) += c[i] * e.G[a].transpose();
    }
    return J;
}

inline double eval_pressure(const FieldVector& f, const std::array<int, 4>& pidx,
                            const P2Eval& e) {
    double p = 0.0;
    for (int c = 0; c < 4; ++c) p += e.lam[c] * f.coef[pidx[c]];
    return p;
}

// ---------------------------------------------------------------------------
// Assembly of the saddle system
// ---------------------------------------------------------------------------

struct AssembleParams {
    double mu = 5e-3;
    double dt = 0.05;
    double tau = 0.0;   // normal penalty (absolute)
    double rho_u = 0.0; // velocity volume stabilization
    double rho_p = 0.0; // pressure volume stabilization
    std::array<double, 3> bdf = {1.0, -1.0, 0.0}; // weights of (u^n, u^{n-1}, u^{n-2})
};

/// tau = h^-2, rho_u = h^-1, rho_p = h, times user scales.
inline AssembleParams default_params(double h, double dt, double mu, double tau_scale = 1.0,
                                     double rho_u_scale = 1.0, double rho_p_scale = 1.0) {
    AssembleParams p;
    p.mu = mu;
    p.dt = dt;
    p.tau = tau_scale / (h * h);
    p.rho_u = rho_u_scale / h;
    p.rho_p = rho_p_scale * h;
    return p;
}

inline std::array<double, 3> bdf_weights(int order) {
    if (order == 1) return {1.0, -1.0, 0.0};
    if (order == 2) return {1.5, -2.0, 0.5};
    throw std::invalid_argument("BDF order must be 1 or 2");
}

/// Block system [[A, B^T, 0], [B, -C, e], [0, e^T, 0]] with the unknown
/// ordering (velocity, pressure, zero-mean multiplier).
struct SaddleSystem {
    SparseMatrix A;
    std::vector<double> rhs;
    std::vector<double> zero_mean; // e_c = integral of pressure basis c over Gamma_h
    int n_u = 0;
    int n_p = 0;
    AssembleParams prm;

    int size() const { return 3 * n_u + n_p + 1; }
};

struct AssemblyProblem {
    const ActiveBand* band = nullptr;
    const std::vector<SurfacePatch>* patches = nullptr; // aligned with band->cut
    const DofMap* dofs = nullptr;
    const LevelSetSurface* surface = nullptr;
    double t = 0.0;
    AssembleParams prm;
    const FieldVector* hist1 = nullptr;   // u^{n-1}
    const FieldVector* hist2 = nullptr;   // u^{n-2} (BDF2)
    const FieldVector* wn_field = nullptr; // I_h(w_N n) on the current dofs
    // advection c = aw[0] u^{n-1} + aw[1] u^{n-2} + I_h(w_N n); BDF2 steps use
    // the second-order extrapolation (2, -1)
    std::array<double, 2> adv_weights = {1.0, 0.0};
    std::function<Vec3(const Vec3&, double)> f;
    std::function<double(const Vec3&, double)> g;
    std::function<SurfaceFrame(const Vec3&)> frame_override; // testing hook
    int threads = 1;
};

namespace detail {

struct VolLocal {
    std::array<index_t, 10> keys;
    std::array<int, 4> pidx; // pressure indices when cut, else unused
    bool cut = false;
    double V[10][10];  // (n . grad Na)(n . grad Nb) dx
    double C[4][4];    // (n . grad lam_c)(n . grad lam_d) dx over cut elements
};

struct CutLocal {
    std::array<int, 10> vidx;
    std::array<int, 4> pidx;
    index_t missing = -1; // element id if a history node is uncovered
    double Auu[30][30];
    double Bpu[4][30];
    double e[4];
    double rhs_u[30];
    double rhs_p[4];
};

} // namespace detail

inline SaddleSystem assemble(const AssemblyProblem& pb) {
    const ActiveBand& band = *pb.band;
    const DofMap& dofs = *pb.dofs;
    const BackgroundMesh& mesh = band.mesh;
    const auto& prm = pb.prm;
    const double t = pb.t;

    SaddleSystem sys;
    sys.prm = prm;
    sys.n_u = dofs.n_u();
    sys.n_p = dofs.n_p();
    sys.zero_mean.assign(sys.n_p, 0.0);
    sys.rhs.assign(sys.size(), 0.0);
    const int lam_col = dofs.lambda_index();

    auto vol_normal = [&](const Vec3& x) {
        return pb.frame_override ? pb.frame_override(x).n : quasi_normal(*pb.surface, x, t);
    };

    TripletBuffer trip;
    trip.reserve(band.elements.size() * 160 + band.cut.size() * 1100);

    // --- volume stabilization: rho_u over the whole band, rho_p over cut ---
    {
        const std::size_t n_el = band.elements.size();
        const std::size_t chunk = 2048;
        std::vector<detail::VolLocal> locals(std::min(chunk, n_el));
        std::vector<char> is_cut(n_el, 0);
        for (const auto c : band.cut) is_cut[c] = 1;
        const auto& rule = tet_rule();
        for (std::size_t lo = 0; lo < n_el; lo += chunk) {
            const std::size_t hi = std::min(n_el, lo + chunk);
            parallel_for(
                lo, hi,
                [&](index_t ei) {
                    detail::VolLocal& L = locals[ei - lo];
                    const TetRef el = band.elements[ei];
                    L.keys = tet_p2_keys(mesh, el);
                    L.cut = is_cut[ei] != 0;
                    TetBasis basis;
                    basis.init(tet_vertices(mesh, el));
                    for (auto& r : L.V)
                        for (auto& x : r) x = 0.0;
                    for (auto& r : L.C)
                        for (auto& x : r) x = 0.0;
                    const double vol = std::abs(tet_volume(basis.v));
                    P2Eval pe;
                    for (int q = 0; q < 11; ++q) {
                        const auto& b = rule.bary[q];
                        const Vec3 x = b[0] * basis.v[0] + b[1] * basis.v[1] +
                                       b[2] * basis.v[2] + b[3] * basis.v[3];
                        const double w = vol * rule.weights[q];
                        const Vec3 n = vol_normal(x);
                        basis.eval(x, pe);
                        double gn[10];
                        for (int a = 0; a < 10; ++a) gn[a] = n.dot(pe.G[a]);
                        for (int b2 = 0; b2 < 10; ++b2)
                            for (int a = 0; a < 10; ++a) L.V[b2][a] += w * gn[a] * gn[b2];
                        if (L.cut) {
                            double pn[4];
                            for (int c = 0; c < 4; ++c) pn[c] = n.dot(basis.grad_lam[c]);
                            for (int d = 0; d < 4; ++d)
                                for (int c = 0; c < 4; ++c) L.C[d][c] += w * pn[c] * pn[d];
                        }
                    }
                    if (L.cut)
                        for (int c = 0; c < 4; ++c) L.pidx[c] = dofs.pre_index.at(L.keys[c]);
                },
                pb.threads);
            for (std::size_t ei = lo; ei < hi; ++ei) {
                const detail::VolLocal& L = locals[ei - lo];
                int vidx[10];
                for (int a = 0; a < 10; ++a) vidx[a] = dofs.vel_index.at(L.keys[a]);
                for (int b2 = 0; b2 < 10; ++b2)
                    for (int a = 0; a < 10; ++a) {
                        const double v = prm.rho_u * L.V[b2][a];
                        for (int c = 0; c < 3; ++c)
                            trip.add(3 * vidx[b2] + c, 3 * vidx[a] + c, v);
                    }
                if (L.cut) {
                    const int base = 3 * sys.n_u;
                    for (int d = 0; d < 4; ++d)
                        for (int c = 0; c < 4; ++c)
                            trip.add(base + L.pidx[d], base + L.pidx[c], -prm.rho_p * L.C[d][c]);
                }
            }
        }
    }

    // --- surface terms over the reconstructed patches ---
    {
        const std::size_t n_cut = band.cut.size();
        const std::size_t chunk = 512;
        std::vector<detail::CutLocal> locals(std::min(chunk, n_cut));
        const double inv_dt = 1.0 / prm.dt;
        const double a0 = prm.bdf[0], a1 = prm.bdf[1], a2 = prm.bdf[2];
        for (std::size_t lo = 0; lo < n_cut; lo += chunk) {
            const std::size_t hi = std::min(n_cut, lo + chunk);
            parallel_for(
                lo, hi,
                [&](index_t ci) {
                    detail::CutLocal& L = locals[ci - lo];
                    const TetRef el = band.elements[band.cut[ci]];
                    const SurfacePatch& patch = (*pb.patches)[ci];
                    const auto keys = tet_p2_keys(mesh, el);
                    L.missing = -1;
                    std::array<int, 10> h1idx{}, h2idx{};
                    gather_velocity_nodes(dofs, keys, L.vidx);
                    for (int c = 0; c < 4; ++c) L.pidx[c] = dofs.pre_index.at(keys[c]);
                    if (pb.hist1 && !gather_velocity_nodes(*pb.hist1->dofs, keys, h1idx))
                        L.missing = tet_id(mesh, el);
                    if (pb.hist2 && !gather_velocity_nodes(*pb.hist2->dofs, keys, h2idx))
                        L.missing = tet_id(mesh, el);
                    std::fill(&L.Auu[0][0], &L.Auu[0][0] + 900, 0.0);
                    std::fill(&L.Bpu[0][0], &L.Bpu[0][0] + 120, 0.0);
                    std::fill(L.e, L.e + 4, 0.0);
                    std::fill(L.rhs_u, L.rhs_u + 30, 0.0);
                    std::fill(L.rhs_p, L.rhs_p + 4, 0.0);
                    if (L.missing >= 0 || patch.empty()) return;

                    TetBasis basis;
                    basis.init(tet_vertices(mesh, el));
                    P2Eval pe;
                    for (std::size_t q = 0; q < patch.qpoints.size(); ++q) {
                        const Vec3& x = patch.qpoints[q];
                        const double w = patch.qweights[q];
                        const SurfaceFrame fr =
                            pb.frame_override ? pb.frame_override(x) : patch.qframes[q];
                        basis.eval(x, pe);

                        Vec3 u1 = Vec3::Zero(), u2 = Vec3::Zero();
                        if (pb.hist1) u1 = eval_velocity(*pb.hist1, h1idx, pe);
                        if (pb.hist2) u2 = eval_velocity(*pb.hist2, h2idx, pe);
                        Vec3 cadv = pb.adv_weights[0] * u1 + pb.adv_weights[1] * u2;
                        if (pb.wn_field) cadv += eval_velocity(*pb.wn_field, L.vidx, pe);
                        const Vec3 fval = pb.f ? pb.f(x, t) : Vec3(Vec3::Zero());
                        const double gval = pb.g ? pb.g(x, t) : 0.0;
                        const Vec3 hist_p = fr.P * (a1 * u1 + a2 * u2);

                        Vec3 ga[10], Hga[10];
                        double Gc[10];
                        for (int a = 0; a < 10; ++a) {
                            ga[a] = fr.P * pe.G[a];
                            Hga[a] = fr.H * pe.G[a];
                            Gc[a] = pe.G[a].dot(cadv);
                        }
                        const double HF2 = fr.H.squaredNorm();
                        const double ct = a0 * inv_dt;
                        const double visc2 = 2.0 * prm.mu;

                        for (int b = 0; b < 10; ++b) {
                            const double Nb = pe.N[b];
                            for (int a = 0; a < 10; ++a) {
                                const double Na = pe.N[a];
                                const double mass = Na * Nb;
                                const double base = ct * mass + Nb * Gc[a];
                                const double gg = ga[a].dot(ga[b]);
                                for (int j = 0; j < 3; ++j)
                                    for (int i = 0; i < 3; ++i) {
                                        const double visc =
                                            0.5 * (fr.P(i, j) * gg + ga[a][j] * ga[b][i]) -
                                            Nb * fr.n[j] * Hga[a][i] -
                                            Na * fr.n[i] * Hga[b][j] +
                                            mass * fr.n[i] * fr.n[j] * HF2;
                                        L.Auu[3 * b + j][3 * a + i] +=
                                            w * (base * fr.P(i, j) +
                                                 fr.w_N * mass * fr.H(i, j) + visc2 * visc +
                                                 prm.tau * mass * fr.n[i] * fr.n[j]);
                                    }
                            }
                            for (int j = 0; j < 3; ++j)
                                L.rhs_u[3 * b + j] += w * Nb * (fval[j] - inv_dt * hist_p[j]);
                        }
                        for (int c = 0; c < 4; ++c) {
                            const Vec3 gp = fr.P * basis.grad_lam[c];
                            for (int a = 0; a < 10; ++a) {
                                const double Na = pe.N[a];
                                for (int i = 0; i < 3; ++i)
                                    L.Bpu[c][3 * a + i] += w * gp[i] * Na;
                            }
                            L.e[c] += w * pe.lam[c];
                            L.rhs_p[c] -= w * gval * pe.lam[c];
                        }
                    }
                },
                pb.threads);

            for (std::size_t ci = lo; ci < hi; ++ci) {
                const detail::CutLocal& L = locals[ci - lo];
                if (L.missing >= 0)
                    throw BandInclusionError(
                        "history band does not cover a cut element; "
                        "increase c_delta or reduce dt",
                        {L.missing});
                const int base = 3 * sys.n_u;
                for (int b = 0; b < 10; ++b)
                    for (int j = 0; j < 3; ++j) {
                        const int r = 3 * L.vidx[b] + j;
                        for (int a = 0; a < 10; ++a)
                            for (int i = 0; i < 3; ++i)
                                trip.add(r, 3 * L.vidx[a] + i, L.Auu[3 * b + j][3 * a + i]);
                        sys.rhs[r] += L.rhs_u[3 * b + j];
                    }
                for (int c = 0; c < 4; ++c) {
                    const int pr = base + L.pidx[c];
                    for (int a = 0; a < 10; ++a)
                        for (int i = 0; i < 3; ++i) {
                            const double v = L.Bpu[c][3 * a + i];
                            trip.add(pr, 3 * L.vidx[a] + i, v);
                            trip.add(3 * L.vidx[a] + i, pr, v);
                        }
                    trip.add(pr, lam_col, L.e[c]);
                    trip.add(lam_col, pr, L.e[c]);
                    sys.zero_mean[L.pidx[c]] += L.e[c];
                    sys.rhs[pr] += L.rhs_p[c];
                }
            }
        }
    }

    sys.A = trip.to_csr(sys.size(), sys.size(), pb.threads);
    return sys;
}

} // namespace surfns
