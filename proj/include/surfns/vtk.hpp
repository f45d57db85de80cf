#pragma once

#include <cstdio>
#include <fstream>
#include <iomanip>
#include <stdexcept>
#include <string>

#include "surfns/stepping.hpp"

namespace surfns {

/// Legacy ASCII VTK snapshot of Gamma_h: triangle soup with velocity vectors
/// and pressure scalars at the vertices.
inline void write_vtk_surface(const std::string& path, const StepData& sd,
                              const FieldVector& pressure) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open " + path);
    out << std::setprecision(12);
    const auto& band = *sd.band;
    const auto& patches = *sd.patches;
    std::size_t ntris = 0;
    for (const auto& p : patches) ntris += p.tris.size();

    out << "# vtk DataFile Version 3.0\n";
    out << "surfns Gamma_h snapshot t=" << sd.t << "\n";
    out << "ASCII\nDATASET UNSTRUCTURED_GRID\n";
    out << "POINTS " << 3 * ntris << " double\n";
    for (const auto& p : patches)
        for (const auto& tri : p.tris)
            for (const auto& v : tri) out << v.x() << " " << v.y() << " " << v.z() << "\n";
    out << "CELLS " << ntris << " " << 4 * ntris << "\n";
    for (std::size_t c = 0; c < ntris; ++c)
        out << "3 " << 3 * c << " " << 3 * c + 1 << " " << 3 * c + 2 << "\n";
    out << "CELL_TYPES " << ntris << "\n";
    for (std::size_t c = 0; c < ntris; ++c) out << "5\n";

    out << "POINT_DATA " << 3 * ntris << "\n";
    out << "VECTORS velocity double\n";
    P2Eval pe;
    for (std::size_t ci = 0; ci < patches.size(); ++ci) {
        const TetRef el = band.elements[band.cut[ci]];
        TetBasis basis;
        basis.init(tet_vertices(band.mesh, el));
        std::array<int, 10> vidx{};
        gather_velocity_nodes(*sd.dofs, tet_p2_keys(band.mesh, el), vidx);
        for (const auto& tri : patches[ci].tris)
            for (const auto& v : tri) {
                basis.eval(v, pe);
                const Vec3 u = eval_velocity(sd.u, vidx, pe);
                out << u.x() << " " << u.y() << " " << u.z() << "\n";
            }
    }
    out << "SCALARS pressure double 1\nLOOKUP_TABLE default\n";
    for (std::size_t ci = 0; ci < patches.size(); ++ci) {
        const TetRef el = band.elements[band.cut[ci]];
        TetBasis basis;
        basis.init(tet_vertices(band.mesh, el));
        const auto keys = tet_p2_keys(band.mesh, el);
        std::array<int, 4> pidx{};
        for (int c = 0; c < 4; ++c) pidx[c] = sd.dofs->pre_index.at(keys[c]);
        for (const auto& tri : patches[ci].tris)
            for (const auto& v : tri) {
                basis.eval(v, pe);
                out << eval_pressure(pressure, pidx, pe) << "\n";
            }
    }
}

/// step index with zero padding, e.g. snap_000042.vtk
inline std::string vtk_snapshot_name(const std::string& dir, int step) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "snap_%06d.vtk", step);
    return dir + "/" + buf;
}

} // namespace surfns
