#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Sparse>
#include <Eigen/SparseLU>
#include <unsupported/Eigen/IterativeSolvers>

#include "surfns/util.hpp"

namespace surfns {

/// Compressed-row matrix. Column indices are strictly increasing within each
/// row and duplicates are accumulated at construction.
struct SparseMatrix {
    int nrows = 0;
    int ncols = 0;
    std::vector<std::int64_t> rowptr; // size nrows+1
    std::vector<int> col;
    std::vector<double> val;

    std::int64_t nnz() const { return static_cast<std::int64_t>(col.size()); }

    std::vector<double> multiply(const std::vector<double>& x) const {
        std::vector<double> y(nrows, 0.0);
        for (int r = 0; r < nrows; ++r) {
            double s = 0.0;
            for (std::int64_t k = rowptr[r]; k < rowptr[r + 1]; ++k) s += val[k] * x[col[k]];
            y[r] = s;
        }
        return y;
    }
};

/// Assembly buffer. Entries with equal (row, col) are summed in insertion
/// order, so the compressed result is bitwise deterministic.
struct TripletBuffer {
    std::vector<int> row;
    std::vector<int> col;
    std::vector<double> val;

    void reserve(std::size_t n) {
        row.reserve(n);
        col.reserve(n);
        val.reserve(n);
    }
    void add(int r, int c, double v) {
        row.push_back(r);
        col.push_back(c);
        val.push_back(v);
    }

    SparseMatrix to_csr(int nrows, int ncols, int threads = 1) const {
        SparseMatrix A;
        A.nrows = nrows;
        A.ncols = ncols;
        const std::size_t nz = row.size();
        std::vector<std::int64_t> count(nrows + 1, 0);
        for (std::size_t k = 0; k < nz; ++k) count[row[k] + 1]++;
        std::partial_sum(count.begin(), count.end(), count.begin());
        // bucket by row, preserving insertion order within each row
        std::vector<int> bcol(nz);
        std::vector<double> bval(nz);
        {
            std::vector<std::int64_t> cursor(count.begin(), count.end() - 1);
            for (std::size_t k = 0; k < nz; ++k) {
                const std::int64_t p = cursor[row[k]]++;
                bcol[p] = col[k];
                bval[p] = val[k];
            }
        }
        // per-row sort and duplicate accumulation (insertion order within
        // equal columns); rows are independent, so this part runs in parallel
        std::vector<std::int64_t> rownnz(nrows, 0);
        parallel_for(
            0, nrows,
            [&](index_t r) {
                const std::int64_t lo = count[r], hi = count[r + 1];
                std::vector<int> order(hi - lo);
                std::iota(order.begin(), order.end(), 0);
                std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
                    return bcol[lo + a] < bcol[lo + b];
                });
                std::vector<int> ccol(hi - lo);
                std::vector<double> cval(hi - lo);
                std::int64_t m = 0;
                int last_col = -1;
                for (const int o : order) {
                    const int c = bcol[lo + o];
                    if (c == last_col) {
                        cval[m - 1] += bval[lo + o];
                    } else {
                        ccol[m] = c;
                        cval[m] = bval[lo + o];
                        ++m;
                        last_col = c;
                    }
                }
                std::copy(ccol.begin(), ccol.begin() + m, bcol.begin() + lo);
                std::copy(cval.begin(), cval.begin() + m, bval.begin() + lo);
                rownnz[r] = m;
            },
            threads);
        A.rowptr.assign(nrows + 1, 0);
        for (int r = 0; r < nrows; ++r) A.rowptr[r + 1] = A.rowptr[r] + rownnz[r];
        A.col.resize(A.rowptr[nrows]);
        A.val.resize(A.rowptr[nrows]);
        parallel_for(
            0, nrows,
            [&](index_t r) {
                std::copy(bcol.begin() + count[r], bcol.begin() + count[r] + rownnz[r],
                          A.col.begin() + A.rowptr[r]);
                std::copy(bval.begin() + count[r], bval.begin() + count[r] + rownnz[r],
                          A.val.begin() + A.rowptr[r]);
            },
            threads);
        return A;
    }
};

struct SolveReport {
    int iterations = 0; // 0 for the direct path
    double rel_residual = 0.0;
    double seconds = 0.0;
};

class SolverError : public std::runtime_error {
public:
    SolverError(const std::string& what, std::vector<double> best_iterate, SolveReport rep)
        : std::runtime_error(what), best(std::move(best_iterate)), report(rep) {}
    std::vector<double> best;
    SolveReport report;
};

enum class SolverMethod { Direct, Gmres };

struct SolveOptions {
    SolverMethod method = SolverMethod::Direct;
    double tol = 1e-9;
    int restart = 100;
    int max_iters = 4000;
    double ilut_droptol = 3e-3;
    int ilut_fill = 7;
};

namespace detail {

inline Eigen::SparseMatrix<double> to_eigen(const SparseMatrix& A) {
    Eigen::SparseMatrix<double> M(A.nrows, A.ncols);
    std::vector<Eigen::Triplet<double>> trip;
    trip.reserve(A.col.size());
    for (int r = 0; r < A.nrows; ++r)
        for (std::int64_t k = A.rowptr[r]; k < A.rowptr[r + 1]; ++k)
            trip.emplace_back(r, A.col[k], A.val[k]);
    M.setFromTriplets(trip.begin(), trip.end());
    return M;
}

inline double rel_residual(const SparseMatrix& A, const std::vector<double>& x,
                           const std::vector<double>& b) {
    const auto Ax = A.multiply(x);
    double rr = 0.0, bb = 0.0;
    for (std::size_t i = 0; i < b.size(); ++i) {
        const double d = b[i] - Ax[i];
        rr += d * d;
        bb += b[i] * b[i];
    }
    return bb > 0.0 ? std::sqrt(rr / bb) : std::sqrt(rr);
}

} // namespace detail

/// Solves A x = b to the requested relative residual. The direct path is
/// sparse LU with fill-reducing ordering plus one step of iterative
/// refinement; the alternate path is restarted GMRES with ILUT.
inline std::pair<std::vector<double>, SolveReport> solve(const SparseMatrix& A,
                                                         const std::vector<double>& b,
                                                         const SolveOptions& opts = {}) {
    if (A.nrows != A.ncols) throw std::invalid_argument("solve requires a square system");
    if (static_cast<int>(b.size()) != A.nrows)
        throw std::invalid_argument("right-hand side size mismatch");
    const auto t0 = std::chrono::steady_clock::now();
    std::vector<double> x(A.nrows, 0.0);
    SolveReport rep;
    if (std::all_of(b.begin(), b.end(), [](double v) { return v == 0.0; })) {
        rep.seconds =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        return {std::move(x), rep}; // x = 0 solves any nonsingular system
    }
    const Eigen::SparseMatrix<double> M = detail::to_eigen(A);
    Eigen::Map<const Eigen::VectorXd> bv(b.data(), b.size());

    auto finish = [&](int iters) {
        rep.iterations = iters;
        rep.rel_residual = detail::rel_residual(A, x, b);
        rep.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    };

    if (opts.method == SolverMethod::Direct) {
        Eigen::SparseLU<Eigen::SparseMatrix<double>, Eigen::COLAMDOrdering<int>> lu;
        lu.analyzePattern(M);
        lu.factorize(M);
        if (lu.info() != Eigen::Success) {
            finish(0);
            throw SolverError("sparse LU factorization failed (singular matrix?)", x, rep);
        }
        Eigen::VectorXd xv = lu.solve(bv);
        // one refinement pass; cheap next to the factorization
        Eigen::VectorXd r = bv - M * xv;
        xv += lu.solve(r).eval();
        Eigen::VectorXd::Map(x.data(), x.size()) = xv;
        finish(0);
        if (!std::isfinite(rep.rel_residual) || rep.rel_residual > opts.tol)
            throw SolverError("direct solve residual above tolerance", x, rep);
        return {std::move(x), rep};
    }

    // The solver stops on the preconditioned residual, which can sit above
    // the true one: aim low, verify the true residual, and restart from the
    // current iterate. If the preconditioner is too weak for this system,
    // rebuild it stronger once, then fall back to the direct path.
    const double bnorm = bv.norm();
    int iters = 0;
    auto attempt = [&](double droptol, int fill) {
        Eigen::GMRES<Eigen::SparseMatrix<double>, Eigen::IncompleteLUT<double>> gmres;
        gmres.setTolerance(0.05 * opts.tol);
        gmres.set_restart(opts.restart);
        gmres.setMaxIterations(opts.max_iters);
        gmres.preconditioner().setDroptol(droptol);
        gmres.preconditioner().setFillfactor(fill);
        gmres.compute(M);
        if (gmres.info() != Eigen::Success) return false;
        Eigen::VectorXd xv = gmres.solve(bv);
        iters += static_cast<int>(gmres.iterations());
        for (int round = 0; round < 3; ++round) {
            const double true_res = (bv - M * xv).norm() / bnorm;
            if (std::isfinite(true_res) && true_res <= opts.tol) break;
            gmres.setTolerance(0.01 * opts.tol);
            xv = gmres.solveWithGuess(bv, xv);
            iters += static_cast<int>(gmres.iterations());
        }
        Eigen::VectorXd::Map(x.data(), x.size()) = xv;
        const double true_res = (bv - M * xv).norm() / bnorm;
        return std::isfinite(true_res) && true_res <= opts.tol;
    };
    bool ok = attempt(opts.ilut_droptol, opts.ilut_fill) ||
              attempt(0.1 * opts.ilut_droptol, 2 * opts.ilut_fill);
    if (!ok) {
        Eigen::SparseLU<Eigen::SparseMatrix<double>, Eigen::COLAMDOrdering<int>> lu(M);
        if (lu.info() == Eigen::Success) {
            Eigen::VectorXd xv = lu.solve(bv);
            Eigen::VectorXd r = bv - M * xv;
            xv += lu.solve(r).eval();
            Eigen::VectorXd::Map(x.data(), x.size()) = xv;
            ok = (bv - M * xv).norm() / bnorm <= opts.tol;
        }
    }
    finish(iters);
    if (!ok || !std::isfinite(rep.rel_residual) || rep.rel_residual > opts.tol)
        throw SolverError("GMRES did not reach the requested residual", x, rep);
    return {std::move(x), rep};
}

} // namespace surfns
