#include <catch2/catch_amalgamated.hpp>

#include <random>

#include "surfns/solver.hpp"

using namespace surfns;

TEST_CASE("triplet buffer compresses to canonical CSR") {
    TripletBuffer tb;
    tb.add(1, 2, 1.0);
    tb.add(0, 0, 2.0);
    tb.add(1, 2, 0.5); // duplicate accumulates
    tb.add(1, 0, -1.0);
    tb.add(0, 1, 3.0);
    const auto A = tb.to_csr(2, 3);
    REQUIRE(A.rowptr == std::vector<std::int64_t>{0, 2, 4});
    REQUIRE(A.col == std::vector<int>{0, 1, 0, 2});
    REQUIRE(A.val == std::vector<double>{2.0, 3.0, -1.0, 1.5});
    // strictly increasing columns within each row
    for (int r = 0; r < A.nrows; ++r)
        for (auto k = A.rowptr[r] + 1; k < A.rowptr[r + 1]; ++k)
            REQUIRE(A.col[k] > A.col[k - 1]);
}

TEST_CASE("identity and hand-eliminated systems") {
    TripletBuffer tb;
    for (int i = 0; i < 4; ++i) tb.add(i, i, 1.0);
    const auto I = tb.to_csr(4, 4);
    const std::vector<double> b = {1.0, -2.0, 0.5, 3.0};
    const auto [x, rep] = solve(I, b);
    for (int i = 0; i < 4; ++i) REQUIRE(x[i] == Catch::Approx(b[i]).margin(1e-14));
    REQUIRE(rep.iterations == 0);
    REQUIRE(rep.rel_residual < 1e-12);

    TripletBuffer t2;
    t2.add(0, 0, 2.0);
    t2.add(0, 1, 1.0);
    t2.add(1, 0, 1.0);
    t2.add(1, 1, 2.0);
    const auto [y, rep2] = solve(t2.to_csr(2, 2), {3.0, 3.0});
    REQUIRE(y[0] == Catch::Approx(1.0));
    REQUIRE(y[1] == Catch::Approx(1.0));
}

TEST_CASE("indefinite saddle systems are handled by both paths") {
    // [[A, B^T], [B, 0]] with A = diag(2, 3), B = (1 1)
    TripletBuffer tb;
    tb.add(0, 0, 2.0);
    tb.add(1, 1, 3.0);
    tb.add(2, 0, 1.0);
    tb.add(2, 1, 1.0);
    tb.add(0, 2, 1.0);
    tb.add(1, 2, 1.0);
    const auto A = tb.to_csr(3, 3);
    const std::vector<double> b = {1.0, 2.0, 0.0};
    const auto [xd, repd] = solve(A, b);
    REQUIRE(repd.rel_residual < 1e-9);

    SolveOptions opts;
    opts.method = SolverMethod::Gmres;
    const auto [xg, repg] = solve(A, b, opts);
    for (int i = 0; i < 3; ++i) REQUIRE(xg[i] == Catch::Approx(xd[i]).margin(1e-7));
    REQUIRE(repg.rel_residual <= 1e-8);
}

TEST_CASE("random sparse systems meet the residual contract") {
    std::mt19937_64 rng(42);
    std::uniform_real_distribution<double> uni(-1.0, 1.0);
    const int n = 200;
    TripletBuffer tb;
    for (int i = 0; i < n; ++i) {
        tb.add(i, i, 4.0 + uni(rng));
        for (int k = 0; k < 4; ++k) tb.add(i, std::uniform_int_distribution<int>(0, n - 1)(rng),
                                           0.5 * uni(rng));
    }
    const auto A = tb.to_csr(n, n);
    std::vector<double> b(n);
    for (auto& v : b) v = uni(rng);
    const auto [x, rep] = solve(A, b);
    REQUIRE(rep.rel_residual <= 1e-9);
    // report matches a recomputation within 10%
    const auto Ax = A.multiply(x);
    double rr = 0, bb = 0;
    for (int i = 0; i < n; ++i) {
        rr += (b[i] - Ax[i]) * (b[i] - Ax[i]);
        bb += b[i] * b[i];
    }
    REQUIRE(std::sqrt(rr / bb) <= rep.rel_residual * 1.1 + 1e-16);
}

TEST_CASE("singular matrix raises a solver error") {
    TripletBuffer tb;
    tb.add(0, 0, 1.0);
    tb.add(1, 0, 1.0); // rank deficient, second column empty
    tb.add(0, 1, 0.0);
    tb.add(1, 1, 0.0);
    REQUIRE_THROWS_AS(solve(tb.to_csr(2, 2), {1.0, 2.0}), SolverError);
}
