#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include <Eigen/Dense>

namespace surfns {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using index_t = std::int64_t;

/// Level set gradient too small to define a frame (|grad phi| < 0.5).
class DegenerateGradientError : public std::runtime_error {
public:
    explicit DegenerateGradientError(const std::string& what) : std::runtime_error(what) {}
};

/// A cut element of the new band is not covered by the previous band,
/// so history fields cannot be evaluated there.
class BandInclusionError : public std::runtime_error {
public:
    BandInclusionError(const std::string& what, std::vector<index_t> violators_)
        : std::runtime_error(what), violators(std::move(violators_)) {}
    std::vector<index_t> violators;
};

/// Runs fn(i) for i in [begin,end). Work is split into contiguous chunks,
/// one per thread; fn must write only to slot i so the result is identical
/// for any thread count.
template <class F>
void parallel_for(index_t begin, index_t end, F&& fn, int n_threads = 1) {
    const index_t n = end - begin;
    if (n <= 0) return;
    if (n_threads <= 1 || n == 1) {
        for (index_t i = begin; i < end; ++i) fn(i);
        return;
    }
    const int workers = static_cast<int>(std::min<index_t>(n_threads, n));
    std::vector<std::thread> pool;
    pool.reserve(workers);
    const index_t chunk = (n + workers - 1) / workers;
    for (int w = 0; w < workers; ++w) {
        const index_t lo = begin + w * chunk;
        const index_t hi = std::min(end, lo + chunk);
        if (lo >= hi) break;
        pool.emplace_back([lo, hi, &fn]() {
            for (index_t i = lo; i < hi; ++i) fn(i);
        });
    }
    for (auto& th : pool) th.join();
}

/// 4th-order central difference of a scalar- or vector-valued function of one
/// coordinate, f evaluated at x +/- s, x +/- 2s.
template <class T>
T central_diff4(const T& fp2, const T& fp1, const T& fm1, const T& fm2, double step) {
    return (8.0 * (fp1 - fm1) - (fp2 - fm2)) / (12.0 * step);
}

} // namespace surfns
