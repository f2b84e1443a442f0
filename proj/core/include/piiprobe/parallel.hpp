#pragma once

#include <cstddef>
#include <functional>
#include <thread>
#include <vector>

namespace piiprobe {

// Runs fn(i) for i in [0, n) across `workers` threads. Results land in a
// pre-sized vector indexed by i, so the output is identical for any worker
// count; reductions over it must happen after the join, in index order.
template <typename T>
std::vector<T> parallel_map(std::size_t n, int workers, const std::function<T(std::size_t)>& fn) {
    std::vector<T> out(n);
    if (workers <= 1 || n <= 1) {
        for (std::size_t i = 0; i < n; ++i) out[i] = fn(i);
        return out;
    }
    std::size_t nthreads = std::min<std::size_t>(static_cast<std::size_t>(workers), n);
    std::vector<std::thread> pool;
    pool.reserve(nthreads);
    for (std::size_t t = 0; t < nthreads; ++t) {
        pool.emplace_back([&, t]() {
            for (std::size_t i = t; i < n; i += nthreads) out[i] = fn(i);
        });
    }
    for (auto& th : pool) th.join();
    return out;
}

} // namespace piiprobe
