// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cstddef>
#include <functional>
#include <thread>
#include <vector>

namespace dfd {

inline int hardware_threads() {
    const unsigned n = std::thread::hardware_concurrency();
    return n == 0 ? 1 : static_cast<int>(n);
}

/// Run fn(begin, end) over [0, n) split into contiguous chunks, one per
/// worker. Chunk boundaries depend only on (n, threads), so any reduction
/// that combines per-chunk results in chunk order is deterministic.
inline void parallel_chunks(size_t n, int threads,
                            const std::function<void(size_t, size_t, int)>& fn) {
    if (n == 0) return;
    threads = std::max(1, threads);
    threads = static_cast<int>(std::min<size_t>(static_cast<size_t>(threads), n));
    if (threads == 1) {
        fn(0, n, 0);
        return;
    }
    const size_t chunk = (n + threads - 1) / threads;
    std::vector<std::thread> pool;
    pool.reserve(threads);
    for (int t = 0; t < threads; ++t) {
        const size_t begin = static_cast<size_t>(t) * chunk;
        if (begin >= n) break;
        const size_t end = std::min(n, begin + chunk);
        pool.emplace_back(fn, begin, end, t);
    }
    for (auto& th : pool) th.join();
}

/// Element-wise parallel loop; fn(i) must only touch state owned by index i.
inline void parallel_for(size_t n, int threads, const std::function<void(size_t)>& fn) {
    parallel_chunks(n, threads, [&](size_t b, size_t e, int) {
        for (size_t i = b; i < e; ++i) fn(i);
    });
}

}  // namespace dfd
