#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <thread>
#include <vector>

namespace csrag {

/// Calls f(i) for i in [0, n) on up to `workers` threads (the caller is one).
/// f must not throw.
template <typename F>
void parallel_for(std::size_t n, std::size_t workers, F&& f) {
    std::atomic<std::size_t> next{0};
    auto work = [&] {
        for (std::size_t i = next++; i < n; i = next++) f(i);
    };
    std::vector<std::jthread> pool;
    for (std::size_t w = 1; w < std::min(workers, n); ++w) pool.emplace_back(work);
    work();
}

}  // namespace csrag
