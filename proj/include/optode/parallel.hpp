#pragma once

#include <algorithm>
#include <cstddef>
#include <exception>
#include <thread>
#include <vector>

namespace optode {

/// Threads used for batch work: OPT_ODENET_THREADS if set, else hardware concurrency.
std::size_t batch_threads();

/// Runs fn(i) for i in [0, count) on up to batch_threads() threads. Each
/// index writes its own slot; the first exception (by worker) is rethrown.
template <class Fn>
void parallel_for(std::size_t count, Fn fn) {
    const std::size_t workers = std::min(batch_threads(), count);
    if (workers <= 1) {
        for (std::size_t i = 0; i < count; ++i) fn(i);
        return;
    }
    std::vector<std::exception_ptr> errors(workers);
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w)
        pool.emplace_back([&, w] {
            try {
                for (std::size_t i = w; i < count; i += workers) fn(i);
            } catch (...) {
                errors[w] = std::current_exception();
            }
        });
    for (auto& th : pool) th.join();
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
}

}  // namespace optode
