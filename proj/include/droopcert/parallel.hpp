#pragma once

#include <algorithm>
#include <cstddef>
#include <exception>
#include <thread>
#include <vector>

namespace droopcert {

/// Split [0, count) into `jobs` contiguous chunks and run fn(begin, end, chunk)
/// on each. Chunk boundaries depend only on (count, jobs); callers that merge
/// per-chunk results in chunk order get job-count independent output as long
/// as the merge is order-independent (max with index tie-break, sums of
/// per-item results stored by index, ...). The first exception is rethrown.
template <class Fn>
void parallel_chunks(std::size_t count, std::size_t jobs, Fn&& fn) {
    jobs = std::max<std::size_t>(1, std::min(jobs, std::max<std::size_t>(1, count)));
    const std::size_t base = count / jobs;
    const std::size_t extra = count % jobs;
    auto bounds = [&](std::size_t c) {
        const std::size_t b = c * base + std::min(c, extra);
        return std::pair{b, b + base + (c < extra ? 1 : 0)};
    };
    if (jobs == 1) {
        fn(std::size_t{0}, count, std::size_t{0});
        return;
    }
    std::vector<std::exception_ptr> errors(jobs);
    {
        std::vector<std::jthread> pool;
        pool.reserve(jobs);
        for (std::size_t c = 0; c < jobs; ++c) {
            pool.emplace_back([&, c] {
                try {
                    const auto [b, e] = bounds(c);
                    fn(b, e, c);
                } catch (...) {
                    errors[c] = std::current_exception();
                }
            });
        }
    }
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
}

}  // namespace droopcert
