#pragma once

#include <atomic>
#include <cstddef>
#include <exception>
#include <functional>
#include <thread>
#include <vector>

namespace loh {

// Runs fn(chunk_index, begin, end) over fixed-size chunks of [0, n).
// Chunk boundaries depend only on n and chunk_size, never on the thread
// count, so callers that keep per-chunk partial results and combine them
// in chunk order get identical output for any number of workers.
inline void parallel_chunks(std::size_t n, std::size_t chunk_size, int threads,
                            const std::function<void(std::size_t, std::size_t,
                                                     std::size_t)>& fn) {
    if (n == 0) return;
    if (chunk_size == 0) chunk_size = 1;
    const std::size_t num_chunks = (n + chunk_size - 1) / chunk_size;

    auto run_chunk = [&](std::size_t c) {
        const std::size_t begin = c * chunk_size;
        const std::size_t end = std::min(begin + chunk_size, n);
        fn(c, begin, end);
    };

    if (threads <= 1 || num_chunks <= 1) {
        for (std::size_t c = 0; c < num_chunks; ++c) run_chunk(c);
        return;
    }

    std::atomic<std::size_t> next{0};
    std::exception_ptr first_error;
    std::atomic<bool> failed{false};

    auto worker = [&] {
        for (;;) {
            const std::size_t c = next.fetch_add(1);
            if (c >= num_chunks || failed.load()) return;
            try {
                run_chunk(c);
            } catch (...) {
                if (!failed.exchange(true)) first_error = std::current_exception();
                return;
            }
        }
    };

    std::vector<std::thread> pool;
    const std::size_t num_workers =
        std::min<std::size_t>(static_cast<std::size_t>(threads), num_chunks);
    pool.reserve(num_workers);
    for (std::size_t t = 0; t < num_workers; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();

    if (failed.load() && first_error) std::rethrow_exception(first_error);
}

inline std::size_t num_chunks_for(std::size_t n, std::size_t chunk_size) {
    if (n == 0) return 0;
    if (chunk_size == 0) chunk_size = 1;
    return (n + chunk_size - 1) / chunk_size;
}

}  // namespace loh
