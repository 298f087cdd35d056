#pragma once

#include <algorithm>
#include <cstddef>
#include <exception>
#include <functional>
#include <thread>
#include <vector>

namespace qs {

/// Worker count used by the parallel loops. 0 means hardware concurrency.
std::size_t default_workers();
void set_default_workers(std::size_t workers);

/// Runs `work(chunk)` for every chunk in [0, num_chunks), at most `workers` at a time.
/// Chunks are processed in waves of `workers`; after each wave `merge(chunk)` is called on the
/// calling thread in increasing chunk order. Results depend only on the chunking, never on the
/// worker count, as long as `merge` is the only place where chunk results are combined.
template <class Work, class Merge>
void for_each_chunk_ordered(std::size_t num_chunks, std::size_t workers, Work&& work, Merge&& merge) {
    workers = std::max<std::size_t>(1, std::min(workers ? workers : default_workers(), num_chunks));
    for (std::size_t first = 0; first < num_chunks; first += workers) {
        const std::size_t last = std::min(num_chunks, first + workers);
        if (last - first == 1) {
            work(first);
        } else {
            std::vector<std::exception_ptr> failures(last - first);
            std::vector<std::thread> threads;
            threads.reserve(last - first);
            for (std::size_t c = first; c < last; ++c) {
                threads.emplace_back([&, c] {
                    try {
                        work(c);
                    } catch (...) {
                        failures[c - first] = std::current_exception();
                    }
                });
            }
            for (auto& t : threads) t.join();
            for (auto& f : failures)
                if (f) std::rethrow_exception(f);
        }
        for (std::size_t c = first; c < last; ++c) merge(c);
    }
}

} // namespace qs
