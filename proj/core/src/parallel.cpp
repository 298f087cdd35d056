#include "quantschemes/parallel.hpp"

#include <atomic>

namespace qs {

namespace {
std::atomic<std::size_t> g_workers{0};
}

std::size_t default_workers() {
    const std::size_t w = g_workers.load();
    if (w) return w;
    return std::max<std::size_t>(1, std::thread::hardware_concurrency());
}

void set_default_workers(std::size_t workers) { g_workers.store(workers); }

} // namespace qs
