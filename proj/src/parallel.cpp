#include "snnwb/parallel.hpp"

#include <atomic>
#include <thread>
#include <vector>

namespace snnwb {

namespace {
std::atomic<int> g_threads{1};
}

void set_worker_threads(int n) {
    if (n < 1) n = 1;
    g_threads.store(n);
}

int worker_threads() { return g_threads.load(); }

size_t parallel_chunk_count(size_t n) {
    const int threads = g_threads.load();
    if (n == 0) return 0;
    if (threads <= 1 || n == 1) return 1;
    const size_t workers = std::min<size_t>(static_cast<size_t>(threads), n);
    const size_t chunk = (n + workers - 1) / workers;
    return (n + chunk - 1) / chunk;
}

void parallel_for_chunks(size_t n, const std::function<void(size_t, size_t, size_t)>& fn) {
    if (n == 0) return;
    const size_t chunks = parallel_chunk_count(n);
    if (chunks == 1) {
        fn(0, 0, n);
        return;
    }
    const size_t chunk = (n + chunks - 1) / chunks;
    std::vector<std::thread> pool;
    pool.reserve(chunks);
    for (size_t w = 0; w < chunks; ++w) {
        const size_t begin = w * chunk;
        const size_t end = std::min(n, begin + chunk);
        if (begin >= end) break;
        pool.emplace_back([&fn, w, begin, end] { fn(w, begin, end); });
    }
    for (auto& t : pool) t.join();
}

void parallel_for(size_t n, const std::function<void(size_t, size_t)>& fn) {
    parallel_for_chunks(n, [&fn](size_t, size_t begin, size_t end) { fn(begin, end); });
}

}  // namespace snnwb
