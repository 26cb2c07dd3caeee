#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <limits>
#include <mutex>
#include <set>
#include <thread>

#include "snnwb/errors.hpp"
#include "snnwb/parallel.hpp"
#include "snnwb/rng.hpp"
#include "snnwb/tensor.hpp"
#include "test_util.hpp"

using namespace snnwb;

TEST_CASE("identical seed and call sequence give an identical stream") {
    Rng a(42), b(42);
    for (int i = 0; i < 1000; ++i) CHECK(a.next_u64() == b.next_u64());
    Rng c(42), d(42);
    for (int i = 0; i < 100; ++i) {
        CHECK(c.next_float() == d.next_float());
        CHECK(c.normal() == d.normal());
        CHECK(c.below(17) == d.below(17));
    }
}

TEST_CASE("stream values are pinned across builds") {
    // Frozen first outputs of the generator for seed 1; any change here breaks
    // reproducibility of stored runs.
    Rng r(1);
    CHECK(r.next_u64() == 0xb3f2af6d0fc710c5ULL);
}

TEST_CASE("different seeds diverge") {
    Rng a(1), b(2);
    int same = 0;
    for (int i = 0; i < 64; ++i)
        if (a.next_u64() == b.next_u64()) ++same;
    CHECK(same == 0);
}

TEST_CASE("uniform and bernoulli ranges") {
    Rng r(7);
    for (int i = 0; i < 1000; ++i) {
        const float u = r.next_float();
        CHECK(u >= 0.0f);
        CHECK(u < 1.0f);
        CHECK(r.below(10) < 10);
    }
}

TEST_CASE("derived seeds differ from their parents") {
    std::set<uint64_t> seen;
    for (uint64_t i = 0; i < 100; ++i) seen.insert(Rng::mix(12345, i));
    CHECK(seen.size() == 100);
}

TEST_CASE("tensor shape bookkeeping") {
    Tensor t({2, 3, 4});
    CHECK(t.size() == 24);
    CHECK(t.all_finite());
    CHECK_THROWS_AS(Tensor({2, 0}), ConfigError);
    CHECK_THROWS_AS(Tensor({2, 2}, {1.0f, 2.0f}), ConfigError);
    CHECK_THROWS_AS(t.reshaped({5, 5}), ConfigError);
    Tensor r = t.reshaped({24});
    CHECK(r.rank() == 1);
    t[0] = std::numeric_limits<float>::infinity();
    CHECK_FALSE(t.all_finite());
}

TEST_CASE("parallel_for covers every index exactly once") {
    for (int threads : {1, 2, 3}) {
        set_worker_threads(threads);
        std::vector<int> hits(1003, 0);
        parallel_for(hits.size(), [&](size_t b, size_t e) {
            for (size_t i = b; i < e; ++i) hits[i] += 1;
        });
        for (int h : hits) CHECK(h == 1);
    }
    set_worker_threads(1);
}

TEST_CASE("block partition is stable for a fixed worker count") {
    set_worker_threads(3);
    std::vector<std::pair<size_t, size_t>> first, second;
    std::mutex m;
    auto record = [&](std::vector<std::pair<size_t, size_t>>& dst) {
        parallel_for_chunks(100, [&](size_t, size_t b, size_t e) {
            std::lock_guard<std::mutex> lock(m);
            dst.push_back({b, e});
        });
        std::sort(dst.begin(), dst.end());
    };
    record(first);
    record(second);
    CHECK(first == second);
    CHECK(parallel_chunk_count(100) == first.size());
    set_worker_threads(1);
}
