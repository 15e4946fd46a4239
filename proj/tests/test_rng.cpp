#include <doctest.h>

#include <cmath>
#include <vector>

#include "bioaug/rng.hpp"

using namespace bioaug;

TEST_CASE("rng: identical seeds replay the exact stream") {
    Rng a(42), b(42);
    for (int i = 0; i < 1000; ++i) CHECK(a.next_u64() == b.next_u64());
}

TEST_CASE("rng: derived seeds differ per stream index") {
    const uint64_t s = 7;
    CHECK(derive_seed(s, 0) != derive_seed(s, 1));
    CHECK(derive_seed(s, 0, 1) != derive_seed(s, 1, 0));
}

TEST_CASE("rng: next_below stays in range and covers values") {
    Rng r(3);
    std::vector<int> counts(5, 0);
    for (int i = 0; i < 50000; ++i) {
        const uint64_t v = r.next_below(5);
        REQUIRE(v < 5);
        counts[static_cast<size_t>(v)]++;
    }
    for (int c : counts) CHECK(std::abs(c - 10000) < 500);
}

TEST_CASE("rng: uniform doubles live in [0,1) with mean near one half") {
    Rng r(11);
    double sum = 0.0;
    for (int i = 0; i < 100000; ++i) {
        const double v = r.next_double();
        REQUIRE(v >= 0.0);
        REQUIRE(v < 1.0);
        sum += v;
    }
    CHECK(std::abs(sum / 100000.0 - 0.5) < 0.01);
}

TEST_CASE("rng: gauss moments") {
    Rng r(19);
    double sum = 0.0, sq = 0.0;
    const int n = 200000;
    for (int i = 0; i < n; ++i) {
        const double v = r.next_gauss();
        sum += v;
        sq += v * v;
    }
    const double mean = sum / n;
    const double var = sq / n - mean * mean;
    CHECK(std::abs(mean) < 0.01);
    CHECK(std::abs(std::sqrt(var) - 1.0) < 0.01);
}
