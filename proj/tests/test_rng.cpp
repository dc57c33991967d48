#include "qh/rng.hpp"

#include <doctest.h>

#include <cmath>
#include <vector>

using namespace qh;

TEST_SUITE_BEGIN("rng");

TEST_CASE("same key reproduces the stream bit for bit") {
    Rng a({42, 1, 2, 3});
    Rng b({42, 1, 2, 3});
    for (int i = 0; i < 1000; ++i) {
        CHECK(a.next_u64() == b.next_u64());
    }
    Rng c({42, 1, 2, 3});
    Rng d({42, 1, 2, 3});
    for (int i = 0; i < 100; ++i) CHECK(c.next_normal() == d.next_normal());
}

TEST_CASE("different key components change the stream") {
    Rng a({42, 1, 2, 3});
    Rng b({42, 1, 2, 4});
    Rng c({43, 1, 2, 3});
    int same_ab = 0, same_ac = 0;
    for (int i = 0; i < 64; ++i) {
        const auto va = a.next_u64();
        if (va == b.next_u64()) ++same_ab;
        if (va == c.next_u64()) ++same_ac;
    }
    CHECK(same_ab == 0);
    CHECK(same_ac == 0);
}

TEST_CASE("normal draws have the right first two moments") {
    Rng rng({7, 7, 7});
    const long n = 1 << 20;
    double sum = 0.0, sum2 = 0.0;
    for (long i = 0; i < n; ++i) {
        const double z = rng.next_normal();
        sum += z;
        sum2 += z * z;
    }
    const double mean = sum / n;
    const double var = sum2 / n - mean * mean;
    CHECK(std::abs(mean) < 4.0 / std::sqrt(static_cast<double>(n)));
    // var(z^2) = 2 for a standard normal
    CHECK(std::abs(var - 1.0) < 4.0 * std::sqrt(2.0 / static_cast<double>(n)));
}

TEST_CASE("uniforms stay in (0, 1]") {
    Rng rng({9});
    for (int i = 0; i < 100000; ++i) {
        const double u = rng.next_uniform();
        CHECK(u > 0.0);
        CHECK(u <= 1.0);
    }
}

TEST_CASE("derive_seed separates stages") {
    CHECK(derive_seed(1, 0) != derive_seed(1, 1));
    CHECK(derive_seed(1, 0) != derive_seed(2, 0));
    CHECK(derive_seed(5, 3) == derive_seed(5, 3));
}

TEST_SUITE_END();
