#include <set>

#include "doctest.h"
#include "smcprog/rng.hpp"

using namespace smcprog;

TEST_SUITE("rng") {
    TEST_CASE("derived seeds are pure functions of their coordinates") {
        CHECK(derive_seed(7, StreamPurpose::Resample, 1, 2, 3) == derive_seed(7, StreamPurpose::Resample, 1, 2, 3));
        std::set<std::uint64_t> seen;
        for (auto p : {StreamPurpose::Init, StreamPurpose::Resample, StreamPurpose::Thompson, StreamPurpose::Accept,
                       StreamPurpose::Proposal, StreamPurpose::Migration})
            for (std::uint64_t island = 0; island < 3; ++island)
                for (std::uint64_t a = 0; a < 4; ++a)
                    for (std::uint64_t b = 0; b < 4; ++b) seen.insert(derive_seed(1, p, island, a, b));
        CHECK(seen.size() == 6u * 3 * 4 * 4);
        CHECK(derive_seed(1, StreamPurpose::Init, 0) != derive_seed(2, StreamPurpose::Init, 0));
    }

    TEST_CASE("splitmix64 reference value") {
        // First output of the reference generator seeded with 0.
        CHECK(splitmix64(0) == 0xe220a8397b1dcdafULL);
    }

    TEST_CASE("uniform and index ranges") {
        Rng rng(3);
        for (int i = 0; i < 10000; ++i) {
            const double u = rng.uniform();
            CHECK(u >= 0.0);
            CHECK(u < 1.0);
            CHECK(rng.index(7) < 7u);
        }
    }

    TEST_CASE("beta draws have the right mean") {
        Rng rng(11);
        double sum = 0.0;
        const int n = 20000;
        for (int i = 0; i < n; ++i) {
            const double x = rng.beta(2.0, 6.0);
            REQUIRE(x >= 0.0);
            REQUIRE(x <= 1.0);
            sum += x;
        }
        // mean 0.25, sd of the sample mean about 0.0011
        CHECK(sum / n == doctest::Approx(0.25).epsilon(0.02));
    }

    TEST_CASE("streams with equal seeds agree") {
        Rng a = make_stream(5, StreamPurpose::Accept, 0, 1, 2);
        Rng b = make_stream(5, StreamPurpose::Accept, 0, 1, 2);
        for (int i = 0; i < 100; ++i) CHECK(a() == b());
    }
}
