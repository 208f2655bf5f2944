#include <cmath>
#include <numeric>
#include <vector>

#include "doctest.h"
#include "smcprog/resample.hpp"

using namespace smcprog;

namespace {

WeightVector from_probs(std::vector<double> p) {
    WeightVector w;
    for (double x : p) w.log_weights.push_back(x > 0 ? std::log(x) : -INFINITY);
    w.normalized = std::move(p);
    return w;
}

std::vector<int> counts(const std::vector<std::size_t>& ancestors, std::size_t n) {
    std::vector<int> c(n, 0);
    for (auto a : ancestors) ++c[a];
    return c;
}

}  // namespace

TEST_SUITE("resample") {
    TEST_CASE("normalized weights match the reference") {
        // From compute_expected.py (mpmath, 30 digits).
        const std::vector<double> r = {0.0, 0.5, 1.0};
        const auto w = compute_weights(r, 2.0);
        CHECK(w.normalized[0] == doctest::Approx(0.0900305731703804579980221014844942).epsilon(1e-14));
        CHECK(w.normalized[1] == doctest::Approx(0.244728471054797652472959618340775).epsilon(1e-14));
        CHECK(w.normalized[2] == doctest::Approx(0.665240955774821889529018280174842).epsilon(1e-14));
        CHECK(w.log_weights[2] == 2.0);
    }

    TEST_CASE("zero increment gives uniform weights") {
        const std::vector<double> r = {-3.0, 0.5, 9.0, 2.0, 2.0};
        const auto w = compute_weights(r, 0.0);
        for (double x : w.normalized) CHECK(x == 0.2);
    }

    TEST_CASE("normalized weights are shift invariant") {
        const std::vector<double> a = {0.1, 0.9, 0.4, 0.4, 0.0};
        std::vector<double> b = a;
        for (auto& x : b) x += 123.0;
        const auto wa = compute_weights(a, 7.5);
        const auto wb = compute_weights(b, 7.5);
        for (std::size_t i = 0; i < a.size(); ++i)
            CHECK(wa.normalized[i] == doctest::Approx(wb.normalized[i]).epsilon(1e-13));
        CHECK(std::accumulate(wa.normalized.begin(), wa.normalized.end(), 0.0) == doctest::Approx(1.0));
    }

    TEST_CASE("huge increments do not overflow") {
        const std::vector<double> r = {0.0, 1.0, 1000.0};
        const auto w = compute_weights(r, 1000.0);
        CHECK(w.normalized[2] == 1.0);
        CHECK(w.normalized[0] == 0.0);
    }

    TEST_CASE("systematic resampling reference cases") {
        // Points u + i/N pick the first index whose cumulative weight exceeds them.
        CHECK(systematic_resample_with_offset(from_probs({0.1, 0.2, 0.3, 0.4}), 0.2) ==
              std::vector<std::size_t>{1, 2, 3, 3});
        CHECK(systematic_resample_with_offset(from_probs({0.5, 0.0, 0.0, 0.5}), 0.249) ==
              std::vector<std::size_t>{0, 0, 3, 3});
        CHECK(systematic_resample_with_offset(from_probs({0.25, 0.25, 0.25, 0.25}), 0.0) ==
              std::vector<std::size_t>{0, 1, 2, 3});
    }

    TEST_CASE("each multiplicity is the floor or ceiling of N W") {
        Rng rng(9);
        for (int trial = 0; trial < 300; ++trial) {
            const std::size_t n = 1 + rng.index(40);
            std::vector<double> r(n);
            for (auto& x : r) x = rng.uniform();
            const auto w = compute_weights(r, 10.0 * rng.uniform());
            const auto anc = systematic_resample(w, rng);
            REQUIRE(anc.size() == n);
            CHECK(std::is_sorted(anc.begin(), anc.end()));
            const auto c = counts(anc, n);
            for (std::size_t i = 0; i < n; ++i) {
                const double expect = static_cast<double>(n) * w.normalized[i];
                CHECK(c[i] >= std::floor(expect - 1e-9));
                CHECK(c[i] <= std::ceil(expect + 1e-9));
            }
        }
    }

    TEST_CASE("zero-weight particles are never selected") {
        Rng rng(4);
        const auto w = from_probs({0.0, 0.7, 0.0, 0.3});
        for (int i = 0; i < 1000; ++i)
            for (auto a : systematic_resample(w, rng)) CHECK((a == 1 || a == 3));
    }
}
