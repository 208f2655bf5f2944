#include "doctest.h"
#include "smcprog/core.hpp"
#include "smcprog/error.hpp"

using namespace smcprog;

TEST_SUITE("core") {
    TEST_CASE("fnv1a64 matches the reference values") {
        // Frozen from tests/oracles/compute_expected.py.
        CHECK(fnv1a64("") == 0xcbf29ce484222325ULL);
        CHECK(fnv1a64("hello") == 0xa430d84680aabd0bULL);
        CHECK(digest_hex(0xa430d84680aabd0bULL) == "a430d84680aabd0b");
        CHECK(digest_hex(0x1ULL) == "0000000000000001");
    }

    TEST_CASE("programs are identified by content") {
        const Program a("print(1)", "python");
        const Program b("print(1)", "python");
        const Program c("print(2)", "python");
        CHECK(a == b);
        CHECK_FALSE(a == c);
        CHECK(a.digest() == fnv1a64("print(1)"));
        CHECK(a.digest_hex().size() == 16);
    }

    TEST_CASE("empty source is rejected") {
        try {
            (void)Program("", "python");
            FAIL("expected EmptySource");
        } catch (const Error& e) {
            CHECK(e.code() == ErrorCode::EmptySource);
        }
    }

    TEST_CASE("kernel names round-trip and twins drop inspiration") {
        for (KernelId id : kAllKernels) {
            const auto parsed = parse_kernel_name(kernel_name(id));
            REQUIRE(parsed.has_value());
            CHECK(*parsed == id);
            CHECK_FALSE(uses_inspiration(no_inspo_twin(id)));
            CHECK(is_diff(no_inspo_twin(id)) == is_diff(id));
        }
        CHECK(kernel_name(KernelId::DiffWithInspo) == "diff_with_inspo");
        CHECK(no_inspo_twin(KernelId::RewriteWithInspo) == KernelId::RewriteNoInspo);
        CHECK_FALSE(parse_kernel_name("diff").has_value());
    }

    TEST_CASE("reward bounds") {
        const double r[] = {0.25, -1.0, 3.0};
        const auto b = RewardBounds::of(r);
        CHECK(b.r_minus == -1.0);
        CHECK(b.r_plus == 3.0);
        CHECK(b.delta_r == 4.0);
    }

    TEST_CASE("effective beta is lambda times beta") {
        AnnealState s;
        s.lambda = 0.25;
        s.beta_target = 20.0;
        CHECK(effective_beta(s) == 5.0);
    }

    TEST_CASE("config validation names the violated bound") {
        const auto rejects = [](RunConfig c) {
            try {
                c.validate();
            } catch (const Error& e) {
                return e.code() == ErrorCode::InvalidConfig;
            }
            return false;
        };
        CHECK_NOTHROW(RunConfig{}.validate());
        RunConfig c;
        c.kappa = 0.0;
        CHECK(rejects(c));
        c = {};
        c.kappa = 1.5;
        CHECK(rejects(c));
        c = {};
        c.particles_per_island = 0;
        CHECK(rejects(c));
        c = {};
        c.beta = -1.0;
        CHECK(rejects(c));
        c = {};
        c.min_iterations = 0;
        CHECK(rejects(c));
        c = {};
        c.max_iterations = 2;  // below min_iterations
        CHECK(rejects(c));
        c = {};
        c.n_proposals = 0;
        CHECK(rejects(c));
    }
}
