#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "mdpkit/mdp.hpp"
#include "test_util.hpp"

using namespace mdpkit;

namespace {

Mdp<double> two_state_cycle() {
    Mdp<double> m;
    m.trans = {{{0.0, 1.0}}, {{1.0, 0.0}}};
    m.reward = {{0.0}, {1.0}};
    return m;
}

}  // namespace

TEST_CASE("validate: well-formed and broken models") {
    Mdp<double> m = two_state_cycle();
    CHECK(validate(m).ok());

    Mdp<double> bad = m;
    bad.trans[0][0] = {0.4, 0.5};
    const auto rep = validate(bad);
    REQUIRE(rep.violations.size() == 1);
    CHECK(rep.violations[0].find("s0") != std::string::npos);
    CHECK(rep.violations[0].find("sums to") != std::string::npos);

    Mdp<double> empty = m;
    empty.trans[1].clear();
    empty.reward[1].clear();
    CHECK(!validate(empty).ok());
}

TEST_CASE("induce_chain basics") {
    Mdp<double> m;
    m.trans = {{{1.0, 0.0}, {0.0, 1.0}}, {{0.0, 1.0}}};
    m.reward = {{1.0, 2.0}, {0.0}};

    SUBCASE("deterministic policy copies the chosen rows") {
        const auto pi = StationaryPolicy<double>::deterministic({1, 0}, {2, 1});
        const auto c = induce_chain(m, pi);
        CHECK(c.trans[0] == std::vector<double>{0.0, 1.0});
        CHECK(c.reward[0] == 2.0);
    }
    SUBCASE("uniform policy mixes rows (1,0) and (0,1) into (0.5,0.5)") {
        const auto pi = StationaryPolicy<double>::uniform(m);
        const auto c = induce_chain(m, pi);
        CHECK(c.trans[0][0] == doctest::Approx(0.5));
        CHECK(c.trans[0][1] == doctest::Approx(0.5));
        CHECK(c.reward[0] == doctest::Approx(1.5));
    }
    SUBCASE("policy with an unavailable action is rejected") {
        StationaryPolicy<double> pi;
        pi.weights = {{0.5, 0.5}, {0.5, 0.5}};
        CHECK_THROWS(induce_chain(m, pi));
    }
}

TEST_CASE("induce_chain matches independent re-summation on random models") {
    Philox rng(101, 0);
    for (int trial = 0; trial < 50; ++trial) {
        const auto m = testutil::random_mdp(4, 3, rng);
        const auto pi = testutil::random_policy(m, rng);
        const auto c = induce_chain(m, pi);
        for (int i = 0; i < 4; ++i) {
            double row_sum = 0;
            for (int j = 0; j < 4; ++j) {
                double expect = 0;
                for (int a = 0; a < 3; ++a) expect += pi.weights[i][a] * m.trans[i][a][j];
                CHECK(c.trans[i][j] == doctest::Approx(expect).epsilon(1e-12));
                row_sum += c.trans[i][j];
            }
            CHECK(row_sum == doctest::Approx(1.0).epsilon(1e-9));
        }
    }
}

TEST_CASE("support_graph") {
    Mdp<double> m;
    m.trans = {{{0, 1, 0}}, {{0, 0, 1}}, {{1, 0, 0}}};
    m.reward = {{0}, {0}, {0}};
    const auto pi = StationaryPolicy<double>::uniform(m);
    const auto g = support_graph(m, pi);
    CHECK(g.adj[0] == std::vector<int>{1});
    CHECK(g.adj[1] == std::vector<int>{2});
    CHECK(g.adj[2] == std::vector<int>{0});

    SUBCASE("zero-weight actions contribute no edges") {
        Mdp<double> m2;
        m2.trans = {{{1.0, 0.0}, {0.0, 1.0}}, {{0.0, 1.0}}};
        m2.reward = {{0.0, 0.0}, {0.0}};
        const auto det = StationaryPolicy<double>::deterministic({0, 0}, {2, 1});
        const auto g2 = support_graph(m2, det);
        CHECK(!g2.has_edge(0, 1));
        CHECK(g2.has_edge(0, 0));
    }

    SUBCASE("edges equal the nonzero entries of the induced chain") {
        Philox rng(77, 0);
        for (int trial = 0; trial < 50; ++trial) {
            const auto rm = testutil::random_mdp(4, 2, rng);
            const auto rpi = testutil::random_policy(rm, rng);
            const auto rg = support_graph(rm, rpi);
            const auto rc = induce_chain(rm, rpi);
            for (int i = 0; i < 4; ++i)
                for (int j = 0; j < 4; ++j) CHECK(rg.has_edge(i, j) == (rc.trans[i][j] > 0));
        }
    }
}

TEST_CASE("is_unichain_from") {
    SUBCASE("two-state cycle is unichain from both states") {
        const auto m = two_state_cycle();
        const auto g = support_graph(m, StationaryPolicy<double>::uniform(m));
        CHECK(is_unichain_from(g, 0));
        CHECK(is_unichain_from(g, 1));
    }
    SUBCASE("branching start into two disjoint self-loops is not") {
        SupportGraph g;
        g.adj = {{1, 2}, {1}, {2}};
        CHECK(!is_unichain_from(g, 0));
        CHECK(is_unichain_from(g, 1));
    }
    SUBCASE("unknown state id") {
        SupportGraph g;
        g.adj = {{0}};
        CHECK_THROWS(is_unichain_from(g, 3));
    }
    SUBCASE("agrees with the reachability-based enumeration on random graphs") {
        Philox rng(55, 0);
        for (int trial = 0; trial < 300; ++trial) {
            const auto m = testutil::random_mdp(5, 2, rng);
            const auto pi = testutil::random_policy(m, rng);
            const auto g = support_graph(m, pi);
            const int start = static_cast<int>(rng.below(5));
            CHECK(is_unichain_from(g, start) ==
                  (testutil::bruteforce_closed_class_count(g, start) == 1));
        }
    }
}

TEST_CASE("is_communicating") {
    SUBCASE("single state with a self-loop") {
        Mdp<double> m;
        m.trans = {{{1.0}}};
        m.reward = {{0.0}};
        CHECK(is_communicating(m));
    }
    SUBCASE("a state unreachable under every action") {
        Mdp<double> m;
        m.trans = {{{1.0, 0.0}, {1.0, 0.0}}, {{1.0, 0.0}, {0.0, 1.0}}};
        m.reward = {{0, 0}, {0, 0}};
        CHECK(!is_communicating(m));
    }
    SUBCASE("agrees with exhaustive deterministic-policy reachability") {
        Philox rng(91, 0);
        for (int trial = 0; trial < 120; ++trial) {
            const int n = 3 + static_cast<int>(rng.below(2));  // 3..4 states
            const int na = 2 + static_cast<int>(rng.below(2));  // 2..3 actions
            const auto m = testutil::random_mdp(n, na, rng);

            // oracle: union over all deterministic policies of pairwise
            // reachability
            std::vector<std::vector<bool>> pair_ok(n, std::vector<bool>(n, false));
            std::vector<int> choice(n, 0), acts(n, na);
            while (true) {
                const auto pi = StationaryPolicy<double>::deterministic(choice, acts);
                const auto g = support_graph(m, pi);
                for (int i = 0; i < n; ++i) {
                    const auto reach = reachable_from(g, i);
                    for (int j = 0; j < n; ++j)
                        if (reach[j]) pair_ok[i][j] = true;
                }
                int k = 0;
                for (; k < n; ++k) {
                    if (++choice[k] < na) break;
                    choice[k] = 0;
                }
                if (k == n) break;
            }
            bool oracle = true;
            for (int i = 0; i < n; ++i)
                for (int j = 0; j < n; ++j) oracle &= pair_ok[i][j];
            CHECK(is_communicating(m) == oracle);
        }
    }
}

TEST_CASE("sample_step") {
    SUBCASE("deterministic policy and transition give one outcome") {
        auto m = two_state_cycle();
        const auto pi = StationaryPolicy<double>::deterministic({0, 0}, {1, 1});
        for (std::uint64_t seed = 0; seed < 5; ++seed) {
            Philox rng(seed, 0);
            const auto s = sample_step(m, pi, 0, rng);
            CHECK(s.action == 0);
            CHECK(s.next == 1);
            CHECK(s.reward == 0.0);
        }
    }
    SUBCASE("fixed seed reproduces the outcome") {
        Philox rng1(3, 9), rng2(3, 9);
        Mdp<double> m;
        m.trans = {{{0.3, 0.7}, {0.5, 0.5}}, {{1.0, 0.0}}};
        m.reward = {{1, 2}, {0}};
        const auto pi = StationaryPolicy<double>::uniform(m);
        for (int k = 0; k < 100; ++k) {
            const auto a = sample_step(m, pi, 0, rng1);
            const auto b = sample_step(m, pi, 0, rng2);
            CHECK(a.action == b.action);
            CHECK(a.next == b.next);
        }
    }
    SUBCASE("empirical frequencies of a (0.3, 0.7) row") {
        Mdp<double> m;
        m.trans = {{{0.3, 0.7}}, {{0.3, 0.7}}};
        m.reward = {{0}, {0}};
        const auto pi = StationaryPolicy<double>::uniform(m);
        Philox rng(2024, 1);
        int hits = 0;
        const int samples = 100000;
        for (int k = 0; k < samples; ++k)
            if (sample_step(m, pi, 0, rng).next == 0) ++hits;
        CHECK(std::fabs(hits / static_cast<double>(samples) - 0.3) < 0.01);
    }
}

TEST_CASE("trajectories chain consecutively and record their seed") {
    Philox rng(17, 4);
    const auto m = testutil::random_mdp(4, 2, rng);
    const auto pi = testutil::random_policy(m, rng);
    const auto traj = simulate(m, pi, 2, 500, rng);
    CHECK(traj.start == 2);
    CHECK(traj.seed == 17);
    CHECK(traj.steps[0].state == 2);
    for (std::size_t k = 1; k < traj.steps.size(); ++k)
        CHECK(traj.steps[k].state == traj.steps[k - 1].next);
    for (const auto& s : traj.steps) CHECK(s.reward == m.reward[s.state][s.action]);
}
