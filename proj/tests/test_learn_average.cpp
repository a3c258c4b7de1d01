#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "mdpkit/learn_average.hpp"
#include "mdpkit/metrics.hpp"
#include "mdpkit/robustness.hpp"
#include "test_util.hpp"

using namespace mdpkit;

namespace {

/// 3-state, 2-action communicating environment with probability floor
/// 1/2 and deterministic rewards.
Mdp<double> half_floor_env() {
    Mdp<double> m;
    m.trans = {{{0.5, 0.5, 0.0}, {0.0, 0.5, 0.5}},
               {{0.5, 0.0, 0.5}, {0.0, 1.0, 0.0}},
               {{1.0, 0.0, 0.0}, {0.5, 0.0, 0.5}}};
    m.reward = {{0.25, 0.5}, {1.0, 0.125}, {0.75, 0.375}};
    m.p_min = 0.5;
    m.reward_bound = 1.0;
    return m;
}

}  // namespace

TEST_CASE("exploration_policy") {
    const auto single = exploration_policy({1, 1});
    CHECK(single.is_deterministic());
    const auto four = exploration_policy({4});
    for (double w : four.weights[0]) CHECK(w == doctest::Approx(0.25));
    const auto mixed = exploration_policy({2, 3, 5});
    for (const auto& row : mixed.weights) {
        double sum = 0;
        for (double w : row) sum += w;
        CHECK(sum == doctest::Approx(1.0));
    }
    CHECK_THROWS(exploration_policy({2, 0}));
}

TEST_CASE("estimate_model") {
    SUBCASE("empty trajectory has zero counts everywhere") {
        Trajectory t;
        const auto em = estimate_model(t, {2, 2});
        CHECK(!em.all_pairs_seen());
        CHECK(em.visits[0][0] == 0);
        CHECK_THROWS(em.p_hat(0, 0, 1));
    }
    SUBCASE("counting: 7 of 10 visits transition to state 1") {
        Trajectory t;
        for (int k = 0; k < 10; ++k) t.steps.push_back({0, 0, 0.5, k < 7 ? 1 : 0});
        const auto em = estimate_model(t, {1, 1});
        CHECK(em.visits[0][0] == 10);
        CHECK(em.p_hat(0, 0, 1) == doctest::Approx(0.7));
        CHECK(em.reward_estimate[0][0] == 0.5);
    }
    SUBCASE("inconsistent repeated rewards are an error") {
        EmpiricalModel em = EmpiricalModel::for_structure(2, {1, 1});
        em.record(0, 0, 0.5, 1);
        CHECK_THROWS(em.record(0, 0, 0.25, 1));
    }
    SUBCASE("long uniform run concentrates near the truth") {
        const auto env = half_floor_env();
        const auto rho = exploration_policy({2, 2, 2});
        Philox rng(71, 0);
        const auto traj = simulate(env, rho, 0, 100000, rng);
        const auto em = estimate_model(traj, {2, 2, 2});
        REQUIRE(em.all_pairs_seen());
        double worst = 0;
        for (int i = 0; i < 3; ++i)
            for (int a = 0; a < 2; ++a)
                for (int j = 0; j < 3; ++j)
                    if (env.trans[i][a][j] > 0)
                        worst = std::max(worst,
                                         std::fabs(em.p_hat(i, a, j) - env.trans[i][a][j]));
        CHECK(worst <= 0.02);
    }
}

TEST_CASE("exploration_budget") {
    const PriorKnowledge prior{Rational(1, 2), Rational(1)};
    SUBCASE("halving eps scales the budget by the inverse-square law") {
        // the Hoeffding core m quadruples exactly; the Chernoff
        // visit-count slack is sublinear, so n lands just below 4x
        const BigInt n1 = exploration_budget(2, 2, prior, 0.5, 0.5);
        const BigInt n2 = exploration_budget(2, 2, prior, 0.25, 0.5);
        CHECK(n1 > 0);
        CHECK(4 * n2 >= 15 * n1);  // >= 3.75x
        const auto core = [](double eps) {
            const double eps_prime = eps * 0.5 / 16;
            return std::ceil(std::log(4.0 * 4 * 2 / 0.5) / (2 * eps_prime * eps_prime));
        };
        CHECK(core(0.25) >= 4 * core(0.5) - 4);
    }
    SUBCASE("independent re-evaluation of the stated formula") {
        const int s = 2, a = 2;
        const double eps = 0.5, delta = 0.5, p_min = 0.5;
        const double eps_prime = eps * p_min / (8 * s);
        const double m = std::ceil(std::log(4.0 * s * s * a / delta) /
                                   (2 * eps_prime * eps_prime));
        const double block = std::pow(p_min, s) / a;
        const double fail = delta / 2 / (s * a);
        const double big_l = std::log(1 / fail);
        const double x = m + big_l + std::sqrt(big_l * big_l + 2 * m * big_l);
        const double blocks = std::ceil(x / block);
        const BigInt expected(static_cast<long long>(blocks) * s);
        CHECK(exploration_budget(s, a, prior, eps, delta) == expected);
    }
    SUBCASE("invalid arguments") {
        CHECK_THROWS(exploration_budget(2, 2, prior, 0.0, 0.5));
        CHECK_THROWS(exploration_budget(2, 2, prior, 0.5, 1.0));
        CHECK_THROWS(exploration_budget(2, 2, PriorKnowledge{Rational(0), Rational(1)}, 0.5,
                                        0.5));
    }
    SUBCASE("empirical validation: the budget delivers A1-A3 at the stated rate") {
        const auto env = half_floor_env();
        const PriorKnowledge env_prior{Rational(1, 2), Rational(1)};
        const double eps = 0.9, delta = 0.5;
        const BigInt n_big = exploration_budget(3, 2, env_prior, eps, delta);
        const auto n = n_big.convert_to<std::int64_t>();
        const auto rho = exploration_policy({2, 2, 2});
        int good = 0;
        const int runs = 200;
        for (int run = 0; run < runs; ++run) {
            Philox rng(9000 + run, 2);
            const auto traj = simulate(env, rho, 0, n, rng);
            const auto em = estimate_model(traj, {2, 2, 2});
            if (!em.all_pairs_seen()) continue;
            const auto est = em.estimate(0.25);
            const auto [a1, a2, a3] = assumptions_hold(env, est, eps);
            if (a1 && a2 && a3) ++good;
        }
        // >= (1-delta) * runs - 3 sigma with sigma = sqrt(runs)/2
        const double threshold = (1 - delta) * runs - 3 * std::sqrt(runs) / 2;
        CHECK(good >= static_cast<int>(threshold));
    }
}

TEST_CASE("frobenius_number") {
    CHECK(frobenius_number({1}) == -1);
    CHECK(frobenius_number({2, 3}) == 1);
    CHECK(frobenius_number({3, 5}) == 7);
    CHECK(frobenius_number({6, 10, 15}) == 29);
    CHECK_THROWS(frobenius_number({2, 4}));
    CHECK_THROWS(frobenius_number({}));
    SUBCASE("matches Sylvester's closed form for coprime pairs") {
        Philox rng(72, 0);
        for (int trial = 0; trial < 40; ++trial) {
            const std::int64_t a = 2 + static_cast<std::int64_t>(rng.below(11));
            std::int64_t b = 2 + static_cast<std::int64_t>(rng.below(11));
            if (std::gcd(a, b) != 1) continue;
            CHECK(frobenius_number({a, b}) == a * b - a - b);
        }
    }
}

TEST_CASE("doeblin_certificate") {
    SUBCASE("a self-loop clamps the mixing time to 1") {
        const auto cert = doeblin_certificate({1}, Rational(1, 4));
        CHECK(cert.t == 1);
        CHECK(cert.lambda == Rational(1, 4));
    }
    SUBCASE("cycle lengths {2,3}") {
        const auto cert = doeblin_certificate({2, 3}, Rational(1, 2));
        CHECK(cert.t == 2);
        CHECK(cert.lambda == Rational(1, 4));
    }
    SUBCASE("periodic cycle structure is rejected") {
        CHECK_THROWS(doeblin_certificate({2, 4}, Rational(1, 2)));
    }
    SUBCASE("matrix-power oracle on a concrete regular chain") {
        // 0->{1,2}, 1->{0,2}, 2->{0,1}: cycles of length 2 and 3, p_min 1/2
        const std::vector<std::vector<double>> p = {{0, .5, .5}, {.5, 0, .5}, {.5, .5, 0}};
        const auto cert = doeblin_certificate({2, 3}, Rational(1, 2));
        // P^t entrywise >= p_min^t
        std::vector<std::vector<double>> pk = {{1, 0, 0}, {0, 1, 0}, {0, 0, 1}};
        for (std::int64_t step = 0; step < cert.t; ++step) {
            std::vector<std::vector<double>> nx(3, std::vector<double>(3, 0));
            for (int i = 0; i < 3; ++i)
                for (int k = 0; k < 3; ++k)
                    for (int j = 0; j < 3; ++j) nx[i][j] += pk[i][k] * p[k][j];
            pk = nx;
        }
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j) CHECK(pk[i][j] >= to_double(cert.lambda) - 1e-12);
    }
    SUBCASE("conservative certificate covers regular chains") {
        const auto cert = doeblin_certificate_conservative(3, Rational(1, 2));
        CHECK(cert.t == 7);
        CHECK(cert.lambda == Rational(1, 128));
        const std::vector<std::vector<double>> p = {{.5, .5, 0}, {0, .5, .5}, {.5, 0, .5}};
        std::vector<std::vector<double>> pk = {{1, 0, 0}, {0, 1, 0}, {0, 0, 1}};
        for (std::int64_t step = 0; step < cert.t; ++step) {
            std::vector<std::vector<double>> nx(3, std::vector<double>(3, 0));
            for (int i = 0; i < 3; ++i)
                for (int k = 0; k < 3; ++k)
                    for (int j = 0; j < 3; ++j) nx[i][j] += pk[i][k] * p[k][j];
            pk = nx;
        }
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j) CHECK(pk[i][j] >= to_double(cert.lambda) - 1e-12);
    }
}

TEST_CASE("tracol_constants") {
    SUBCASE("the bound at K0 is a probability") {
        for (const double eps : {0.9, 0.5, 0.1}) {
            for (const int s : {2, 3, 4, 6}) {
                const auto tc = tracol_constants(s, Rational(1, 2), eps);
                const double k0 = tc.k0.convert_to<double>();
                const double bound =
                    to_double(tc.a_coef) * std::exp(-k0 * to_double(tc.b_coef) * eps * eps);
                CHECK(bound <= 1.0 + 1e-12);
                CHECK(bound >= 0.0);
            }
        }
    }
    SUBCASE("halving eps at least quadruples K0 (up to rounding)") {
        const auto a = tracol_constants(3, Rational(1, 2), 0.5);
        const auto b = tracol_constants(3, Rational(1, 2), 0.25);
        CHECK(b.k0 >= 4 * a.k0 - 3);
    }
    SUBCASE("invalid eps") { CHECK_THROWS(tracol_constants(3, Rational(1, 2), 1.0)); }
}

TEST_CASE("episode-threshold constants") {
    SUBCASE("the corrected-sign threshold exists for conservative constants") {
        for (const double eps : {0.5, 0.25, 0.1}) {
            const auto tc = tracol_constants(3, Rational(1, 2), eps);
            const auto k1 = tracol_k1(tc, eps);
            REQUIRE(k1.has_value());
            CHECK(*k1 == BigInt(1));  // a_coef = 2|S| >= 1 makes the ratio start above 1
            // spot-check the inequality plus its monotonicity in T
            const double a = to_double(tc.a_coef), b = to_double(tc.b_coef);
            double prev_ratio = 0;
            for (std::int64_t t = 1; t <= 5000; ++t) {
                const double ratio = a * std::exp(t * (std::log(2.0) - b * eps * eps));
                CHECK(ratio >= 1.0);  // a exp(-T b eps^2) >= 2^-T
                CHECK(ratio >= prev_ratio);
                prev_ratio = ratio;
            }
            // the literal decay reading has no threshold at these rates
            CHECK(!tracol_k1_strict(tc, eps).has_value());
        }
    }
    SUBCASE("the strict reading exists only when the rate beats ln 2") {
        TracolConstants fast;
        fast.a_coef = Rational(2);
        fast.b_coef = Rational(1);
        fast.k0 = 1;
        const auto k1 = tracol_k1_strict(fast, 0.9);
        REQUIRE(k1.has_value());
        const double rate = 1.0 * 0.81;
        const double at = k1->convert_to<double>();
        CHECK(2.0 * std::exp(-at * rate) <= std::pow(2.0, -at) + 1e-12);
        CHECK(!tracol_k1(fast, 0.9).has_value());
    }
    SUBCASE("M constant is finite") {
        for (const double eps : {0.5, 0.25, 0.1}) {
            const auto tc = tracol_constants(3, Rational(1, 2), eps);
            CHECK(episode_convergence_threshold(tc, eps) >= 1);
        }
    }
}

TEST_CASE("partial-product inequality at 100-bit precision") {
    for (int t = 1; t <= 60; ++t) CHECK(prod_exp_inequality_holds(t));
}

TEST_CASE("amortization identity") {
    const Rational w(1);
    for (const double eps : {0.5, 0.25, 0.125}) {
        for (const long long base : {100LL, 12345LL, 777777LL}) {
            const BigInt o = amortization_min_exploit(w, eps, BigInt(base));
            // holds at the returned value
            CHECK(Rational(BigInt(base)) * w <=
                  Rational(eps) / 2 * Rational(BigInt(base) + o));
            // fails one below (minimality)
            if (o > 0)
                CHECK(Rational(BigInt(base)) * w >
                      Rational(eps) / 2 * Rational(BigInt(base) + o - 1));
        }
    }
    CHECK(amortization_min_exploit(Rational(0), 0.5, BigInt(100)) == 0);
}

TEST_CASE("episode_schedule") {
    const PriorKnowledge prior{Rational(1, 5), Rational(1)};
    const auto sched = episode_schedule(prior, 3, 2, 5);
    REQUIRE(sched.episodes.size() == 5);
    SUBCASE("budgets strictly increase and totals accumulate") {
        BigInt s(0);
        for (std::size_t i = 0; i < sched.episodes.size(); ++i) {
            const auto& ep = sched.episodes[i];
            CHECK(ep.steps_before == s);
            if (i > 0) {
                CHECK(ep.explore_len > sched.episodes[i - 1].explore_len);
                CHECK(ep.exploit_len > sched.episodes[i - 1].exploit_len);
            }
            s += ep.explore_len + ep.exploit_len;
        }
        CHECK(sched.total_steps == s);
    }
    SUBCASE("episode budgets match independent re-evaluation") {
        BigInt s(0), prev_l(0), prev_o(0);
        for (int i = 1; i <= 5; ++i) {
            const double eps_i = std::ldexp(1.0, -i);
            BigInt l = exploration_budget(3, 2, prior, eps_i, eps_i / 2);
            if (l <= prev_l) l = prev_l + 1;
            const auto tc = tracol_constants(3, prior.p_min, eps_i);
            BigInt o = amortization_min_exploit(prior.reward_bound, eps_i, s + l);
            if (o < tc.k0) o = tc.k0;
            if (o <= prev_o) o = prev_o + 1;
            CHECK(sched.episodes[static_cast<std::size_t>(i - 1)].explore_len == l);
            CHECK(sched.episodes[static_cast<std::size_t>(i - 1)].exploit_len == o);
            prev_l = l;
            prev_o = o;
            s += l + o;
        }
    }
}

TEST_CASE("desk_schedule doubles exploration and amortizes exploitation") {
    const PriorKnowledge prior{Rational(1, 2), Rational(1)};
    const auto sched = desk_schedule(prior, 5, 50);
    REQUIRE(sched.episodes.size() == 5);
    for (std::size_t i = 0; i < 5; ++i) {
        CHECK(sched.episodes[i].explore_len == BigInt(50) << i);
        const auto& ep = sched.episodes[i];
        CHECK(Rational(ep.steps_before + ep.explore_len) <=
              Rational(ep.eps_i) / 2 *
                  Rational(ep.steps_before + ep.explore_len + ep.exploit_len));
    }
    CHECK(sched.total_steps < BigInt(100000000));
}

TEST_CASE("run_explore_exploit") {
    SUBCASE("single-action environment converges to the chain average") {
        Mdp<double> env;
        env.trans = {{{0.5, 0.5}}, {{0.5, 0.5}}};
        env.reward = {{0.0}, {1.0}};
        env.p_min = 0.5;
        env.reward_bound = 1.0;
        const PriorKnowledge prior{Rational(1, 2), Rational(1)};
        const auto sched = desk_schedule(prior, 4, 50);
        Philox rng(81, 0);
        const auto res = run_explore_exploit(
            env, prior, sched, sched.total_steps.convert_to<std::int64_t>(), 0, 1000, rng);
        CHECK(std::fabs(res.final_average - 0.5) < 0.05);
        for (const auto& [t, avg] : res.running_average) CHECK(std::fabs(avg) <= 1.0);
    }
    SUBCASE("clear best action: most seeds end near the optimum") {
        // action 1 at state 0 self-loops on reward 0.9; action 0 cycles on low reward
        Mdp<double> env;
        env.trans = {{{0.5, 0.5}, {0.9, 0.1}}, {{0.5, 0.5}, {0.1, 0.9}}};
        env.reward = {{0.1, 0.9}, {0.2, 0.3}};
        env.p_min = 0.1;
        env.reward_bound = 1.0;
        const double phi_star = optimal_average(env).gain[0];
        const PriorKnowledge prior{Rational(1, 10), Rational(1)};
        const auto sched = desk_schedule(prior, 5, 50);
        int good = 0;
        for (int seed = 0; seed < 5; ++seed) {
            Philox rng(400 + seed, 1);
            const auto res = run_explore_exploit(
                env, prior, sched, sched.total_steps.convert_to<std::int64_t>(), 0, 0, rng);
            if (res.final_average >= phi_star - 0.05) ++good;
        }
        CHECK(good >= 4);
    }
    SUBCASE("an impossible first episode falls back to exploration") {
        const auto env = half_floor_env();
        const PriorKnowledge prior{Rational(1, 2), Rational(1)};
        EpisodeSchedule sched;
        sched.episodes.push_back({1, 0.5, BigInt(1), BigInt(3), BigInt(0)});
        sched.total_steps = 4;
        Philox rng(82, 0);
        const auto res = run_explore_exploit(env, prior, sched, 4, 0, 0, rng);
        REQUIRE(res.episode_logs.size() == 1);
        CHECK(res.episode_logs[0].fell_back_to_exploration);
    }
    SUBCASE("statistics collected online match estimate_model on the trajectory") {
        const auto env = half_floor_env();
        const PriorKnowledge prior{Rational(1, 2), Rational(1)};
        const auto sched = desk_schedule(prior, 2, 30);
        Philox rng(83, 0);
        const auto res = run_explore_exploit(
            env, prior, sched, sched.total_steps.convert_to<std::int64_t>(), 0, 10, rng);
        // the recorded trajectory covers the whole run (under the cap);
        // exploration-phase statistics are a subset of its counts
        const auto em = estimate_model(res.trajectory, {2, 2, 2});
        for (int i = 0; i < 3; ++i)
            for (int a = 0; a < 2; ++a)
                CHECK(res.episode_models.back().visits[i][a] <= em.visits[i][a]);
    }
}
