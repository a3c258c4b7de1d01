#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "mdpkit/mdp.hpp"
#include "mdpkit/solvers.hpp"

namespace mdpkit {

/// The uniform random exploration policy rho: 1/|A(i)| on every
/// available action.
inline StationaryPolicy<double> exploration_policy(const std::vector<int>& actions_per_state) {
    StationaryPolicy<double> pi;
    pi.weights.resize(actions_per_state.size());
    for (std::size_t i = 0; i < actions_per_state.size(); ++i) {
        if (actions_per_state[i] <= 0) throw std::invalid_argument("empty action set");
        pi.weights[i].assign(actions_per_state[i], 1.0 / actions_per_state[i]);
    }
    return pi;
}

/// Visit and transition counts with frequency estimates. Rewards are
/// deterministic per pair, so the first observation fixes r_hat and
/// repeats are checked for consistency.
struct EmpiricalModel {
    std::vector<std::vector<std::int64_t>> visits;
    std::vector<std::vector<std::vector<std::int64_t>>> transition_counts;
    std::vector<std::vector<double>> reward_estimate;
    std::vector<std::vector<bool>> reward_seen;

    static EmpiricalModel for_structure(int n_states, const std::vector<int>& actions_per_state) {
        EmpiricalModel em;
        em.visits.resize(n_states);
        em.transition_counts.resize(n_states);
        em.reward_estimate.resize(n_states);
        em.reward_seen.resize(n_states);
        for (int i = 0; i < n_states; ++i) {
            const int k = actions_per_state[i];
            em.visits[i].assign(k, 0);
            em.transition_counts[i].assign(k, std::vector<std::int64_t>(n_states, 0));
            em.reward_estimate[i].assign(k, 0.0);
            em.reward_seen[i].assign(k, false);
        }
        return em;
    }

    void record(int i, int a, double r, int j) {
        ++visits[i][a];
        ++transition_counts[i][a][j];
        if (reward_seen[i][a]) {
            if (reward_estimate[i][a] != r)
                throw std::runtime_error("inconsistent repeated reward observation at (" +
                                         std::to_string(i) + "," + std::to_string(a) + ")");
        } else {
            reward_estimate[i][a] = r;
            reward_seen[i][a] = true;
        }
    }

    double p_hat(int i, int a, int j) const {
        if (visits[i][a] == 0) throw std::invalid_argument("pair never visited");
        return static_cast<double>(transition_counts[i][a][j]) /
               static_cast<double>(visits[i][a]);
    }

    bool all_pairs_seen() const {
        for (std::size_t i = 0; i < visits.size(); ++i)
            for (std::int64_t v : visits[i])
                if (v == 0) return false;
        return true;
    }

    /// Frequency model with support thresholding: estimated entries
    /// below `support_threshold` (and zero-count entries) are treated as
    /// zero, surviving entries renormalized. Requires every pair seen.
    Mdp<double> estimate(double support_threshold = 0.0) const {
        if (!all_pairs_seen()) throw std::invalid_argument("estimate requires every pair visited");
        const int n = static_cast<int>(visits.size());
        Mdp<double> m;
        m.trans.resize(n);
        m.reward.resize(n);
        for (int i = 0; i < n; ++i) {
            const int k = static_cast<int>(visits[i].size());
            m.trans[i].assign(k, std::vector<double>(n, 0.0));
            m.reward[i].resize(k);
            for (int a = 0; a < k; ++a) {
                m.reward[i][a] = reward_estimate[i][a];
                double kept = 0;
                int best_j = 0;
                for (int j = 0; j < n; ++j) {
                    const double p = p_hat(i, a, j);
                    if (transition_counts[i][a][j] > transition_counts[i][a][best_j]) best_j = j;
                    if (transition_counts[i][a][j] > 0 && p >= support_threshold) {
                        m.trans[i][a][j] = p;
                        kept += p;
                    }
                }
                if (kept == 0) {
                    // everything fell below the threshold; keep the modal entry
                    m.trans[i][a][best_j] = 1.0;
                } else {
                    for (int j = 0; j < n; ++j) m.trans[i][a][j] /= kept;
                }
            }
        }
        return m;
    }
};

/// Tallies a recorded trajectory.
inline EmpiricalModel estimate_model(const Trajectory& traj,
                                     const std::vector<int>& actions_per_state) {
    EmpiricalModel em =
        EmpiricalModel::for_structure(static_cast<int>(actions_per_state.size()),
                                      actions_per_state);
    for (const auto& s : traj.steps) {
        if (s.action >= actions_per_state.at(s.state))
            throw std::invalid_argument("trajectory action outside the declared structure");
        em.record(s.state, s.action, s.reward, s.next);
    }
    return em;
}

/// Number of uniform-exploration steps that suffices, with probability
/// at least 1-delta, for the estimated model to satisfy the A1-A3
/// budgets at epsilon. Construction: the A2 ratio budget eps/(8|S|)
/// converts to a per-pair total-variation target eps' = eps*p_min/(8|S|)
/// (the distance relation reversed); Hoeffding gives the per-pair sample
/// need m = ceil(ln(4|S|^2|A|/delta) / (2 eps'^2)); uniform exploration
/// visits any fixed pair in a block of |S| steps with probability at
/// least p_min^|S| / max|A(i)|, and a Chernoff lower tail with failure
/// share delta/2 turns that into a step count, rounded up to a multiple
/// of |S|.
inline BigInt exploration_budget(int n_states, int max_actions, const PriorKnowledge& prior,
                                 double eps, double delta) {
    if (!(eps > 0 && eps < 1) || !(delta > 0 && delta < 1))
        throw std::invalid_argument("eps and delta must lie in (0,1)");
    if (prior.p_min <= 0) throw std::invalid_argument("p_min must be positive");
    using boost::multiprecision::ceil;
    using boost::multiprecision::log;
    using boost::multiprecision::sqrt;
    const Float100 pmin = to_float100(prior.p_min);
    const Float100 eps_f(eps), delta_f(delta);
    const Float100 eps_prime = eps_f * pmin / (8 * n_states);
    const Float100 m_f =
        ceil(log(Float100(4) * n_states * n_states * max_actions / delta_f) /
             (2 * eps_prime * eps_prime));
    Float100 block_success = pmin;
    for (int k = 1; k < n_states; ++k) block_success *= pmin;
    block_success /= max_actions;  // q * |S| with q = p_min^|S| / (|S| max|A|)
    const Float100 fail_share =
        delta_f / 2 / (Float100(n_states) * max_actions);  // union over pairs
    const Float100 big_l = log(1 / fail_share);
    const Float100 x = m_f + big_l + sqrt(big_l * big_l + 2 * m_f * big_l);
    const Float100 blocks = ceil(x / block_success);
    return BigInt(ceil(blocks).convert_to<BigInt>() * n_states);
}

/// Largest integer not expressible as a nonnegative integer combination
/// of the set; -1 when every nonnegative integer is (e.g. 1 in the set).
inline std::int64_t frobenius_number(std::vector<std::int64_t> numbers) {
    if (numbers.empty()) throw std::invalid_argument("empty set");
    std::int64_t g = 0;
    for (std::int64_t a : numbers) {
        if (a <= 0) throw std::invalid_argument("set members must be positive");
        g = std::gcd(g, a);
    }
    if (g != 1) throw std::invalid_argument("gcd of the set must be 1");
    std::sort(numbers.begin(), numbers.end());
    if (numbers.front() == 1) return -1;
    const std::int64_t limit = numbers.front() * numbers.back();  // >= Frobenius + 1
    if (limit > 100'000'000) throw std::invalid_argument("set too large for the sieve");
    std::vector<bool> reachable(static_cast<std::size_t>(limit) + 1, false);
    reachable[0] = true;
    for (std::int64_t a : numbers)
        for (std::int64_t v = a; v <= limit; ++v)
            if (reachable[static_cast<std::size_t>(v - a)])
                reachable[static_cast<std::size_t>(v)] = true;
    for (std::int64_t v = limit; v >= 0; --v)
        if (!reachable[static_cast<std::size_t>(v)]) return v;
    return -1;
}

/// Mixing time and ergodicity coefficient certifying the Doeblin
/// condition Pr_i(X_t in T) >= lambda phi(T).
struct DoeblinCertificate {
    std::int64_t t = 1;
    Rational lambda;
};

/// Exact mode: t = g(cycle lengths) + 1, clamped to at least 1 (a
/// self-loop gives g({1}) = -1); lambda = p_min^t. The cycle lengths
/// must be coprime overall (aperiodicity).
inline DoeblinCertificate doeblin_certificate(const std::vector<std::int64_t>& cycle_lengths,
                                              const Rational& p_min) {
    DoeblinCertificate cert;
    cert.t = std::max<std::int64_t>(frobenius_number(cycle_lengths) + 1, 1);
    cert.lambda = 1;
    for (std::int64_t k = 0; k < cert.t; ++k) cert.lambda *= p_min;
    return cert;
}

/// Conservative mode for an unknown regular chain: t = (|S|-1)|S| + 1
/// upper-bounds the Frobenius number of any coprime set of integers
/// <= |S| (and the primitivity exponent), lambda = p_min^t.
inline DoeblinCertificate doeblin_certificate_conservative(int n_states, const Rational& p_min) {
    DoeblinCertificate cert;
    cert.t = static_cast<std::int64_t>(n_states - 1) * n_states + 1;
    cert.lambda = 1;
    for (std::int64_t k = 0; k < cert.t; ++k) cert.lambda *= p_min;
    return cert;
}

/// Computable constants for the running-reward tail bound
///   Pr_i( sum_{t<=T} r_t >= E[sum] - T eps ) >= 1 - a exp(-T b eps^2)
/// for all T >= k0, on any unichain chain with the given |S| and p_min
/// (rewards normalized to magnitude 1). Built from the conservative
/// Doeblin certificate: b = lambda^2/(8 t^2), a = 2|S|, and k0 chosen so
/// a exp(-k0 b eps^2) <= 1 by construction.
struct TracolConstants {
    BigInt k0;
    Rational a_coef;
    Rational b_coef;
    std::int64_t mixing_t = 1;
    Rational lambda;
};

inline TracolConstants tracol_constants(int n_states, const Rational& p_min, double eps) {
    if (!(eps > 0 && eps < 1)) throw std::invalid_argument("eps must lie in (0,1)");
    const DoeblinCertificate cert = doeblin_certificate_conservative(n_states, p_min);
    TracolConstants tc;
    tc.mixing_t = cert.t;
    tc.lambda = cert.lambda;
    tc.a_coef = Rational(2 * n_states);
    tc.b_coef = cert.lambda * cert.lambda / (Rational(8) * cert.t * cert.t);
    const double factor = 8.0 * std::max(2.0, std::log(2.0 * n_states));
    // k0 = ceil(factor * (t / (lambda eps))^2); equals the plain
    // (4t/(lambda eps))^2 whenever ln(2|S|) <= 2
    const Rational base = Rational(cert.t) / (cert.lambda * Rational(eps));
    const Float100 k0_f = Float100(factor) * to_float100(base * base);
    tc.k0 = boost::multiprecision::ceil(k0_f).convert_to<BigInt>();
    return tc;
}

/// Threshold for the corrected-sign episode inequality
///   a exp(-T b eps^2) >= 2^-T for all T >= K1.
/// The comparison ratio a exp(T (ln2 - b eps^2)) is monotone, so the
/// threshold is exact. Empty when b eps^2 > ln 2 (then the bound decays
/// faster than 2^-T and no such K1 exists); conservative constants
/// always have b <= 1/8 < ln 2, so the threshold exists.
inline std::optional<BigInt> tracol_k1(const TracolConstants& tc, double eps) {
    const double rate = to_double(tc.b_coef) * eps * eps;
    const double ln2 = std::log(2.0);
    const double ln_a = std::log(to_double(tc.a_coef));
    if (rate > ln2) return std::nullopt;
    if (rate == ln2) return ln_a >= 0 ? std::optional<BigInt>(BigInt(1)) : std::nullopt;
    const double k1 = -ln_a / (ln2 - rate);
    return BigInt(std::max<std::int64_t>(1, static_cast<std::int64_t>(std::ceil(k1))));
}

/// The literal reading "a exp(-T b eps^2) <= 2^-T for all T >= K1"
/// requires b eps^2 > ln 2; with conservative constants (b <= 1/8) no
/// such K1 exists and this returns empty.
inline std::optional<BigInt> tracol_k1_strict(const TracolConstants& tc, double eps) {
    const double rate = to_double(tc.b_coef) * eps * eps;
    const double ln2 = std::log(2.0);
    if (rate <= ln2) return std::nullopt;
    const double ln_a = std::log(to_double(tc.a_coef));
    const double k1 = ln_a / (rate - ln2);
    return BigInt(std::max<std::int64_t>(1, static_cast<std::int64_t>(std::ceil(k1))));
}

/// M = max{K1, 2 - log2(-ln(1-eps))}: from this index on, the partial
/// product prod_{t>=M}(1 - 2^-t) stays above 1 - eps (via the
/// exp(-2^(2-M)) lower bound) and the K1 threshold applies.
inline BigInt episode_convergence_threshold(const TracolConstants& tc, double eps) {
    const auto k1 = tracol_k1(tc, eps);
    if (!k1) throw std::runtime_error("no K1 threshold for these constants");
    const double m2 = 2.0 - std::log2(-std::log(1.0 - eps));
    BigInt m = *k1;
    const BigInt m2_int(static_cast<std::int64_t>(std::ceil(std::max(m2, 1.0))));
    if (m2_int > m) m = m2_int;
    return m;
}

/// Lower bound for prod_{t=T}^inf (1 - 2^-t) at 100-bit precision: a
/// long partial product times the rigorous tail factor 1 - 2^-M.
inline Float100 prod_exp_lower_bound(int big_t, int tail_terms = 360) {
    Float100 prod(1);
    Float100 pow2 = boost::multiprecision::pow(Float100(2), -big_t);
    for (int t = big_t; t < big_t + tail_terms; ++t) {
        prod *= (Float100(1) - pow2);
        pow2 /= 2;
    }
    prod *= (Float100(1) - pow2 * 2);  // remaining tail >= 1 - sum 2^-t
    return prod;
}

/// prod_{t=T}^inf (1 - 2^-t) >= exp(-2^(2-T)), checked rigorously from
/// below at 100-bit precision.
inline bool prod_exp_inequality_holds(int big_t) {
    const Float100 rhs =
        boost::multiprecision::exp(-boost::multiprecision::pow(Float100(2), 2 - big_t));
    return prod_exp_lower_bound(big_t) >= rhs;
}

/// Episode schedule: per episode i, eps_i = 2^-i, an exploration length
/// and an exploitation length, with running totals.
struct EpisodeSchedule {
    struct Episode {
        int index = 0;
        double eps_i = 0;
        BigInt explore_len;
        BigInt exploit_len;
        BigInt steps_before;  // S_i: steps executed before this episode
    };
    std::vector<Episode> episodes;
    BigInt total_steps;
};

/// Smallest exploitation length amortizing the worst-case exploration
/// deficit: W (S_i + L_i) <= (eps_i/2)(S_i + L_i + O_i).
inline BigInt amortization_min_exploit(const Rational& reward_bound, double eps_i,
                                       const BigInt& steps_so_far_plus_explore) {
    if (reward_bound == 0) return BigInt(0);
    const Rational need =
        Rational(steps_so_far_plus_explore) * (Rational(2) * reward_bound / Rational(eps_i) - 1);
    if (need <= 0) return BigInt(0);
    BigInt o = boost::multiprecision::numerator(need) / boost::multiprecision::denominator(need);
    if (Rational(o) < need) ++o;  // ceil
    return o;
}

/// The analysis schedule: L_i from the exploration budget at
/// (eps_i, eps_i/2), O_i >= K0(eps_i) and the amortization floor; both
/// sequences strictly increase. Uses big integers throughout since the
/// budgets overflow fixed-width arithmetic after a handful of episodes.
inline EpisodeSchedule episode_schedule(const PriorKnowledge& prior, int n_states,
                                        int max_actions, int num_episodes) {
    if (num_episodes < 1) throw std::invalid_argument("need at least one episode");
    EpisodeSchedule sched;
    BigInt s(0), prev_l(0), prev_o(0);
    for (int i = 1; i <= num_episodes; ++i) {
        const double eps_i = std::ldexp(1.0, -i);
        EpisodeSchedule::Episode ep;
        ep.index = i;
        ep.eps_i = eps_i;
        ep.steps_before = s;
        ep.explore_len = exploration_budget(n_states, max_actions, prior, eps_i, eps_i / 2);
        if (ep.explore_len <= prev_l) ep.explore_len = prev_l + 1;
        const TracolConstants tc = tracol_constants(n_states, prior.p_min, eps_i);
        BigInt o = amortization_min_exploit(prior.reward_bound, eps_i, s + ep.explore_len);
        if (o < tc.k0) o = tc.k0;
        if (o <= prev_o) o = prev_o + 1;
        ep.exploit_len = o;
        prev_l = ep.explore_len;
        prev_o = ep.exploit_len;
        s += ep.explore_len + ep.exploit_len;
        sched.episodes.push_back(std::move(ep));
    }
    sched.total_steps = s;
    return sched;
}

/// Desk-scale variant for runnable experiments: exploration lengths
/// l1 * 2^(i-1) instead of the (astronomical) analysis budgets, and the
/// amortization floor alone for O_i. Keeps the episode structure and
/// the eps_i = 2^-i accuracy ladder.
inline EpisodeSchedule desk_schedule(const PriorKnowledge& prior, int num_episodes,
                                     std::int64_t l1) {
    if (num_episodes < 1 || l1 < 1) throw std::invalid_argument("bad desk schedule parameters");
    EpisodeSchedule sched;
    BigInt s(0), prev_o(0);
    for (int i = 1; i <= num_episodes; ++i) {
        const double eps_i = std::ldexp(1.0, -i);
        EpisodeSchedule::Episode ep;
        ep.index = i;
        ep.eps_i = eps_i;
        ep.steps_before = s;
        ep.explore_len = BigInt(l1) << (i - 1);
        BigInt o = amortization_min_exploit(prior.reward_bound, eps_i, s + ep.explore_len);
        if (o <= prev_o) o = prev_o + 1;
        ep.exploit_len = o;
        prev_o = ep.exploit_len;
        s += ep.explore_len + ep.exploit_len;
        sched.episodes.push_back(std::move(ep));
    }
    sched.total_steps = s;
    return sched;
}

struct EpisodeLog {
    int index = 0;
    std::int64_t explored = 0;
    std::int64_t exploited = 0;
    bool fell_back_to_exploration = false;
    std::vector<int> exploit_choice;  // action per state when exploiting
};

struct ExploreExploitResult {
    Trajectory trajectory;  // prefix up to the recording cap
    std::vector<std::pair<std::int64_t, double>> running_average;
    std::vector<EmpiricalModel> episode_models;
    std::vector<EpisodeLog> episode_logs;
    double final_average = 0;
    std::int64_t executed_steps = 0;
};

/// The episodic explore-exploit policy: each episode explores uniformly
/// for L_i steps, re-estimates the model from the exploration statistics
/// (support thresholded at p_min/2), and exploits the estimate's optimal
/// unichain limit-average policy for O_i steps. Episodes whose estimate
/// is unusable (unseen pairs or a non-communicating estimate) keep
/// exploring instead, which is logged. The exploitation policy is
/// recomputed once per episode.
inline ExploreExploitResult run_explore_exploit(const Mdp<double>& env,
                                                const PriorKnowledge& prior,
                                                const EpisodeSchedule& schedule,
                                                std::int64_t total_steps, int start,
                                                std::int64_t avg_stride, Philox& rng,
                                                std::int64_t trajectory_cap = 100000) {
    const int n = env.num_states();
    std::vector<int> acts(n);
    for (int i = 0; i < n; ++i) acts[i] = env.num_actions(i);
    EmpiricalModel stats = EmpiricalModel::for_structure(n, acts);

    // cumulative rows per (i,a) for fast inverse-CDF sampling
    std::vector<std::vector<std::vector<double>>> cum(n);
    for (int i = 0; i < n; ++i) {
        cum[i].resize(acts[i]);
        for (int a = 0; a < acts[i]; ++a) {
            cum[i][a].resize(n);
            double acc = 0;
            for (int j = 0; j < n; ++j) {
                acc += env.trans[i][a][j];
                cum[i][a][j] = acc;
            }
            cum[i][a][n - 1] = 1.0;
        }
    }
    auto draw_next = [&](int i, int a) {
        const double u = rng.uniform01();
        const auto& row = cum[i][a];
        int j = 0;
        while (row[j] <= u) ++j;
        return j;
    };

    ExploreExploitResult out;
    out.trajectory.start = start;
    out.trajectory.seed = rng.seed();
    out.trajectory.stream = rng.stream();

    int state = start;
    std::int64_t t = 0;
    double reward_sum = 0;
    auto step_with = [&](int a, bool counting) {
        const int j = draw_next(state, a);
        const double r = env.reward[state][a];
        if (counting) stats.record(state, a, r, j);
        if (t < trajectory_cap) out.trajectory.steps.push_back({state, a, r, j});
        reward_sum += r;
        ++t;
        if (avg_stride > 0 && t % avg_stride == 0)
            out.running_average.emplace_back(t, reward_sum / static_cast<double>(t));
        state = j;
    };

    const double threshold = to_double(prior.p_min) / 2.0;
    for (const auto& ep : schedule.episodes) {
        if (t >= total_steps) break;
        EpisodeLog log;
        log.index = ep.index;
        const std::int64_t explore_len = ep.explore_len > BigInt(total_steps)
                                             ? total_steps
                                             : ep.explore_len.convert_to<std::int64_t>();
        const std::int64_t exploit_len = ep.exploit_len > BigInt(total_steps)
                                             ? total_steps
                                             : ep.exploit_len.convert_to<std::int64_t>();
        for (std::int64_t k = 0; k < explore_len && t < total_steps; ++k) {
            const int a = static_cast<int>(rng.below(static_cast<std::uint64_t>(acts[state])));
            step_with(a, true);
            ++log.explored;
        }
        out.episode_models.push_back(stats);

        bool usable = stats.all_pairs_seen();
        Mdp<double> est;
        if (usable) {
            est = stats.estimate(threshold);
            usable = is_communicating(est);
        }
        if (!usable) {
            log.fell_back_to_exploration = true;
            for (std::int64_t k = 0; k < exploit_len && t < total_steps; ++k) {
                const int a = static_cast<int>(rng.below(static_cast<std::uint64_t>(acts[state])));
                step_with(a, true);
                ++log.exploited;
            }
        } else {
            const AverageSolution sol = optimal_average(est);
            std::vector<int> choice(n, 0);
            for (int i = 0; i < n; ++i)
                for (int a = 0; a < acts[i]; ++a)
                    if (sol.policy.weights[i][a] == 1.0) choice[i] = a;
            log.exploit_choice = choice;
            for (std::int64_t k = 0; k < exploit_len && t < total_steps; ++k) {
                step_with(choice[state], false);
                ++log.exploited;
            }
        }
        out.episode_logs.push_back(std::move(log));
    }
    // trailing steps beyond the schedule keep the last behavior: explore
    while (t < total_steps) {
        const int a = static_cast<int>(rng.below(static_cast<std::uint64_t>(acts[state])));
        step_with(a, true);
    }

    out.executed_steps = t;
    out.final_average = t > 0 ? reward_sum / static_cast<double>(t) : 0.0;
    if (out.running_average.empty() || out.running_average.back().first != t)
        out.running_average.emplace_back(t, out.final_average);
    return out;
}

}  // namespace mdpkit
