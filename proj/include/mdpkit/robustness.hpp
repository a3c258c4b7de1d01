#pragma once

#include <atomic>
#include <cmath>
#include <cstdint>
#include <string>
#include <thread>
#include <tuple>
#include <vector>

#include "mdpkit/metrics.hpp"
#include "mdpkit/rng.hpp"
#include "mdpkit/solvers.hpp"

namespace mdpkit {

/// The theorem budgets derived from a single epsilon: ratio budget
/// eps/(8|S|) for transition kernels, total-variation budget eps/2 for
/// rewards.
struct PerturbationBudget {
    double eps;
    int n_states;

    double ratio_budget() const { return eps / (8.0 * n_states); }
    double reward_budget() const { return eps / 2.0; }
};

struct PolicyAuditRow {
    std::string policy_id;
    double v1 = 0;
    double v2 = 0;
    double gap = 0;    // (1-alpha)|v1-v2| for discounted, |phi1-phi2| for average
    double bound = 0;  // eps/2 + eps/2 ||r1||_inf (eps in corollary mode)
    bool holds = false;
};

struct RobustnessReport {
    bool a1 = false, a2 = false, a3 = false;
    bool corollary_mode = false;  // rewards of m1 lie in [0,1]
    double bound = 0;
    double corollary_bound = 0;
    bool corollary_holds = false;  // worst gap <= eps, meaningful in corollary mode
    double worst_gap = 0;
    bool all_hold = false;
    int skipped_policies = 0;  // average-reward audits skip non-unichain policies
    double ratio_delta = 0;          // realized d_rat(P1, P2)
    bool binomial_step_holds = false;  // recorded, not asserted (loose proof step)
    std::vector<PolicyAuditRow> rows;
};

namespace detail {

constexpr double kAuditSlack = 1e-9;  // solver residual allowance on bounds

/// Index-parallel loop with deterministic output slots.
template <class Fn>
void parallel_for(std::size_t count, int jobs, Fn&& fn) {
    if (jobs <= 1 || count < 2) {
        for (std::size_t i = 0; i < count; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        std::size_t i;
        while ((i = next.fetch_add(1)) < count) fn(i);
    };
    std::vector<std::thread> pool;
    const int n_threads = std::min<int>(jobs, static_cast<int>(count));
    pool.reserve(n_threads);
    for (int t = 0; t < n_threads; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
}

inline std::string policy_label(const StationaryPolicy<double>& pi, bool deterministic) {
    std::string id = deterministic ? "det:" : "sto:";
    for (int i = 0; i < pi.num_states(); ++i) {
        if (i) id += ",";
        if (deterministic) {
            int choice = 0;
            for (std::size_t a = 0; a < pi.weights[i].size(); ++a)
                if (pi.weights[i][a] == 1.0) choice = static_cast<int>(a);
            id += std::to_string(choice);
        } else {
            id += "(";
            for (std::size_t a = 0; a < pi.weights[i].size(); ++a) {
                if (a) id += " ";
                id += std::to_string(pi.weights[i][a]);
            }
            id += ")";
        }
    }
    return id;
}

/// All deterministic stationary policies in mixed-radix order, guarded.
template <class T>
std::vector<StationaryPolicy<T>> enumerate_deterministic_policies(const Mdp<T>& m,
                                                                   std::uint64_t guard = 1000000) {
    const int n = m.num_states();
    std::vector<int> acts(n);
    double count = 1;
    for (int i = 0; i < n; ++i) {
        acts[i] = m.num_actions(i);
        count *= acts[i];
        if (count > static_cast<double>(guard))
            throw std::runtime_error("deterministic policy enumeration guard exceeded");
    }
    std::vector<StationaryPolicy<T>> out;
    std::vector<int> choice(n, 0);
    while (true) {
        out.push_back(StationaryPolicy<T>::deterministic(choice, acts));
        int k = 0;
        for (; k < n; ++k) {
            if (++choice[k] < acts[k]) break;
            choice[k] = 0;
        }
        if (k == n) break;
    }
    return out;
}

/// Dirichlet(1,...,1) rows: normalized unit-rate exponentials.
inline StationaryPolicy<double> random_stochastic_policy(const Mdp<double>& m, Philox& rng) {
    StationaryPolicy<double> pi;
    pi.weights.resize(m.num_states());
    for (int i = 0; i < m.num_states(); ++i) {
        const int k = m.num_actions(i);
        pi.weights[i].resize(k);
        double sum = 0;
        for (int a = 0; a < k; ++a) {
            double u = rng.uniform01();
            while (u == 0.0) u = rng.uniform01();
            pi.weights[i][a] = -std::log(u);
            sum += pi.weights[i][a];
        }
        for (int a = 0; a < k; ++a) pi.weights[i][a] /= sum;
    }
    return pi;
}

}  // namespace detail

/// Support-preserving random perturbation within the theorem budgets.
/// Per row, positive entries are scaled by factors from
/// [1/(1+beta), 1+beta] with beta = eps/(16|S|), renormalized, and
/// rejection-checked against the full ratio budget (renormalization
/// moves ratios further, the half-budget draw plus retry keeps the
/// generator sound). Rewards get additive noise in [-eps/2, eps/2]
/// where positive; zero and negative rewards are left untouched since
/// the jointly-positive total-variation distance cannot see them.
/// Rewards in [0,1] stay in [0,1] so corollary audits remain valid.
inline Mdp<double> perturb_model(const Mdp<double>& m, double eps, Philox& rng) {
    if (!(eps > 0 && eps < 1)) throw std::invalid_argument("eps must be in (0,1)");
    const int n = m.num_states();
    const PerturbationBudget budget{eps, n};
    const double beta = eps / (16.0 * n);
    const bool unit_rewards = [&] {
        for (const auto& row : m.reward)
            for (double r : row)
                if (r < 0 || r > 1) return false;
        return true;
    }();

    Mdp<double> out = m;
    for (int i = 0; i < n; ++i) {
        for (int a = 0; a < m.num_actions(i); ++a) {
            const auto& row = m.trans[i][a];
            auto& target = out.trans[i][a];
            bool ok = false;
            for (int attempt = 0; attempt < 100 && !ok; ++attempt) {
                double sum = 0;
                for (int j = 0; j < n; ++j) {
                    if (row[j] == 0.0) {
                        target[j] = 0.0;
                        continue;
                    }
                    const double lo = 1.0 / (1.0 + beta);
                    const double factor = lo + rng.uniform01() * (1.0 + beta - lo);
                    target[j] = row[j] * factor;
                    sum += target[j];
                }
                ok = true;
                for (int j = 0; j < n; ++j) {
                    if (row[j] == 0.0) continue;
                    target[j] /= sum;
                    const double ratio = target[j] > row[j] ? target[j] / row[j]
                                                            : row[j] / target[j];
                    if (ratio - 1.0 > budget.ratio_budget()) ok = false;
                }
            }
            if (!ok) target = row;  // e.g. a probability-1 row only admits the identity

            const double r0 = m.reward[i][a];
            if (r0 > 0) {
                double noise = (rng.uniform01() * 2.0 - 1.0) * budget.reward_budget();
                double r = r0 + noise;
                if (r <= 0) r = r0 * 1e-3;  // keep the pair jointly positive
                if (unit_rewards && r > 1) r = 1.0;
                out.reward[i][a] = r;
            }
        }
    }
    return out;
}

/// (A1, A2, A3) of the robustness theorems. A1 is support-graph equality
/// for each supplied policy; with no policies supplied it is checked as
/// kernel-support equality, which implies equality for every policy.
inline std::tuple<bool, bool, bool> assumptions_hold(
    const Mdp<double>& m1, const Mdp<double>& m2, double eps,
    const std::vector<StationaryPolicy<double>>& policies = {}) {
    check_same_structure(m1, m2);
    const PerturbationBudget budget{eps, m1.num_states()};
    bool a1 = true;
    if (policies.empty()) {
        for (int i = 0; i < m1.num_states() && a1; ++i)
            for (int a = 0; a < m1.num_actions(i) && a1; ++a)
                for (int j = 0; j < m1.num_states(); ++j)
                    if ((m1.trans[i][a][j] > 0) != (m2.trans[i][a][j] > 0)) {
                        a1 = false;
                        break;
                    }
    } else {
        for (const auto& pi : policies) {
            const SupportGraph g1 = support_graph(m1, pi);
            const SupportGraph g2 = support_graph(m2, pi);
            if (g1.adj != g2.adj) {
                a1 = false;
                break;
            }
        }
    }
    const bool a2 =
        to_double(ratio_distance(flatten_kernel(m1), flatten_kernel(m2))) <= budget.ratio_budget();
    const bool a3 = to_double(total_variation(flatten_rewards(m1), flatten_rewards(m2))) <=
                    budget.reward_budget();
    return {a1, a2, a3};
}

/// The end-to-end step of the proof chain: (1+delta)^2|S| - 1 <= eps/4
/// whenever delta <= eps/(8|S|). The printed derivation drops binomial
/// coefficients; since (1+d)^n exceeds 1 + nd strictly, the consequence
/// fails right at the budget boundary for every eps and only holds some
/// margin below it, so audits record the verdict instead of asserting it.
inline bool binomial_chain_holds(double delta, double eps, int n_states) {
    return std::pow(1.0 + delta, 2.0 * n_states) - 1.0 <= eps / 4.0 + detail::kAuditSlack;
}

/// Audits the discounted robustness bound
///   (1-alpha)|v1 - v2| <= eps/2 + eps/2 ||r1||_inf
/// over every deterministic stationary policy plus `n_stochastic`
/// Dirichlet draws. When m1's rewards lie in [0,1] the simplified
/// corollary bound eps is recorded as well.
inline RobustnessReport check_discounted_robustness(const Mdp<double>& m1, const Mdp<double>& m2,
                                                    double alpha, double eps, int start,
                                                    int n_stochastic, Philox& rng,
                                                    int jobs = 1) {
    if (!(alpha > 0 && alpha < 1) || !(eps > 0 && eps < 1))
        throw std::invalid_argument("alpha and eps must lie in (0,1)");
    RobustnessReport rep;
    std::tie(rep.a1, rep.a2, rep.a3) = assumptions_hold(m1, m2, eps);
    if (!(rep.a1 && rep.a2 && rep.a3))
        throw std::invalid_argument("robustness assumptions A1-A3 do not hold");

    const double r_norm = to_double(m1.reward_sup_norm());
    rep.bound = eps / 2 + eps / 2 * r_norm;
    rep.corollary_mode = [&] {
        for (const auto& row : m1.reward)
            for (double r : row)
                if (r < 0 || r > 1) return false;
        return true;
    }();
    rep.corollary_bound = eps;
    rep.ratio_delta = to_double(ratio_distance(flatten_kernel(m1), flatten_kernel(m2)));
    rep.binomial_step_holds = binomial_chain_holds(rep.ratio_delta, eps, m1.num_states());

    // the policy list is fixed up front; evaluations are independent and
    // may run on several threads with rows written by index
    std::vector<std::pair<StationaryPolicy<double>, bool>> policies;
    for (auto& pi : detail::enumerate_deterministic_policies(m1))
        policies.emplace_back(std::move(pi), true);
    for (int k = 0; k < n_stochastic; ++k)
        policies.emplace_back(detail::random_stochastic_policy(m1, rng), false);

    rep.rows.resize(policies.size());
    auto audit_policy = [&](std::size_t idx) {
        const auto& [pi, deterministic] = policies[idx];
        PolicyAuditRow row;
        row.policy_id = detail::policy_label(pi, deterministic);
        row.v1 = evaluate_discounted(m1, pi, alpha, start);
        row.v2 = evaluate_discounted(m2, pi, alpha, start);
        row.gap = (1 - alpha) * std::fabs(row.v1 - row.v2);
        row.bound = rep.bound;
        row.holds = row.gap <= row.bound + detail::kAuditSlack;
        rep.rows[idx] = std::move(row);
    };
    detail::parallel_for(policies.size(), jobs, audit_policy);

    rep.all_hold = true;
    for (const auto& row : rep.rows) {
        rep.all_hold &= row.holds;
        rep.worst_gap = std::max(rep.worst_gap, row.gap);
    }
    rep.corollary_holds =
        rep.corollary_mode && rep.worst_gap <= rep.corollary_bound + detail::kAuditSlack;
    return rep;
}

/// Limit-average analogue: |phi1 - phi2| <= eps/2 + eps/2 ||r1||_inf,
/// restricted to policies that are unichain from the start state in
/// both models (others are counted as skipped).
inline RobustnessReport check_average_robustness(const Mdp<double>& m1, const Mdp<double>& m2,
                                                 double eps, int start, int n_stochastic,
                                                 Philox& rng, int jobs = 1) {
    if (!(eps > 0 && eps < 1)) throw std::invalid_argument("eps must be in (0,1)");
    RobustnessReport rep;
    std::tie(rep.a1, rep.a2, rep.a3) = assumptions_hold(m1, m2, eps);
    if (!(rep.a1 && rep.a2 && rep.a3))
        throw std::invalid_argument("robustness assumptions A1-A3 do not hold");

    const double r_norm = to_double(m1.reward_sup_norm());
    rep.bound = eps / 2 + eps / 2 * r_norm;
    rep.corollary_mode = false;
    rep.corollary_bound = eps;
    rep.ratio_delta = to_double(ratio_distance(flatten_kernel(m1), flatten_kernel(m2)));
    rep.binomial_step_holds = binomial_chain_holds(rep.ratio_delta, eps, m1.num_states());

    std::vector<std::pair<StationaryPolicy<double>, bool>> policies;
    for (auto& pi : detail::enumerate_deterministic_policies(m1))
        policies.emplace_back(std::move(pi), true);
    for (int k = 0; k < n_stochastic; ++k)
        policies.emplace_back(detail::random_stochastic_policy(m1, rng), false);

    // A1 makes unichain-from-start agree between the two models
    std::vector<std::pair<StationaryPolicy<double>, bool>> unichain;
    for (auto& [pi, det] : policies) {
        if (is_unichain_from(support_graph(m1, pi), start))
            unichain.emplace_back(std::move(pi), det);
        else
            ++rep.skipped_policies;
    }

    rep.rows.resize(unichain.size());
    auto audit_policy = [&](std::size_t idx) {
        const auto& [pi, deterministic] = unichain[idx];
        PolicyAuditRow row;
        row.policy_id = detail::policy_label(pi, deterministic);
        row.v1 = evaluate_average(m1, pi, start);
        row.v2 = evaluate_average(m2, pi, start);
        row.gap = std::fabs(row.v1 - row.v2);
        row.bound = rep.bound;
        row.holds = row.gap <= row.bound + detail::kAuditSlack;
        rep.rows[idx] = std::move(row);
    };
    detail::parallel_for(unichain.size(), jobs, audit_policy);

    rep.all_hold = true;
    for (const auto& row : rep.rows) {
        rep.all_hold &= row.holds;
        rep.worst_gap = std::max(rep.worst_gap, row.gap);
    }
    return rep;
}

/// Uniform reward shift r -> r - rho. Shifting by -||r||_inf makes all
/// rewards nonnegative, the precondition of the ratio sandwich below.
template <class T>
Mdp<T> shift_rewards(const Mdp<T>& m, const T& rho) {
    Mdp<T> out = m;
    for (auto& row : out.reward)
        for (auto& r : row) r -= rho;
    return out;
}

/// The proof-step sandwich: with delta = d_rat(P1,P2) and both values
/// computed under the shifted (nonnegative, shared) reward function,
///   (1+delta)^-2|S| <= w1/w2 <= (1+delta)^2|S|
/// in the cross-multiplied sense (so w1 = w2 = 0 passes).
inline bool check_w_ratio_bound(const Mdp<double>& m1, const Mdp<double>& m2,
                                const StationaryPolicy<double>& pi, double alpha, int start) {
    check_same_structure(m1, m2);
    const double rho = -to_double(m1.reward_sup_norm());
    const Mdp<double> s1 = shift_rewards(m1, rho);
    Mdp<double> s2 = shift_rewards(m2, rho);
    s2.reward = s1.reward;  // the proof pins the same reward function on both kernels
    const double w1 = evaluate_discounted(s1, pi, alpha, start);
    const double w2 = evaluate_discounted(s2, pi, alpha, start);
    const double delta =
        to_double(ratio_distance(flatten_kernel(m1), flatten_kernel(m2)));
    const double factor = std::pow(1.0 + delta, 2.0 * m1.num_states());
    const double slack = detail::kAuditSlack;
    return w2 <= factor * w1 + slack && w1 <= factor * w2 + slack;
}

}  // namespace mdpkit
