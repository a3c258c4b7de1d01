#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <utility>
#include <vector>

#include "mdpkit/matrix.hpp"
#include "mdpkit/mdp.hpp"

namespace mdpkit {

template <class T>
struct QTable {
    std::vector<std::vector<T>> values;

    int num_states() const { return static_cast<int>(values.size()); }
    T& operator()(int i, int a) { return values[i][a]; }
    const T& operator()(int i, int a) const { return values[i][a]; }

    template <class M>
    static QTable zeros(const M& m) {
        QTable q;
        q.values.resize(m.num_states());
        for (int i = 0; i < m.num_states(); ++i) q.values[i].assign(m.num_actions(i), T(0));
        return q;
    }

    T sup_distance(const QTable& other) const {
        T best(0);
        for (int i = 0; i < num_states(); ++i)
            for (std::size_t a = 0; a < values[i].size(); ++a) {
                const T d = abs_value(T(values[i][a] - other.values[i][a]));
                if (d > best) best = d;
            }
        return best;
    }
};

struct DiscountedSolution {
    double alpha = 0;
    std::vector<double> values;
    QTable<double> q_values;
    StationaryPolicy<double> greedy;
    double residual = 0;
};

struct RecurrentClassDistribution {
    std::vector<int> states;
    std::vector<double> probabilities;
};

struct AverageSolution {
    std::vector<double> gain;
    StationaryPolicy<double> policy;
    std::vector<RecurrentClassDistribution> stationary_distribution;
};

namespace detail {

/// Solves v = r + alpha P v for a chain; |S| <= 512 goes through the
/// direct factorization, larger float systems through the fixed-point
/// iteration (a contraction for alpha < 1).
template <class T>
std::vector<T> chain_discounted_values(const MarkovChain<T>& c, const T& alpha) {
    const int n = c.num_states();
    if constexpr (!scalar_traits<T>::exact) {
        if (n > 512) {
            std::vector<T> v(n, T(0)), next(n);
            double delta = 1;
            while (delta * to_double(alpha) / (1 - to_double(alpha)) > 1e-12) {
                delta = 0;
                for (int i = 0; i < n; ++i) {
                    T acc = c.reward[i];
                    for (int j = 0; j < n; ++j) acc += alpha * c.trans[i][j] * v[j];
                    next[i] = acc;
                    delta = std::max(delta, std::fabs(to_double(T(next[i] - v[i]))));
                }
                v.swap(next);
            }
            return v;
        }
    }
    Matrix<T> a(n, n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) a(i, j) = (i == j ? T(1) : T(0)) - alpha * c.trans[i][j];
    return solve_refined(a, c.reward, 1e-12);
}

}  // namespace detail

/// Expected total alpha-discounted reward of the policy from state i.
template <class T>
T evaluate_discounted(const Mdp<T>& m, const StationaryPolicy<T>& pi, const T& alpha, int i) {
    if (!(alpha > T(0) && alpha < T(1))) throw std::invalid_argument("alpha must be in (0,1)");
    const MarkovChain<T> c = induce_chain(m, pi);
    return detail::chain_discounted_values(c, alpha)[i];
}

/// Value iteration to a sup-norm step of tol*(1-alpha)/(2*alpha), which
/// bounds the value error by tol; Q recomputed from the converged V and
/// V snapped to max_a Q so the solution satisfies its own invariant
/// exactly. Greedy ties break toward the lowest action index.
inline DiscountedSolution optimal_discounted(const Mdp<double>& m, double alpha, double tol) {
    if (!(alpha > 0 && alpha < 1)) throw std::invalid_argument("alpha must be in (0,1)");
    if (!(tol > 0)) throw std::invalid_argument("tol must be positive");
    const int n = m.num_states();
    const double stop = tol * (1 - alpha) / (2 * alpha);
    std::vector<double> v(n, 0.0), next(n);
    double delta = stop + 1;
    while (delta > stop) {
        delta = 0;
        for (int i = 0; i < n; ++i) {
            double best = -std::numeric_limits<double>::infinity();
            for (int a = 0; a < m.num_actions(i); ++a) {
                double acc = m.reward[i][a];
                for (int j = 0; j < n; ++j) acc += alpha * m.trans[i][a][j] * v[j];
                best = std::max(best, acc);
            }
            next[i] = best;
            delta = std::max(delta, std::fabs(next[i] - v[i]));
        }
        v.swap(next);
    }
    DiscountedSolution sol;
    sol.alpha = alpha;
    sol.residual = delta;
    sol.q_values = QTable<double>::zeros(m);
    sol.values.assign(n, 0.0);
    std::vector<int> choice(n, 0);
    std::vector<int> acts(n);
    for (int i = 0; i < n; ++i) {
        acts[i] = m.num_actions(i);
        double best = -std::numeric_limits<double>::infinity();
        for (int a = 0; a < m.num_actions(i); ++a) {
            double acc = m.reward[i][a];
            for (int j = 0; j < n; ++j) acc += alpha * m.trans[i][a][j] * v[j];
            sol.q_values(i, a) = acc;
            if (acc > best) {
                best = acc;
                choice[i] = a;
            }
        }
        sol.values[i] = best;
    }
    sol.greedy = StationaryPolicy<double>::deterministic(choice, acts);
    return sol;
}

/// Expected discounted time MT^alpha_{i,j}: solves the Bellman system
/// y_k = (1-alpha) 1_{k=j} + alpha sum_l delta(k,l) y_l and returns y_i.
template <class T>
T discounted_occupancy(const MarkovChain<T>& c, int i, int j, const T& alpha) {
    if (!(alpha > T(0) && alpha < T(1))) throw std::invalid_argument("alpha must be in (0,1)");
    const int n = c.num_states();
    Matrix<T> a(n, n);
    std::vector<T> b(n, T(0));
    for (int k = 0; k < n; ++k)
        for (int l = 0; l < n; ++l) a(k, l) = (k == l ? T(1) : T(0)) - alpha * c.trans[k][l];
    b[j] = T(1) - alpha;
    return solve_refined(a, b, 1e-12)[i];
}

/// Whole occupancy row MT^alpha_{i,.} with one transposed solve.
template <class T>
std::vector<T> discounted_occupancy_row(const MarkovChain<T>& c, int i, const T& alpha) {
    if (!(alpha > T(0) && alpha < T(1))) throw std::invalid_argument("alpha must be in (0,1)");
    const int n = c.num_states();
    Matrix<T> at(n, n);
    for (int k = 0; k < n; ++k)
        for (int l = 0; l < n; ++l) at(l, k) = (k == l ? T(1) : T(0)) - alpha * c.trans[k][l];
    std::vector<T> b(n, T(0));
    b[i] = T(1) - alpha;
    return solve_refined(at, b, 1e-12);
}

/// Stationary distribution of an irreducible class (member list) of a
/// chain: solve mu^T P = mu^T with the normalization sum mu = 1.
template <class T>
std::vector<T> stationary_distribution(const MarkovChain<T>& c, const std::vector<int>& members) {
    const int k = static_cast<int>(members.size());
    Matrix<T> a(k, k);
    std::vector<T> b(k, T(0));
    for (int row = 0; row < k; ++row) {
        if (row == k - 1) {
            for (int col = 0; col < k; ++col) a(row, col) = T(1);
            b[row] = T(1);
        } else {
            for (int col = 0; col < k; ++col)
                a(row, col) =
                    c.trans[members[col]][members[row]] - (row == col ? T(1) : T(0));
            b[row] = T(0);
        }
    }
    return solve_refined(a, b, 1e-13);
}

/// Limit-average value of a policy that is unichain from i: the
/// stationary average of the single reachable closed class. Multichain
/// policies are refused.
template <class T>
T evaluate_average(const Mdp<T>& m, const StationaryPolicy<T>& pi, int i) {
    const SupportGraph g = support_graph(m, pi);
    const std::vector<bool> reach = reachable_from(g, i);
    const auto classes = closed_classes(g, reach);
    if (classes.size() != 1)
        throw std::invalid_argument("policy is not unichain from the start state");
    const MarkovChain<T> c = induce_chain(m, pi);
    const std::vector<T> mu = stationary_distribution(c, classes[0]);
    T phi(0);
    for (std::size_t k = 0; k < classes[0].size(); ++k) phi += mu[k] * c.reward[classes[0][k]];
    return phi;
}

namespace detail {

/// Gain and bias of a (possibly multichain) deterministic-policy chain:
/// per-class stationary gains, harmonic extension to transient states,
/// then the bias system with one reference state pinned per class.
struct ChainGainBias {
    std::vector<double> gain;
    std::vector<double> bias;
    std::vector<std::vector<int>> classes;
    std::vector<std::vector<double>> stationary;
};

inline ChainGainBias evaluate_chain_gain_bias(const MarkovChain<double>& c) {
    const int n = c.num_states();
    ChainGainBias out;
    out.gain.assign(n, 0.0);
    out.bias.assign(n, 0.0);
    const SupportGraph g = chain_support_graph(c);
    std::vector<bool> all(n, true);
    out.classes = closed_classes(g, all);
    std::vector<int> in_class(n, -1);
    for (std::size_t ci = 0; ci < out.classes.size(); ++ci)
        for (int s : out.classes[ci]) in_class[s] = static_cast<int>(ci);

    for (const auto& members : out.classes) {
        const std::vector<double> mu = stationary_distribution(c, members);
        double gc = 0;
        for (std::size_t k = 0; k < members.size(); ++k) gc += mu[k] * c.reward[members[k]];
        for (int s : members) out.gain[s] = gc;
        out.stationary.push_back(mu);
    }

    std::vector<int> transient;
    for (int i = 0; i < n; ++i)
        if (in_class[i] < 0) transient.push_back(i);
    if (!transient.empty()) {
        const int t = static_cast<int>(transient.size());
        Matrix<double> a(t, t);
        std::vector<double> b(t, 0.0);
        for (int r = 0; r < t; ++r) {
            for (int col = 0; col < t; ++col)
                a(r, col) = (r == col ? 1.0 : 0.0) - c.trans[transient[r]][transient[col]];
            double acc = 0;
            for (int j = 0; j < n; ++j)
                if (in_class[j] >= 0) acc += c.trans[transient[r]][j] * out.gain[j];
            b[r] = acc;
        }
        const std::vector<double> gt = solve_refined(a, b, 1e-12);
        for (int r = 0; r < t; ++r) out.gain[transient[r]] = gt[r];
    }

    // bias: (I - P) h = r - g with h(ref) = 0 on one state per class
    Matrix<double> a(n, n);
    std::vector<double> b(n, 0.0);
    std::vector<bool> pinned(out.classes.size(), false);
    for (int i = 0; i < n; ++i) {
        const int ci = in_class[i];
        if (ci >= 0 && !pinned[ci]) {
            pinned[ci] = true;
            a(i, i) = 1.0;
            b[i] = 0.0;
            continue;
        }
        for (int j = 0; j < n; ++j) a(i, j) = (i == j ? 1.0 : 0.0) - c.trans[i][j];
        b[i] = c.reward[i] - out.gain[i];
    }
    out.bias = solve_refined(a, b, 1e-11);
    return out;
}

}  // namespace detail

/// Optimal limit-average gain and a deterministic unichain policy for a
/// communicating MDP, by gain/bias policy iteration with lowest-index
/// tie-breaking. If the final optimal policy is multichain (every class
/// then carries the same optimal gain), states outside the chosen class
/// are redirected along support-graph shortest paths toward it, which
/// keeps the gain and makes the policy unichain.
inline AverageSolution optimal_average(const Mdp<double>& m) {
    if (!is_communicating(m)) throw std::invalid_argument("MDP is not communicating");
    const int n = m.num_states();
    const double tol = 1e-10;
    std::vector<int> acts(n);
    std::vector<int> choice(n, 0);
    for (int i = 0; i < n; ++i) {
        acts[i] = m.num_actions(i);
        double best = -std::numeric_limits<double>::infinity();
        for (int a = 0; a < m.num_actions(i); ++a)
            if (m.reward[i][a] > best) {
                best = m.reward[i][a];
                choice[i] = a;
            }
    }

    detail::ChainGainBias eval;
    const int max_iters = 512;
    int iter = 0;
    for (; iter < max_iters; ++iter) {
        const auto pol = StationaryPolicy<double>::deterministic(choice, acts);
        eval = detail::evaluate_chain_gain_bias(induce_chain(m, pol));
        bool changed = false;
        for (int i = 0; i < n; ++i) {
            auto gain_of = [&](int a) {
                double acc = 0;
                for (int j = 0; j < n; ++j) acc += m.trans[i][a][j] * eval.gain[j];
                return acc;
            };
            auto bias_of = [&](int a) {
                double acc = m.reward[i][a] - eval.gain[i];
                for (int j = 0; j < n; ++j) acc += m.trans[i][a][j] * eval.bias[j];
                return acc;
            };
            double best_gain = -std::numeric_limits<double>::infinity();
            for (int a = 0; a < m.num_actions(i); ++a) best_gain = std::max(best_gain, gain_of(a));
            if (gain_of(choice[i]) < best_gain - tol) {
                for (int a = 0; a < m.num_actions(i); ++a)
                    if (gain_of(a) > best_gain - tol) {
                        choice[i] = a;
                        break;
                    }
                changed = true;
                continue;
            }
            // among gain-optimal actions, improve the bias
            double best_bias = -std::numeric_limits<double>::infinity();
            for (int a = 0; a < m.num_actions(i); ++a)
                if (gain_of(a) >= best_gain - tol) best_bias = std::max(best_bias, bias_of(a));
            if (bias_of(choice[i]) < best_bias - tol) {
                for (int a = 0; a < m.num_actions(i); ++a)
                    if (gain_of(a) >= best_gain - tol && bias_of(a) >= best_bias - tol) {
                        choice[i] = a;
                        break;  // lowest index wins
                    }
                changed = true;
            }
        }
        if (!changed) break;
    }
    if (iter == max_iters) throw std::runtime_error("policy iteration failed to terminate");

    // unichain patch: keep the first optimal class, point everything else at it
    auto pol = StationaryPolicy<double>::deterministic(choice, acts);
    auto chain = induce_chain(m, pol);
    auto classes = closed_classes(chain_support_graph(chain),
                                  std::vector<bool>(static_cast<std::size_t>(n), true));
    if (classes.size() > 1) {
        const std::vector<int>& target = classes[0];
        const SupportGraph all = union_support_graph(m);
        std::vector<int> dist(n, -1);
        std::vector<int> queue;
        for (int s : target) {
            dist[s] = 0;
            queue.push_back(s);
        }
        for (std::size_t qi = 0; qi < queue.size(); ++qi) {
            const int v = queue[qi];
            for (int u = 0; u < n; ++u) {
                if (dist[u] >= 0) continue;
                if (all.has_edge(u, v)) {
                    dist[u] = dist[v] + 1;
                    queue.push_back(u);
                }
            }
        }
        std::vector<bool> keep(n, false);
        for (int s : target) keep[s] = true;
        for (int i = 0; i < n; ++i) {
            if (keep[i]) continue;
            for (int a = 0; a < m.num_actions(i); ++a) {
                bool closer = false;
                for (int j = 0; j < n; ++j)
                    if (m.trans[i][a][j] > 0 && dist[j] == dist[i] - 1) closer = true;
                if (closer) {
                    choice[i] = a;
                    break;
                }
            }
        }
        pol = StationaryPolicy<double>::deterministic(choice, acts);
        chain = induce_chain(m, pol);
        eval = detail::evaluate_chain_gain_bias(chain);
    }

    AverageSolution sol;
    sol.gain = eval.gain;
    sol.policy = pol;
    const auto final_classes = closed_classes(
        chain_support_graph(chain), std::vector<bool>(static_cast<std::size_t>(n), true));
    for (const auto& members : final_classes) {
        RecurrentClassDistribution rc;
        rc.states = members;
        rc.probabilities = stationary_distribution(chain, members);
        sol.stationary_distribution.push_back(std::move(rc));
    }
    return sol;
}

/// (alpha, (1-alpha) v_i^alpha) along a sweep of discount factors rising
/// toward 1; converges to the limit-average value for unichain policies.
inline std::vector<std::pair<double, double>> mertens_neyman_sweep(
    const Mdp<double>& m, const StationaryPolicy<double>& pi, int i,
    const std::vector<double>& alphas) {
    for (std::size_t k = 0; k < alphas.size(); ++k) {
        if (!(alphas[k] > 0 && alphas[k] < 1))
            throw std::invalid_argument("alphas must lie in (0,1)");
        if (k > 0 && alphas[k] <= alphas[k - 1])
            throw std::invalid_argument("alphas must be strictly increasing");
    }
    std::vector<std::pair<double, double>> out;
    out.reserve(alphas.size());
    for (double a : alphas) out.emplace_back(a, (1 - a) * evaluate_discounted(m, pi, a, i));
    return out;
}

}  // namespace mdpkit
