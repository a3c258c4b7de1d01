#pragma once

#include <algorithm>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "mdpkit/rng.hpp"
#include "mdpkit/scalar.hpp"

namespace mdpkit {

/// Finite tabular MDP. States and actions are dense 0-based indices with
/// an optional name table; `trans[i][a][j]` is the probability of moving
/// from i to j under action a, `reward[i][a]` the immediate reward.
template <class T>
struct Mdp {
    std::vector<std::string> state_names;
    std::vector<std::vector<std::string>> action_names;
    std::vector<std::vector<std::vector<T>>> trans;
    std::vector<std::vector<T>> reward;
    std::optional<T> p_min;
    std::optional<T> reward_bound;

    int num_states() const { return static_cast<int>(trans.size()); }
    int num_actions(int i) const { return static_cast<int>(trans[i].size()); }
    int max_actions() const {
        int m = 0;
        for (int i = 0; i < num_states(); ++i) m = std::max(m, num_actions(i));
        return m;
    }

    std::string state_name(int i) const {
        if (i < static_cast<int>(state_names.size()) && !state_names[i].empty())
            return state_names[i];
        return "s" + std::to_string(i);
    }
    std::string action_name(int i, int a) const {
        if (i < static_cast<int>(action_names.size()) &&
            a < static_cast<int>(action_names[i].size()) && !action_names[i][a].empty())
            return action_names[i][a];
        return "a" + std::to_string(a);
    }

    /// max_i max_a |r_i(a)|.
    T reward_sup_norm() const {
        T best(0);
        for (const auto& row : reward)
            for (const auto& r : row)
                if (abs_value(r) > best) best = abs_value(r);
        return best;
    }
};

/// Per-state distribution over available actions.
template <class T>
struct StationaryPolicy {
    std::vector<std::vector<T>> weights;

    int num_states() const { return static_cast<int>(weights.size()); }

    static StationaryPolicy deterministic(const std::vector<int>& choice,
                                          const std::vector<int>& actions_per_state) {
        StationaryPolicy p;
        p.weights.resize(choice.size());
        for (std::size_t i = 0; i < choice.size(); ++i) {
            p.weights[i].assign(actions_per_state[i], T(0));
            p.weights[i].at(choice[i]) = T(1);
        }
        return p;
    }

    template <class M>
    static StationaryPolicy uniform(const M& m) {
        StationaryPolicy p;
        p.weights.resize(m.num_states());
        for (int i = 0; i < m.num_states(); ++i)
            p.weights[i].assign(m.num_actions(i), T(1) / T(m.num_actions(i)));
        return p;
    }

    /// True when every weight is 0 or 1.
    bool is_deterministic() const {
        for (const auto& row : weights)
            for (const auto& w : row)
                if (w != T(0) && w != T(1)) return false;
        return true;
    }
};

/// Markov chain with per-state expected one-step reward.
template <class T>
struct MarkovChain {
    std::vector<std::vector<T>> trans;
    std::vector<T> reward;

    int num_states() const { return static_cast<int>(trans.size()); }
};

/// Directed graph of the transitions that have positive probability
/// under a policy.
struct SupportGraph {
    std::vector<std::vector<int>> adj;

    int num_vertices() const { return static_cast<int>(adj.size()); }
    bool has_edge(int i, int j) const {
        return std::find(adj[i].begin(), adj[i].end(), j) != adj[i].end();
    }
};

/// Recorded interaction: consecutive records chain, the seed/stream used
/// to generate the run is kept for bit-reproducibility.
struct Trajectory {
    struct Step {
        int state;
        int action;
        double reward;
        int next;
    };
    int start = 0;
    std::vector<Step> steps;
    std::uint64_t seed = 0;
    std::uint64_t stream = 0;
};

/// Known bounds on the hidden model: a floor for nonzero transition
/// probabilities and a reward magnitude bound.
struct PriorKnowledge {
    Rational p_min;
    Rational reward_bound;
};

struct ValidationReport {
    std::vector<std::string> violations;
    bool ok() const { return violations.empty(); }
};

/// Reports every structural violation: empty action sets, shape
/// mismatches, out-of-range probabilities and row sums off by more than
/// the mode tolerance. Empty report iff the model is well-formed.
template <class T>
ValidationReport validate(const Mdp<T>& m) {
    ValidationReport rep;
    const int n = m.num_states();
    const T tol = scalar_traits<T>::tolerance();
    if (static_cast<int>(m.reward.size()) != n)
        rep.violations.push_back("reward table has wrong number of states");
    for (int i = 0; i < n; ++i) {
        if (m.num_actions(i) == 0) {
            rep.violations.push_back("state " + m.state_name(i) + ": empty action set");
            continue;
        }
        if (i < static_cast<int>(m.reward.size()) &&
            m.reward[i].size() != m.trans[i].size())
            rep.violations.push_back("state " + m.state_name(i) +
                                     ": reward/transition action count mismatch");
        for (int a = 0; a < m.num_actions(i); ++a) {
            const auto& row = m.trans[i][a];
            if (static_cast<int>(row.size()) != n) {
                rep.violations.push_back("state " + m.state_name(i) + ", action " +
                                         m.action_name(i, a) + ": row has wrong length");
                continue;
            }
            T sum(0);
            bool bad_entry = false;
            for (const T& p : row) {
                if (p < T(0) || p > T(1)) bad_entry = true;
                sum += p;
            }
            if (bad_entry)
                rep.violations.push_back("state " + m.state_name(i) + ", action " +
                                         m.action_name(i, a) + ": probability outside [0,1]");
            if (abs_value(T(sum - T(1))) > tol)
                rep.violations.push_back("state " + m.state_name(i) + ", action " +
                                         m.action_name(i, a) + ": row sums to " +
                                         std::to_string(to_double(sum)));
        }
    }
    return rep;
}

template <class T>
void check_policy_shape(const Mdp<T>& m, const StationaryPolicy<T>& pi) {
    if (pi.num_states() != m.num_states())
        throw std::invalid_argument("policy defined on a different state set");
    for (int i = 0; i < m.num_states(); ++i)
        if (pi.weights[i].size() != static_cast<std::size_t>(m.num_actions(i)))
            throw std::invalid_argument("policy references actions outside A(" +
                                        m.state_name(i) + ")");
}

/// delta(i,j) = sum_a pi_ia p_ij(a); reward(i) = sum_a pi_ia r_i(a).
template <class T>
MarkovChain<T> induce_chain(const Mdp<T>& m, const StationaryPolicy<T>& pi) {
    check_policy_shape(m, pi);
    const int n = m.num_states();
    MarkovChain<T> c;
    c.trans.assign(n, std::vector<T>(n, T(0)));
    c.reward.assign(n, T(0));
    for (int i = 0; i < n; ++i) {
        for (int a = 0; a < m.num_actions(i); ++a) {
            const T w = pi.weights[i][a];
            if (w == T(0)) continue;
            for (int j = 0; j < n; ++j) c.trans[i][j] += w * m.trans[i][a][j];
            c.reward[i] += w * m.reward[i][a];
        }
    }
    return c;
}

/// Edge (i,j) iff p_ij(a) * pi_ia > 0 for some available a.
template <class T>
SupportGraph support_graph(const Mdp<T>& m, const StationaryPolicy<T>& pi) {
    check_policy_shape(m, pi);
    const int n = m.num_states();
    SupportGraph g;
    g.adj.resize(n);
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) {
            for (int a = 0; a < m.num_actions(i); ++a) {
                if (pi.weights[i][a] > T(0) && m.trans[i][a][j] > T(0)) {
                    g.adj[i].push_back(j);
                    break;
                }
            }
        }
    }
    return g;
}

/// Union support over all actions (edge iff some action moves i to j).
template <class T>
SupportGraph union_support_graph(const Mdp<T>& m) {
    const int n = m.num_states();
    SupportGraph g;
    g.adj.resize(n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
            for (int a = 0; a < m.num_actions(i); ++a)
                if (m.trans[i][a][j] > T(0)) {
                    g.adj[i].push_back(j);
                    break;
                }
    return g;
}

/// Kernel support of a chain.
template <class T>
SupportGraph chain_support_graph(const MarkovChain<T>& c) {
    const int n = c.num_states();
    SupportGraph g;
    g.adj.resize(n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
            if (c.trans[i][j] > T(0)) g.adj[i].push_back(j);
    return g;
}

inline std::vector<bool> reachable_from(const SupportGraph& g, int start) {
    std::vector<bool> seen(g.num_vertices(), false);
    std::vector<int> stack{start};
    seen[start] = true;
    while (!stack.empty()) {
        const int v = stack.back();
        stack.pop_back();
        for (int w : g.adj[v])
            if (!seen[w]) {
                seen[w] = true;
                stack.push_back(w);
            }
    }
    return seen;
}

/// Tarjan SCC. Returns a component id per vertex; ids are in reverse
/// topological order (component 0 has no edges into later components).
inline std::vector<int> strongly_connected_components(const SupportGraph& g, int& count) {
    const int n = g.num_vertices();
    std::vector<int> index(n, -1), low(n, 0), comp(n, -1);
    std::vector<bool> on_stack(n, false);
    std::vector<int> stack;
    int next_index = 0;
    count = 0;

    struct Frame {
        int v;
        std::size_t child;
    };
    for (int root = 0; root < n; ++root) {
        if (index[root] != -1) continue;
        std::vector<Frame> call{{root, 0}};
        index[root] = low[root] = next_index++;
        stack.push_back(root);
        on_stack[root] = true;
        while (!call.empty()) {
            Frame& f = call.back();
            if (f.child < g.adj[f.v].size()) {
                const int w = g.adj[f.v][f.child++];
                if (index[w] == -1) {
                    index[w] = low[w] = next_index++;
                    stack.push_back(w);
                    on_stack[w] = true;
                    call.push_back({w, 0});
                } else if (on_stack[w]) {
                    low[f.v] = std::min(low[f.v], index[w]);
                }
            } else {
                if (low[f.v] == index[f.v]) {
                    while (true) {
                        const int w = stack.back();
                        stack.pop_back();
                        on_stack[w] = false;
                        comp[w] = count;
                        if (w == f.v) break;
                    }
                    ++count;
                }
                const int v = f.v;
                call.pop_back();
                if (!call.empty()) low[call.back().v] = std::min(low[call.back().v], low[v]);
            }
        }
    }
    return comp;
}

/// Closed SCCs (no edge leaving the component), restricted to a vertex
/// mask. Each returned class lists its member vertices in index order.
inline std::vector<std::vector<int>> closed_classes(const SupportGraph& g,
                                                    const std::vector<bool>& mask) {
    const int n = g.num_vertices();
    SupportGraph sub;
    sub.adj.resize(n);
    for (int i = 0; i < n; ++i) {
        if (!mask[i]) continue;
        for (int j : g.adj[i])
            if (mask[j]) sub.adj[i].push_back(j);
    }
    int count = 0;
    const std::vector<int> comp = strongly_connected_components(sub, count);
    std::vector<bool> closed(count, true), in_mask(count, false);
    std::vector<bool> nontrivial(count, false);
    std::vector<int> size(count, 0);
    for (int i = 0; i < n; ++i) {
        if (!mask[i]) continue;
        in_mask[comp[i]] = true;
        ++size[comp[i]];
        for (int j : sub.adj[i]) {
            if (comp[j] != comp[i])
                closed[comp[i]] = false;
            else
                nontrivial[comp[i]] = true;
        }
    }
    std::vector<std::vector<int>> classes;
    for (int c = 0; c < count; ++c) {
        if (!in_mask[c] || !closed[c]) continue;
        // a closed class of a stochastic support graph always has edges;
        // keep the explicit check for arbitrary graphs
        if (!nontrivial[c] && size[c] <= 1) {
            bool has_self = false;
            for (int i = 0; i < n; ++i)
                if (mask[i] && comp[i] == c)
                    for (int j : sub.adj[i]) has_self |= (j == i);
            if (!has_self) continue;
        }
        std::vector<int> members;
        for (int i = 0; i < n; ++i)
            if (mask[i] && comp[i] == c) members.push_back(i);
        classes.push_back(std::move(members));
    }
    return classes;
}

/// True iff the subgraph reachable from i has exactly one maximal
/// nontrivial strongly connected component.
inline bool is_unichain_from(const SupportGraph& g, int i) {
    if (i < 0 || i >= g.num_vertices()) throw std::invalid_argument("unknown state id");
    const std::vector<bool> reach = reachable_from(g, i);
    return closed_classes(g, reach).size() == 1;
}

/// Maximal-end-component style check: for a full-support end component
/// over all of S, communicating reduces to strong connectivity of the
/// union support graph (any simple path can be realized by one
/// deterministic stationary policy since it never revisits a state).
template <class T>
bool is_communicating(const Mdp<T>& m) {
    const SupportGraph g = union_support_graph(m);
    int count = 0;
    strongly_connected_components(g, count);
    return count == 1;
}

struct StepSample {
    int action;
    double reward;
    int next;
};

/// Draws a ~ pi(i,.), then j ~ p_i.(a); advances the caller's rng.
inline StepSample sample_step(const Mdp<double>& m, const StationaryPolicy<double>& pi, int i,
                              Philox& rng) {
    const auto& w = pi.weights[i];
    double u = rng.uniform01();
    int a = 0;
    double acc = 0;
    for (std::size_t k = 0; k < w.size(); ++k) {
        acc += w[k];
        if (u < acc) {
            a = static_cast<int>(k);
            break;
        }
        a = static_cast<int>(k);
    }
    const auto& row = m.trans[i][a];
    u = rng.uniform01();
    acc = 0;
    int j = 0;
    for (std::size_t k = 0; k < row.size(); ++k) {
        acc += row[k];
        if (u < acc) {
            j = static_cast<int>(k);
            break;
        }
        j = static_cast<int>(k);
    }
    return {a, m.reward[i][a], j};
}

/// Simulates `steps` transitions from `start` under `pi`.
inline Trajectory simulate(const Mdp<double>& m, const StationaryPolicy<double>& pi, int start,
                           std::int64_t steps, Philox& rng) {
    Trajectory traj;
    traj.start = start;
    traj.seed = rng.seed();
    traj.stream = rng.stream();
    traj.steps.reserve(static_cast<std::size_t>(steps));
    int state = start;
    for (std::int64_t t = 0; t < steps; ++t) {
        const StepSample s = sample_step(m, pi, state, rng);
        traj.steps.push_back({state, s.action, s.reward, s.next});
        state = s.next;
    }
    return traj;
}

}  // namespace mdpkit
