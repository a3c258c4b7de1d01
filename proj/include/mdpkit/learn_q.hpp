#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <stdexcept>
#include <unordered_map>
#include <vector>

#include "mdpkit/mdp.hpp"
#include "mdpkit/solvers.hpp"

namespace mdpkit {

/// Learning-rate rule gamma_t. Built-ins: per-pair harmonic (1/k on the
/// k-th visit of the pair, so the pair's running Q is a sample average)
/// and global polynomial t^-omega with omega in (0.5, 1].
struct LearningRateSchedule {
    enum class Kind { harmonic_per_pair, polynomial_global };
    Kind kind = Kind::harmonic_per_pair;
    double omega = 1.0;

    static LearningRateSchedule harmonic() { return {Kind::harmonic_per_pair, 1.0}; }
    static LearningRateSchedule polynomial(double omega) {
        if (!(omega > 0.5 && omega <= 1.0))
            throw std::invalid_argument("omega must lie in (0.5, 1]");
        return {Kind::polynomial_global, omega};
    }

    double gamma(std::int64_t t, std::int64_t pair_visit) const {
        switch (kind) {
            case Kind::harmonic_per_pair:
                return 1.0 / static_cast<double>(pair_visit);
            case Kind::polynomial_global:
                return std::pow(static_cast<double>(t), -omega);
        }
        return 0;
    }

    /// Exact rate for rational replays; only the harmonic rule and the
    /// polynomial rule at omega = 1 have rational values.
    Rational gamma_rational(std::int64_t t, std::int64_t pair_visit) const {
        switch (kind) {
            case Kind::harmonic_per_pair:
                return Rational(1, pair_visit);
            case Kind::polynomial_global:
                if (omega != 1.0)
                    throw std::invalid_argument("rational replay needs omega = 1");
                return Rational(1, t);
        }
        return Rational(0);
    }
};

template <class T>
struct QLearningState {
    QTable<T> q;
    std::vector<std::vector<std::int64_t>> visits;
    std::int64_t t = 0;  // completed updates; equals the summed visit counts

    template <class M>
    static QLearningState fresh(const M& m, QTable<T> q1) {
        QLearningState s;
        s.q = std::move(q1);
        s.visits.resize(m.num_states());
        for (int i = 0; i < m.num_states(); ++i) s.visits[i].assign(m.num_actions(i), 0);
        return s;
    }
};

/// Lowest-index argmax of a Q row.
template <class T>
int greedy_action(const QTable<T>& q, int i) {
    const auto& row = q.values.at(i);
    int best = 0;
    for (std::size_t a = 1; a < row.size(); ++a)
        if (row[a] > row[best]) best = static_cast<int>(a);
    return best;
}

/// One Q update: only (i,a) changes, to
///   (1-gamma) Q(i,a) + gamma (r + alpha max_b Q(j,b)).
/// gamma = 1 is allowed (full replacement; the harmonic rule starts
/// there), gamma = 0 is a no-op.
template <class T>
void q_update(QLearningState<T>& s, int i, int a, const T& r, int j, const T& gamma,
              const T& alpha) {
    if (gamma < T(0) || gamma > T(1)) throw std::invalid_argument("gamma must lie in [0,1]");
    if (!(alpha > T(0) && alpha < T(1))) throw std::invalid_argument("alpha must lie in (0,1)");
    const auto& row = s.q.values[j];
    T best = row[0];
    for (std::size_t b = 1; b < row.size(); ++b)
        if (row[b] > best) best = row[b];
    s.q.values[i][a] = (T(1) - gamma) * s.q.values[i][a] + gamma * (r + alpha * best);
    ++s.visits[i][a];
    ++s.t;
}

enum class ExplorationMode { greedy, epsilon_greedy };

struct QLearnOptions {
    double alpha = 0.9;
    LearningRateSchedule schedule = LearningRateSchedule::harmonic();
    ExplorationMode mode = ExplorationMode::epsilon_greedy;
    double epsilon_c = 0;  // <= 0 means the default 10 |S| |A|
    std::int64_t steps = 100000;
    int start = 0;
    std::optional<QTable<double>> q1;
};

struct QLearnResult {
    std::vector<std::pair<std::int64_t, QTable<double>>> snapshots;  // Q^(t) at checkpoints
    QLearningState<double> final_state;
    Trajectory trajectory;
};

/// Online Q-learning. Pure-greedy mode follows argmax Q exactly;
/// epsilon-greedy explores uniformly with probability min(1, c/t),
/// which keeps every pair visited infinitely often on recurrent
/// environments. Snapshots are taken at geometric checkpoints.
inline QLearnResult run_q_learning(const Mdp<double>& env, const QLearnOptions& opt, Philox& rng) {
    if (opt.steps < 1) throw std::invalid_argument("steps must be positive");
    const int n = env.num_states();
    double c = opt.epsilon_c;
    if (c <= 0) {
        std::int64_t pairs = 0;
        for (int i = 0; i < n; ++i) pairs += env.num_actions(i);
        c = 10.0 * static_cast<double>(pairs);  // 10 |S| |A|
    }
    QLearnResult res;
    res.trajectory.start = opt.start;
    res.trajectory.seed = rng.seed();
    res.trajectory.stream = rng.stream();
    QLearningState<double> s =
        QLearningState<double>::fresh(env, opt.q1 ? *opt.q1 : QTable<double>::zeros(env));

    std::int64_t next_snapshot = 1;
    int state = opt.start;
    for (std::int64_t t = 1; t <= opt.steps; ++t) {
        if (t == next_snapshot) {
            res.snapshots.emplace_back(t, s.q);
            next_snapshot *= 2;
        }
        int a = greedy_action(s.q, state);
        if (opt.mode == ExplorationMode::epsilon_greedy) {
            const double eps_t = std::min(1.0, c / static_cast<double>(t));
            if (rng.uniform01() < eps_t)
                a = static_cast<int>(rng.below(static_cast<std::uint64_t>(env.num_actions(state))));
        }
        const auto& row = env.trans[state][a];
        const double u = rng.uniform01();
        double acc = 0;
        int j = n - 1;
        for (int k = 0; k < n; ++k) {
            acc += row[k];
            if (u < acc) {
                j = k;
                break;
            }
        }
        const double r = env.reward[state][a];
        const double gamma = opt.schedule.gamma(t, s.visits[state][a] + 1);
        res.trajectory.steps.push_back({state, a, r, j});
        q_update(s, state, a, r, j, gamma, opt.alpha);
        state = j;
    }
    res.snapshots.emplace_back(opt.steps + 1, s.q);
    res.final_state = std::move(s);
    return res;
}

/// Finite truncation of the action-replay process built from a recorded
/// trajectory: levels 1..n over the base states plus the sink. The
/// occurrence list of a pair is global; level t uses the prefix with
/// occurrence time < t. The transition weights are the telescoping
/// case table
///   gamma_{t_k}, gamma_{t_{k-1}}(1-gamma_{t_k}), ...,
///   prod (1-gamma_{t_l}) to the sink,
/// which sums to 1 exactly.
template <class T>
struct ArpModel {
    struct Occurrence {
        std::int64_t time;  // 1-based step index in the trajectory
        int next_state;
        T gamma;
    };
    int n_states = 0;
    std::int64_t levels = 0;
    std::vector<std::vector<std::vector<Occurrence>>> occurrences;  // [i][a], time-ascending
    std::vector<std::vector<T>> rewards;                            // r_i(a), from the trajectory
    std::vector<std::vector<bool>> reward_known;
    QTable<T> q1;

    int num_actions(int i) const { return static_cast<int>(occurrences[i].size()); }

    struct Transition {
        std::int64_t target_level;  // occurrence time; the target state lives at this level
        int target_state;
        T weight;
    };
    struct Row {
        std::vector<Transition> entries;  // newest occurrence first
        T sink_mass;
    };

    /// Case-table distribution out of (<i, level>, a).
    Row row(int i, int a, std::int64_t level) const {
        Row r;
        r.sink_mass = T(1);
        const auto& occ = occurrences[i][a];
        // occurrences strictly before `level`, newest first
        std::size_t count = 0;
        while (count < occ.size() && occ[count].time < level) ++count;
        T survive(1);
        for (std::size_t idx = count; idx-- > 0;) {
            const auto& o = occ[idx];
            r.entries.push_back({o.time, o.next_state, o.gamma * survive});
            survive *= (T(1) - o.gamma);
        }
        r.sink_mass = survive;
        return r;
    }
};

/// Builds the truncated replay process from a trajectory and rate rule.
/// level_n may be at most trajectory length + 1.
template <class T>
ArpModel<T> build_arp(const Trajectory& traj, const LearningRateSchedule& schedule,
                      const QTable<T>& q1, std::int64_t level_n,
                      const std::vector<int>& actions_per_state) {
    if (level_n < 1 || level_n > static_cast<std::int64_t>(traj.steps.size()) + 1)
        throw std::invalid_argument("level must lie in [1, trajectory length + 1]");
    ArpModel<T> arp;
    arp.n_states = static_cast<int>(actions_per_state.size());
    arp.levels = level_n;
    arp.q1 = q1;
    arp.occurrences.resize(arp.n_states);
    arp.rewards.resize(arp.n_states);
    arp.reward_known.resize(arp.n_states);
    for (int i = 0; i < arp.n_states; ++i) {
        arp.occurrences[i].resize(actions_per_state[i]);
        arp.rewards[i].assign(actions_per_state[i], T(0));
        arp.reward_known[i].assign(actions_per_state[i], false);
    }
    std::vector<std::vector<std::int64_t>> visit_count(arp.n_states);
    for (int i = 0; i < arp.n_states; ++i) visit_count[i].assign(actions_per_state[i], 0);
    for (std::size_t k = 0; k < traj.steps.size(); ++k) {
        const auto& s = traj.steps[k];
        const std::int64_t t = static_cast<std::int64_t>(k) + 1;
        const std::int64_t visit = ++visit_count[s.state][s.action];
        T gamma;
        if constexpr (scalar_traits<T>::exact)
            gamma = schedule.gamma_rational(t, visit);
        else
            gamma = schedule.gamma(t, visit);
        if (t < level_n)
            arp.occurrences[s.state][s.action].push_back({t, s.next, gamma});
        if (!arp.reward_known[s.state][s.action]) {
            arp.rewards[s.state][s.action] = T(s.reward);
            arp.reward_known[s.state][s.action] = true;
        }
    }
    return arp;
}

/// Optimal Q-values of the replay process, level by level. Transitions
/// strictly decrease the level (or hit the sink), so one bottom-up pass
/// is exact: level 1 rows are all-sink and evaluate to Q^(1). Returns
/// the per-level tables, index l-1 holding level l.
template <class T>
std::vector<QTable<T>> solve_arp(const ArpModel<T>& arp, const T& alpha) {
    std::vector<QTable<T>> levels;
    levels.reserve(static_cast<std::size_t>(arp.levels));
    std::vector<std::vector<T>> level_value;  // V at each solved level
    for (std::int64_t lvl = 1; lvl <= arp.levels; ++lvl) {
        QTable<T> q;
        q.values.resize(arp.n_states);
        std::vector<T> v(arp.n_states);
        for (int i = 0; i < arp.n_states; ++i) {
            q.values[i].resize(arp.num_actions(i));
            for (int a = 0; a < arp.num_actions(i); ++a) {
                const auto row = arp.row(i, a, lvl);
                T acc = row.sink_mass * arp.q1(i, a);
                for (const auto& tr : row.entries) {
                    if (tr.target_level >= lvl)
                        throw std::runtime_error("replay process level order violated");
                    acc += tr.weight *
                           (arp.rewards[i][a] +
                            alpha * level_value[static_cast<std::size_t>(tr.target_level - 1)]
                                               [tr.target_state]);
                }
                q.values[i][a] = acc;
            }
            T best = q.values[i][0];
            for (int a = 1; a < arp.num_actions(i); ++a)
                if (q.values[i][a] > best) best = q.values[i][a];
            v[i] = best;
        }
        levels.push_back(std::move(q));
        level_value.push_back(std::move(v));
    }
    return levels;
}

/// Level-marginalized kernel slice at time t: P_t(i,a,j) sums the
/// weights of all occurrences landing in j; the deficit (sink mass) is
/// the telescoped product of (1-gamma). r_t is defined once the pair
/// has occurred.
template <class T>
struct ArpProjection {
    std::vector<std::vector<std::vector<T>>> kernel;  // [i][a][j]
    std::vector<std::vector<T>> sink_mass;            // [i][a]
    std::vector<std::vector<std::optional<T>>> rewards;
};

template <class T>
ArpProjection<T> arp_projection(const ArpModel<T>& arp, std::int64_t t) {
    if (t < 1 || t > arp.levels) throw std::invalid_argument("projection level out of range");
    ArpProjection<T> proj;
    proj.kernel.resize(arp.n_states);
    proj.sink_mass.resize(arp.n_states);
    proj.rewards.resize(arp.n_states);
    for (int i = 0; i < arp.n_states; ++i) {
        const int k = arp.num_actions(i);
        proj.kernel[i].assign(k, std::vector<T>(arp.n_states, T(0)));
        proj.sink_mass[i].assign(k, T(1));
        proj.rewards[i].assign(k, std::nullopt);
        for (int a = 0; a < k; ++a) {
            const auto row = arp.row(i, a, t);
            for (const auto& tr : row.entries) proj.kernel[i][a][tr.target_state] += tr.weight;
            proj.sink_mass[i][a] = row.sink_mass;
            if (!row.entries.empty()) proj.rewards[i][a] = arp.rewards[i][a];
        }
    }
    return proj;
}

/// Probability of dropping to level <= m within `horizon` steps of the
/// replay process, starting at <start_state, start_level>. Worst-case
/// mode maximizes over actions at every node; otherwise a fixed
/// per-state action choice is followed. Exact dynamic programming over
/// the level DAG (the sink never reaches the target set).
inline double nodrop_probability(const ArpModel<double>& arp, std::int64_t m, int horizon,
                                 int start_state, std::int64_t start_level,
                                 const std::vector<int>* policy_choice = nullptr) {
    if (!(m >= 1 && m < start_level && start_level <= arp.levels))
        throw std::invalid_argument("need 1 <= m < start_level <= top level");
    struct Key {
        std::int64_t packed;
        bool operator==(const Key& o) const { return packed == o.packed; }
    };
    struct KeyHash {
        std::size_t operator()(const Key& k) const { return std::hash<std::int64_t>()(k.packed); }
    };
    std::unordered_map<Key, double, KeyHash> memo;
    const std::int64_t hsize = horizon + 1;

    std::function<double(int, std::int64_t, int)> drop = [&](int state, std::int64_t level,
                                                             int steps) -> double {
        if (level <= m) return 1.0;
        if (steps == 0) return 0.0;
        const Key key{(level * arp.n_states + state) * hsize + steps};
        const auto it = memo.find(key);
        if (it != memo.end()) return it->second;
        double best = 0;
        const int a_lo = policy_choice ? (*policy_choice)[state] : 0;
        const int a_hi = policy_choice ? a_lo + 1 : arp.num_actions(state);
        for (int a = a_lo; a < a_hi; ++a) {
            const auto row = arp.row(state, a, level);
            double p = 0;
            for (const auto& tr : row.entries) {
                if (tr.target_level <= m)
                    p += tr.weight;
                else
                    p += tr.weight * drop(tr.target_state, tr.target_level, steps - 1);
            }
            best = std::max(best, p);
        }
        memo.emplace(key, best);
        return best;
    };
    return drop(start_state, start_level, horizon);
}

/// Smallest horizon with W alpha^T / (1-alpha) <= eta: truncating the
/// discounted sum after T steps costs at most eta.
inline std::int64_t cutoff_horizon(double reward_bound, double alpha, double eta) {
    if (!(alpha > 0 && alpha < 1) || !(eta > 0) || !(reward_bound > 0))
        throw std::invalid_argument("bad cutoff parameters");
    const double raw = std::log(eta * (1 - alpha) / reward_bound) / std::log(alpha);
    return std::max<std::int64_t>(0, static_cast<std::int64_t>(std::ceil(raw)));
}

struct QhatCheckpoint {
    std::int64_t t = 0;
    double qhat_distance = 0;  // sup norm d(Qhat_t, Q*)
    double qt_distance = 0;    // sup norm d(Q^(t), Q*)
};

struct QhatReport {
    std::vector<QhatCheckpoint> checkpoints;
    std::int64_t cutoff = 0;  // horizon T(eta) for eta = eps
    std::int64_t first_coverage = 0;
    double final_qt_distance = 0;
};

/// Validation against a known environment: the projected model
/// (S, A, P_t, r_t), with the sink deficit routed to an absorbing
/// zero-reward state and unseen rewards taken as 0, is solved for its
/// optimal Q; distances of Qhat_t and Q^(t) to the true Q* are reported
/// per checkpoint together with the cutoff horizon at eta = eps.
inline QhatReport check_qhat_convergence(const Mdp<double>& env, const QLearnResult& run,
                                         const LearningRateSchedule& schedule, double alpha,
                                         double eps) {
    const int n = env.num_states();
    std::vector<int> acts(n);
    for (int i = 0; i < n; ++i) acts[i] = env.num_actions(i);
    const QTable<double> q_star = optimal_discounted(env, alpha, 1e-10).q_values;
    const QTable<double> q1 =
        run.snapshots.empty() ? QTable<double>::zeros(env) : run.snapshots.front().second;
    const auto arp = build_arp<double>(run.trajectory, schedule, q1,
                                       static_cast<std::int64_t>(run.trajectory.steps.size()) + 1,
                                       acts);

    QhatReport rep;
    rep.cutoff = cutoff_horizon(std::max(to_double(env.reward_sup_norm()), 1e-12), alpha, eps);
    {
        std::vector<std::vector<bool>> seen(n);
        for (int i = 0; i < n; ++i) seen[i].assign(acts[i], false);
        std::int64_t covered = 0, need = 0;
        for (int i = 0; i < n; ++i) need += acts[i];
        for (std::size_t k = 0; k < run.trajectory.steps.size(); ++k) {
            const auto& s = run.trajectory.steps[k];
            if (!seen[s.state][s.action]) {
                seen[s.state][s.action] = true;
                if (++covered == need) rep.first_coverage = static_cast<std::int64_t>(k) + 1;
            }
        }
    }

    for (const auto& [t, q_t] : run.snapshots) {
        if (t > arp.levels) break;
        const auto proj = arp_projection(arp, t);
        Mdp<double> induced;
        induced.trans.resize(n + 1);
        induced.reward.resize(n + 1);
        for (int i = 0; i < n; ++i) {
            induced.trans[i].assign(acts[i], std::vector<double>(n + 1, 0.0));
            induced.reward[i].assign(acts[i], 0.0);
            for (int a = 0; a < acts[i]; ++a) {
                for (int j = 0; j < n; ++j) induced.trans[i][a][j] = proj.kernel[i][a][j];
                induced.trans[i][a][n] = proj.sink_mass[i][a];
                induced.reward[i][a] = proj.rewards[i][a].value_or(0.0);
            }
        }
        induced.trans[n].assign(1, std::vector<double>(n + 1, 0.0));
        induced.trans[n][0][n] = 1.0;
        induced.reward[n].assign(1, 0.0);
        const QTable<double> q_hat = optimal_discounted(induced, alpha, 1e-10).q_values;

        QhatCheckpoint cp;
        cp.t = t;
        for (int i = 0; i < n; ++i)
            for (int a = 0; a < acts[i]; ++a) {
                cp.qhat_distance =
                    std::max(cp.qhat_distance, std::fabs(q_hat(i, a) - q_star(i, a)));
                cp.qt_distance = std::max(cp.qt_distance, std::fabs(q_t(i, a) - q_star(i, a)));
            }
        rep.checkpoints.push_back(cp);
    }
    if (!rep.checkpoints.empty()) rep.final_qt_distance = rep.checkpoints.back().qt_distance;
    return rep;
}

}  // namespace mdpkit
