#pragma once

#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "mdpkit/learn_q.hpp"
#include "mdpkit/mdp.hpp"
#include "mdpkit/rng.hpp"

namespace mdpkit {

using json = nlohmann::json;

namespace detail {

template <class T>
T value_from_json(const json& v) {
    if constexpr (scalar_traits<T>::exact) {
        // strings carry exact values; numbers convert dyadically
        if (v.is_string()) return parse_rational(v.get<std::string>());
        return Rational(v.get<double>());
    } else {
        if (v.is_string()) return to_double(parse_rational(v.get<std::string>()));
        return v.get<double>();
    }
}

template <class T>
json value_to_json(const T& v) {
    if constexpr (scalar_traits<T>::exact)
        return rational_to_string(v);
    else
        return v;
}

}  // namespace detail

/// Model file schema: states, per-state action names, nested
/// transitions/rewards keyed by names, optional p_min / reward_bound.
/// Exact mode writes probabilities as strings.
template <class T>
json model_to_json(const Mdp<T>& m) {
    json doc;
    json states = json::array();
    for (int i = 0; i < m.num_states(); ++i) states.push_back(m.state_name(i));
    doc["states"] = states;
    json actions, transitions, rewards;
    for (int i = 0; i < m.num_states(); ++i) {
        json acts = json::array();
        json trans_i, rew_i;
        for (int a = 0; a < m.num_actions(i); ++a) {
            acts.push_back(m.action_name(i, a));
            json row;
            for (int j = 0; j < m.num_states(); ++j)
                if (m.trans[i][a][j] != T(0))
                    row[m.state_name(j)] = detail::value_to_json(m.trans[i][a][j]);
            trans_i[m.action_name(i, a)] = row;
            rew_i[m.action_name(i, a)] = detail::value_to_json(m.reward[i][a]);
        }
        actions[m.state_name(i)] = acts;
        transitions[m.state_name(i)] = trans_i;
        rewards[m.state_name(i)] = rew_i;
    }
    doc["actions"] = actions;
    doc["transitions"] = transitions;
    doc["rewards"] = rewards;
    if (m.p_min) doc["p_min"] = detail::value_to_json(*m.p_min);
    if (m.reward_bound) doc["reward_bound"] = detail::value_to_json(*m.reward_bound);
    return doc;
}

template <class T>
Mdp<T> model_from_json(const json& doc) {
    Mdp<T> m;
    const auto& states = doc.at("states");
    const int n = static_cast<int>(states.size());
    std::vector<std::string> names;
    for (const auto& s : states) names.push_back(s.get<std::string>());
    m.state_names = names;
    auto state_index = [&](const std::string& name) {
        for (int i = 0; i < n; ++i)
            if (names[i] == name) return i;
        throw std::invalid_argument("unknown state name: " + name);
    };
    m.action_names.resize(n);
    m.trans.resize(n);
    m.reward.resize(n);
    const auto& actions = doc.at("actions");
    const auto& transitions = doc.at("transitions");
    const auto& rewards = doc.at("rewards");
    for (int i = 0; i < n; ++i) {
        const auto& acts = actions.at(names[i]);
        const int k = static_cast<int>(acts.size());
        m.action_names[i].resize(k);
        m.trans[i].assign(k, std::vector<T>(n, T(0)));
        m.reward[i].resize(k);
        for (int a = 0; a < k; ++a) {
            const std::string act = acts[a].get<std::string>();
            m.action_names[i][a] = act;
            const auto& row = transitions.at(names[i]).at(act);
            for (auto it = row.begin(); it != row.end(); ++it)
                m.trans[i][a][state_index(it.key())] = detail::value_from_json<T>(it.value());
            m.reward[i][a] = detail::value_from_json<T>(rewards.at(names[i]).at(act));
        }
    }
    if (doc.contains("p_min")) m.p_min = detail::value_from_json<T>(doc.at("p_min"));
    if (doc.contains("reward_bound"))
        m.reward_bound = detail::value_from_json<T>(doc.at("reward_bound"));
    return m;
}

template <class T>
void save_model(const Mdp<T>& m, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << model_to_json(m).dump(2) << "\n";
}

template <class T>
Mdp<T> load_model(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot read " + path);
    json doc;
    in >> doc;
    return model_from_json<T>(doc);
}

struct GeneratorSpec {
    int n_states = 3;
    int n_actions = 2;
    double p_min = 0.1;
    double reward_bound = 1.0;
};

/// Random communicating MDP honoring the prior bounds: a random
/// Hamiltonian cycle is embedded (one designated action per state keeps
/// the cycle edge), remaining support is random with every nonzero entry
/// at least p_min, rewards are positive and at most reward_bound.
inline Mdp<double> generate_model(const GeneratorSpec& spec, Philox& rng) {
    const int n = spec.n_states;
    if (n < 1 || spec.n_actions < 1) throw std::invalid_argument("empty model spec");
    if (!(spec.p_min > 0) || spec.p_min > 1)
        throw std::invalid_argument("p_min must lie in (0,1]");
    const int max_support = std::max(1, std::min(n, static_cast<int>(1.0 / spec.p_min)));

    std::vector<int> order(n);
    for (int i = 0; i < n; ++i) order[i] = i;
    for (int i = n - 1; i > 0; --i)
        std::swap(order[i], order[rng.below(static_cast<std::uint64_t>(i + 1))]);
    std::vector<int> successor(n);
    for (int i = 0; i < n; ++i) successor[order[i]] = order[(i + 1) % n];

    Mdp<double> m;
    m.trans.resize(n);
    m.reward.resize(n);
    m.p_min = spec.p_min;
    m.reward_bound = spec.reward_bound;
    for (int i = 0; i < n; ++i) {
        m.trans[i].assign(spec.n_actions, std::vector<double>(n, 0.0));
        m.reward[i].resize(spec.n_actions);
        const int designated =
            static_cast<int>(rng.below(static_cast<std::uint64_t>(spec.n_actions)));
        for (int a = 0; a < spec.n_actions; ++a) {
            const int support =
                1 + static_cast<int>(rng.below(static_cast<std::uint64_t>(max_support)));
            std::vector<int> targets;
            if (a == designated) targets.push_back(successor[i]);
            while (static_cast<int>(targets.size()) < support) {
                const int j = static_cast<int>(rng.below(static_cast<std::uint64_t>(n)));
                if (std::find(targets.begin(), targets.end(), j) == targets.end())
                    targets.push_back(j);
            }
            const int k = static_cast<int>(targets.size());
            std::vector<double> extra(k);
            double sum = 0;
            for (int idx = 0; idx < k; ++idx) {
                double u = rng.uniform01();
                while (u == 0.0) u = rng.uniform01();
                extra[idx] = -std::log(u);
                sum += extra[idx];
            }
            const double slack = 1.0 - k * spec.p_min;
            double row_sum = 0;
            for (int idx = 0; idx < k; ++idx) {
                m.trans[i][a][targets[idx]] = spec.p_min + slack * extra[idx] / sum;
                row_sum += m.trans[i][a][targets[idx]];
            }
            // float addition can land a hair off 1; renormalize exactly
            for (int idx = 0; idx < k; ++idx) m.trans[i][a][targets[idx]] /= row_sum;
            m.reward[i][a] =
                spec.reward_bound *
                static_cast<double>(1 + rng.below(1000)) / 1000.0;
        }
    }
    return m;
}

/// Trajectory log, JSON-lines of (t, X_t, Y_t, r_t, X_{t+1}, gamma_t).
inline void write_trajectory_log(const Trajectory& traj, const LearningRateSchedule& schedule,
                                 const std::vector<int>& actions_per_state,
                                 const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    std::vector<std::vector<std::int64_t>> visits(actions_per_state.size());
    for (std::size_t i = 0; i < actions_per_state.size(); ++i)
        visits[i].assign(actions_per_state[i], 0);
    json header{{"start", traj.start}, {"seed", traj.seed}, {"stream", traj.stream}};
    out << header.dump() << "\n";
    for (std::size_t k = 0; k < traj.steps.size(); ++k) {
        const auto& s = traj.steps[k];
        const std::int64_t t = static_cast<std::int64_t>(k) + 1;
        const double gamma = schedule.gamma(t, ++visits[s.state][s.action]);
        json line{{"t", t},      {"state", s.state}, {"action", s.action},
                  {"reward", s.reward}, {"next", s.next},   {"gamma", gamma}};
        out << line.dump() << "\n";
    }
}

inline Trajectory read_trajectory_log(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot read " + path);
    Trajectory traj;
    std::string line;
    bool first = true;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const json doc = json::parse(line);
        if (first) {
            traj.start = doc.at("start").get<int>();
            traj.seed = doc.at("seed").get<std::uint64_t>();
            traj.stream = doc.at("stream").get<std::uint64_t>();
            first = false;
            continue;
        }
        traj.steps.push_back({doc.at("state").get<int>(), doc.at("action").get<int>(),
                              doc.at("reward").get<double>(), doc.at("next").get<int>()});
    }
    return traj;
}

/// Q-table snapshot as CSV (state, action, value).
inline void write_qtable_csv(const QTable<double>& q, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << "state,action,value\n";
    std::ostringstream num;
    num.precision(17);
    for (int i = 0; i < q.num_states(); ++i)
        for (std::size_t a = 0; a < q.values[i].size(); ++a) {
            num.str("");
            num << q.values[i][a];
            out << i << "," << a << "," << num.str() << "\n";
        }
}

inline void write_series_csv(const std::vector<std::pair<double, double>>& series,
                             const std::string& x_label, const std::string& y_label,
                             const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << x_label << "," << y_label << "\n";
    std::ostringstream num;
    num.precision(17);
    for (const auto& [x, y] : series) {
        num.str("");
        num << x << "," << y;
        out << num.str() << "\n";
    }
}

}  // namespace mdpkit
