#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "mdpkit/learn_average.hpp"
#include "mdpkit/learn_q.hpp"
#include "mdpkit/metrics.hpp"
#include "mdpkit/model_io.hpp"
#include "mdpkit/rational_forms.hpp"
#include "mdpkit/robustness.hpp"
#include "mdpkit/solvers.hpp"

namespace py = pybind11;
using namespace mdpkit;

namespace {

using PyPolicy = std::variant<std::vector<int>, std::vector<std::vector<double>>>;

StationaryPolicy<double> to_policy(const Mdp<double>& m, const PyPolicy& p) {
    if (std::holds_alternative<std::vector<int>>(p)) {
        std::vector<int> acts(m.num_states());
        for (int i = 0; i < m.num_states(); ++i) acts[i] = m.num_actions(i);
        return StationaryPolicy<double>::deterministic(std::get<std::vector<int>>(p), acts);
    }
    StationaryPolicy<double> pi;
    pi.weights = std::get<std::vector<std::vector<double>>>(p);
    check_policy_shape(m, pi);
    return pi;
}

py::dict q_to_dict(const QTable<double>& q) {
    py::dict d;
    py::list rows;
    for (const auto& row : q.values) rows.append(row);
    d["values"] = rows;
    return d;
}

py::dict report_to_dict(const RobustnessReport& rep) {
    py::dict d;
    d["a1"] = rep.a1;
    d["a2"] = rep.a2;
    d["a3"] = rep.a3;
    d["bound"] = rep.bound;
    d["corollary_mode"] = rep.corollary_mode;
    d["corollary_bound"] = rep.corollary_bound;
    d["corollary_holds"] = rep.corollary_holds;
    d["worst_gap"] = rep.worst_gap;
    d["all_hold"] = rep.all_hold;
    d["policies_checked"] = rep.rows.size();
    d["skipped_policies"] = rep.skipped_policies;
    return d;
}

LearningRateSchedule to_schedule(const std::string& name, double omega) {
    if (name == "harmonic") return LearningRateSchedule::harmonic();
    if (name == "polynomial") return LearningRateSchedule::polynomial(omega);
    throw std::invalid_argument("schedule must be 'harmonic' or 'polynomial'");
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Tabular MDP solvers, robustness audits, and learning experiments";

    py::class_<Mdp<double>>(m, "Model")
        .def_static("load", &load_model<double>, py::arg("path"))
        .def("save", &save_model<double>, py::arg("path"))
        .def_property_readonly("n_states", &Mdp<double>::num_states)
        .def("n_actions", &Mdp<double>::num_actions, py::arg("state"))
        .def("transition",
             [](const Mdp<double>& m, int i, int a, int j) { return m.trans.at(i).at(a).at(j); })
        .def("reward", [](const Mdp<double>& m, int i, int a) { return m.reward.at(i).at(a); })
        .def("validate",
             [](const Mdp<double>& m) { return validate(m).violations; })
        .def("is_communicating", [](const Mdp<double>& m) { return is_communicating(m); })
        .def("to_json", [](const Mdp<double>& m) { return model_to_json(m).dump(2); });

    m.def(
        "generate_model",
        [](int states, int actions, double p_min, double reward_bound, std::uint64_t seed) {
            GeneratorSpec spec{states, actions, p_min, reward_bound};
            Philox rng(seed, 7);
            return generate_model(spec, rng);
        },
        py::arg("states"), py::arg("actions"), py::arg("p_min"), py::arg("reward_bound"),
        py::arg("seed"), "Random communicating model honoring the probability floor");

    m.def(
        "solve_discounted",
        [](const Mdp<double>& model, double alpha, double tol) {
            const DiscountedSolution sol = optimal_discounted(model, alpha, tol);
            py::dict d;
            d["alpha"] = sol.alpha;
            d["values"] = sol.values;
            d["q_values"] = q_to_dict(sol.q_values);
            py::list greedy;
            for (int i = 0; i < model.num_states(); ++i)
                greedy.append(greedy_action(sol.q_values, i));
            d["greedy"] = greedy;
            d["residual"] = sol.residual;
            return d;
        },
        py::arg("model"), py::arg("alpha"), py::arg("tol") = 1e-8);

    m.def(
        "solve_average",
        [](const Mdp<double>& model) {
            const AverageSolution sol = optimal_average(model);
            py::dict d;
            d["gain"] = sol.gain;
            py::list choice;
            for (const auto& row : sol.policy.weights) {
                int a = 0;
                for (std::size_t k = 0; k < row.size(); ++k)
                    if (row[k] == 1.0) a = static_cast<int>(k);
                choice.append(a);
            }
            d["policy"] = choice;
            py::list classes;
            for (const auto& rc : sol.stationary_distribution) {
                py::dict cd;
                cd["states"] = rc.states;
                cd["probabilities"] = rc.probabilities;
                classes.append(cd);
            }
            d["stationary_distribution"] = classes;
            return d;
        },
        py::arg("model"));

    m.def(
        "evaluate_discounted",
        [](const Mdp<double>& model, const PyPolicy& policy, double alpha, int start) {
            return evaluate_discounted(model, to_policy(model, policy), alpha, start);
        },
        py::arg("model"), py::arg("policy"), py::arg("alpha"), py::arg("start") = 0);

    m.def(
        "evaluate_average",
        [](const Mdp<double>& model, const PyPolicy& policy, int start) {
            return evaluate_average(model, to_policy(model, policy), start);
        },
        py::arg("model"), py::arg("policy"), py::arg("start") = 0);

    m.def(
        "mertens_neyman_sweep",
        [](const Mdp<double>& model, const PyPolicy& policy, int start,
           const std::vector<double>& alphas) {
            return mertens_neyman_sweep(model, to_policy(model, policy), start, alphas);
        },
        py::arg("model"), py::arg("policy"), py::arg("start"), py::arg("alphas"));

    m.def(
        "kernel_ratio_distance",
        [](const Mdp<double>& m1, const Mdp<double>& m2) {
            return ratio_distance(flatten_kernel(m1), flatten_kernel(m2));
        },
        py::arg("m1"), py::arg("m2"));
    m.def(
        "kernel_tv_distance",
        [](const Mdp<double>& m1, const Mdp<double>& m2) {
            return total_variation(flatten_kernel(m1), flatten_kernel(m2));
        },
        py::arg("m1"), py::arg("m2"));
    m.def(
        "reward_tv_distance",
        [](const Mdp<double>& m1, const Mdp<double>& m2) {
            return total_variation(flatten_rewards(m1), flatten_rewards(m2));
        },
        py::arg("m1"), py::arg("m2"));

    m.def(
        "perturb",
        [](const Mdp<double>& model, double eps, std::uint64_t seed) {
            Philox rng(seed, 11);
            return perturb_model(model, eps, rng);
        },
        py::arg("model"), py::arg("eps"), py::arg("seed"));

    m.def(
        "assumptions_hold",
        [](const Mdp<double>& m1, const Mdp<double>& m2, double eps) {
            return assumptions_hold(m1, m2, eps);
        },
        py::arg("m1"), py::arg("m2"), py::arg("eps"));

    m.def(
        "audit_discounted",
        [](const Mdp<double>& m1, const Mdp<double>& m2, double alpha, double eps, int start,
           int n_stochastic, std::uint64_t seed) {
            Philox rng(seed, 23);
            return report_to_dict(
                check_discounted_robustness(m1, m2, alpha, eps, start, n_stochastic, rng));
        },
        py::arg("m1"), py::arg("m2"), py::arg("alpha"), py::arg("eps"), py::arg("start") = 0,
        py::arg("n_stochastic") = 100, py::arg("seed") = 0);

    m.def(
        "audit_average",
        [](const Mdp<double>& m1, const Mdp<double>& m2, double eps, int start, int n_stochastic,
           std::uint64_t seed) {
            Philox rng(seed, 29);
            return report_to_dict(
                check_average_robustness(m1, m2, eps, start, n_stochastic, rng));
        },
        py::arg("m1"), py::arg("m2"), py::arg("eps"), py::arg("start") = 0,
        py::arg("n_stochastic") = 100, py::arg("seed") = 0);

    m.def(
        "fw_hitting_probability",
        [](const std::vector<std::vector<double>>& chain, const std::vector<int>& target_set,
           int start, int hit) {
            MarkovChain<double> c;
            c.trans = chain;
            c.reward.assign(chain.size(), 0.0);
            const auto rv = fw_hitting_probability(c, target_set, start, hit);
            return rv.value();
        },
        py::arg("chain"), py::arg("target_set"), py::arg("start"), py::arg("hit"),
        "Hitting probability via the spanning-map quotient (float mode)");

    m.def(
        "q_learning",
        [](const Mdp<double>& model, double alpha, std::int64_t steps, std::uint64_t seed,
           const std::string& schedule, double omega, const std::string& exploration, int start) {
            QLearnOptions opt;
            opt.alpha = alpha;
            opt.steps = steps;
            opt.start = start;
            opt.schedule = to_schedule(schedule, omega);
            opt.mode = exploration == "greedy" ? ExplorationMode::greedy
                                               : ExplorationMode::epsilon_greedy;
            Philox rng(seed, 17);
            const QLearnResult res = run_q_learning(model, opt, rng);
            const QTable<double> q_star = optimal_discounted(model, alpha, 1e-10).q_values;
            py::dict d;
            d["final_q"] = q_to_dict(res.final_state.q);
            d["final_distance"] = res.final_state.q.sup_distance(q_star);
            py::list checkpoints;
            for (const auto& [t, q] : res.snapshots) {
                py::dict cp;
                cp["t"] = t;
                cp["distance_to_optimal"] = q.sup_distance(q_star);
                checkpoints.append(cp);
            }
            d["checkpoints"] = checkpoints;
            return d;
        },
        py::arg("model"), py::arg("alpha"), py::arg("steps"), py::arg("seed"),
        py::arg("schedule") = "harmonic", py::arg("omega") = 1.0,
        py::arg("exploration") = "eps-greedy", py::arg("start") = 0);

    m.def(
        "arp_identity_max_error",
        [](const Mdp<double>& model, double alpha, std::int64_t steps, std::uint64_t seed,
           const std::string& schedule, double omega) {
            QLearnOptions opt;
            opt.alpha = alpha;
            opt.steps = steps;
            opt.schedule = to_schedule(schedule, omega);
            Philox rng(seed, 19);
            const QLearnResult res = run_q_learning(model, opt, rng);
            std::vector<int> acts(model.num_states());
            for (int i = 0; i < model.num_states(); ++i) acts[i] = model.num_actions(i);
            QLearningState<double> replay =
                QLearningState<double>::fresh(model, QTable<double>::zeros(model));
            std::vector<QTable<double>> online;
            online.push_back(replay.q);
            for (std::size_t k = 0; k < res.trajectory.steps.size(); ++k) {
                const auto& s = res.trajectory.steps[k];
                const double gamma = opt.schedule.gamma(static_cast<std::int64_t>(k) + 1,
                                                        replay.visits[s.state][s.action] + 1);
                q_update(replay, s.state, s.action, s.reward, s.next, gamma, alpha);
                online.push_back(replay.q);
            }
            const auto arp = build_arp<double>(
                res.trajectory, opt.schedule, QTable<double>::zeros(model),
                static_cast<std::int64_t>(res.trajectory.steps.size()) + 1, acts);
            const auto solved = solve_arp(arp, alpha);
            double max_err = 0;
            for (std::size_t lvl = 0; lvl < solved.size(); ++lvl)
                max_err = std::max(max_err, solved[lvl].sup_distance(online[lvl]));
            return max_err;
        },
        py::arg("model"), py::arg("alpha"), py::arg("steps"), py::arg("seed"),
        py::arg("schedule") = "harmonic", py::arg("omega") = 1.0,
        "Sup-norm gap between the online Q tables and the replay-process solution");

    m.def(
        "explore_exploit",
        [](const Mdp<double>& model, int episodes, std::int64_t desk_l1, std::uint64_t seed,
           int start, std::int64_t stride) {
            if (!model.p_min) throw std::invalid_argument("model needs p_min recorded");
            PriorKnowledge prior{Rational(*model.p_min),
                                 Rational(model.reward_bound.value_or(
                                     to_double(model.reward_sup_norm())))};
            const EpisodeSchedule sched = desk_schedule(prior, episodes, desk_l1);
            Philox rng(seed, 13);
            const auto res = run_explore_exploit(
                model, prior, sched, sched.total_steps.convert_to<std::int64_t>(), start, stride,
                rng);
            py::dict d;
            d["final_average"] = res.final_average;
            d["executed_steps"] = res.executed_steps;
            py::list curve;
            for (const auto& [t, avg] : res.running_average) curve.append(py::make_tuple(t, avg));
            d["running_average"] = curve;
            py::list fallbacks;
            for (const auto& log : res.episode_logs)
                fallbacks.append(log.fell_back_to_exploration);
            d["fallbacks"] = fallbacks;
            return d;
        },
        py::arg("model"), py::arg("episodes"), py::arg("desk_l1"), py::arg("seed"),
        py::arg("start") = 0, py::arg("stride") = 1000);

    m.def(
        "exploration_budget",
        [](int states, int max_actions, const std::string& p_min, const std::string& reward_bound,
           double eps, double delta) {
            PriorKnowledge prior{parse_rational(p_min), parse_rational(reward_bound)};
            return exploration_budget(states, max_actions, prior, eps, delta).str();
        },
        py::arg("states"), py::arg("max_actions"), py::arg("p_min"), py::arg("reward_bound"),
        py::arg("eps"), py::arg("delta"),
        "Uniform-exploration step budget (decimal string; the numbers get large)");

    m.def("frobenius_number", &frobenius_number, py::arg("numbers"));

    m.def(
        "tracol_constants",
        [](int states, const std::string& p_min, double eps) {
            const TracolConstants tc = tracol_constants(states, parse_rational(p_min), eps);
            py::dict d;
            d["k0"] = tc.k0.str();
            d["a"] = to_double(tc.a_coef);
            d["b"] = to_double(tc.b_coef);
            d["mixing_t"] = tc.mixing_t;
            d["lambda"] = to_double(tc.lambda);
            return d;
        },
        py::arg("states"), py::arg("p_min"), py::arg("eps"));

    m.attr("__version__") = "0.1.0";
}
