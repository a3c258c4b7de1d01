#include "mdpkit/harness.hpp"

#include <chrono>
#include <filesystem>

#include "mdpkit/learn_average.hpp"
#include "mdpkit/learn_q.hpp"
#include "mdpkit/metrics.hpp"
#include "mdpkit/rational_forms.hpp"
#include "mdpkit/robustness.hpp"
#include "mdpkit/solvers.hpp"

namespace mdpkit {

std::string tool_version() { return "mdpkit 0.1.0"; }

ExperimentConfig ExperimentConfig::from_json(const json& doc) {
    ExperimentConfig c;
    auto get = [&](const char* key, auto& field) {
        if (doc.contains(key)) field = doc.at(key).get<std::decay_t<decltype(field)>>();
    };
    if (doc.contains("kind")) c.kind = doc.at("kind").get<std::string>();
    if (doc.contains("model")) c.model_path = doc.at("model").get<std::string>();
    if (doc.contains("generator")) {
        GeneratorSpec g;
        const auto& gj = doc.at("generator");
        if (gj.contains("states")) g.n_states = gj.at("states").get<int>();
        if (gj.contains("actions")) g.n_actions = gj.at("actions").get<int>();
        if (gj.contains("p_min")) g.p_min = gj.at("p_min").get<double>();
        if (gj.contains("reward_bound")) g.reward_bound = gj.at("reward_bound").get<double>();
        c.generator = g;
    }
    if (doc.contains("seed")) c.seed = doc.at("seed").get<std::uint64_t>();
    get("out_dir", c.out_dir);
    get("alpha", c.alpha);
    get("tol", c.tol);
    get("eps", c.eps);
    get("alpha_exact", c.alpha_exact);
    get("steps", c.steps);
    get("episodes", c.episodes);
    get("start", c.start);
    get("average", c.average_criterion);
    get("policy", c.policy);
    get("stochastic_policies", c.stochastic_policies);
    get("stride", c.stride);
    get("desk_l1", c.desk_l1);
    get("theoretical_schedule", c.theoretical_schedule);
    get("rate_schedule", c.rate_schedule);
    get("omega", c.omega);
    get("exploration", c.exploration);
    get("epsilon_c", c.epsilon_c);
    get("sweep_points", c.sweep_points);
    get("sweep", c.sweep);
    get("record", c.record_path);
    get("series", c.series);
    get("jobs", c.jobs);
    return c;
}

json ExperimentConfig::to_json() const {
    json doc;
    doc["kind"] = kind;
    if (model_path) doc["model"] = *model_path;
    if (generator)
        doc["generator"] = {{"states", generator->n_states},
                            {"actions", generator->n_actions},
                            {"p_min", generator->p_min},
                            {"reward_bound", generator->reward_bound}};
    if (seed) doc["seed"] = *seed;
    doc["out_dir"] = out_dir;
    doc["alpha"] = alpha;
    doc["tol"] = tol;
    doc["eps"] = eps;
    doc["alpha_exact"] = alpha_exact;
    doc["steps"] = steps;
    doc["episodes"] = episodes;
    doc["start"] = start;
    doc["average"] = average_criterion;
    doc["policy"] = policy;
    doc["stochastic_policies"] = stochastic_policies;
    doc["stride"] = stride;
    doc["desk_l1"] = desk_l1;
    doc["theoretical_schedule"] = theoretical_schedule;
    doc["rate_schedule"] = rate_schedule;
    doc["omega"] = omega;
    doc["exploration"] = exploration;
    doc["epsilon_c"] = epsilon_c;
    doc["sweep_points"] = sweep_points;
    doc["sweep"] = sweep;
    if (!record_path.empty()) doc["record"] = record_path;
    if (!series.empty()) doc["series"] = series;
    doc["jobs"] = jobs;
    return doc;
}

void ExperimentConfig::validate_for_kind() const {
    const bool needs_seed = kind == "learn-avg" || kind == "learn-q" || kind == "gen-model" ||
                            kind == "perturb-audit" || kind == "arp-check";
    if (needs_seed && !seed) throw ConfigError("config.seed: required for kind " + kind);
    const bool needs_model = kind != "gen-model" && kind != "plot-data";
    if (needs_model && !model_path && !generator)
        throw ConfigError("config.model: either a model file or a generator spec is required");
    if (kind == "plot-data") {
        if (record_path.empty()) throw ConfigError("config.record: required for plot-data");
        if (series.empty()) throw ConfigError("config.series: required for plot-data");
    }
}

json RunRecord::to_json() const {
    json doc;
    doc["config"] = config_echo;
    doc["version"] = version;
    doc["payload"] = payload;
    doc["acceptance"] = acceptance;
    return doc;
}

namespace {

Mdp<double> resolve_model(const ExperimentConfig& c) {
    if (c.model_path) return load_model<double>(*c.model_path);
    if (!c.generator) throw ConfigError("config.model: no model source");
    Philox rng(c.seed.value_or(0), /*stream=*/7);
    return generate_model(*c.generator, rng);
}

StationaryPolicy<double> resolve_policy(const ExperimentConfig& c, const Mdp<double>& m) {
    if (c.policy == "uniform") return StationaryPolicy<double>::uniform(m);
    std::ifstream in(c.policy);
    if (!in) throw ConfigError("config.policy: cannot read " + c.policy);
    json doc;
    in >> doc;
    StationaryPolicy<double> pi;
    if (doc.contains("choices")) {
        std::vector<int> choice = doc.at("choices").get<std::vector<int>>();
        std::vector<int> acts(m.num_states());
        for (int i = 0; i < m.num_states(); ++i) acts[i] = m.num_actions(i);
        pi = StationaryPolicy<double>::deterministic(choice, acts);
    } else {
        pi.weights = doc.at("weights").get<std::vector<std::vector<double>>>();
    }
    check_policy_shape(m, pi);
    return pi;
}

json qtable_to_json(const QTable<double>& q) {
    json rows = json::array();
    for (const auto& row : q.values) rows.push_back(row);
    return rows;
}

json run_solve(const ExperimentConfig& c, json& acceptance) {
    const Mdp<double> m = resolve_model(c);
    json payload;
    if (c.average_criterion) {
        const AverageSolution sol = optimal_average(m);
        payload["gain"] = sol.gain;
        json pol = json::array();
        for (const auto& row : sol.policy.weights) pol.push_back(row);
        payload["policy"] = pol;
        json classes = json::array();
        for (const auto& rc : sol.stationary_distribution)
            classes.push_back({{"states", rc.states}, {"probabilities", rc.probabilities}});
        payload["stationary_distribution"] = classes;
    } else {
        const DiscountedSolution sol = optimal_discounted(m, c.alpha, c.tol);
        payload["alpha"] = sol.alpha;
        payload["values"] = sol.values;
        payload["q_values"] = qtable_to_json(sol.q_values);
        json pol = json::array();
        for (const auto& row : sol.greedy.weights) pol.push_back(row);
        payload["greedy"] = pol;
        payload["residual"] = sol.residual;
        payload["value"] = sol.values[c.start];
    }
    acceptance = json::object();
    return payload;
}

json run_evaluate(const ExperimentConfig& c, json& acceptance) {
    const Mdp<double> m = resolve_model(c);
    const StationaryPolicy<double> pi = resolve_policy(c, m);
    json payload;
    if (c.average_criterion) {
        payload["value"] = evaluate_average(m, pi, c.start);
    } else {
        payload["value"] = evaluate_discounted(m, pi, c.alpha, c.start);
    }
    if (c.sweep) {
        std::vector<double> alphas;
        for (int k = 1; k <= c.sweep_points; ++k) alphas.push_back(1.0 - std::pow(10.0, -k));
        const auto sweep = mertens_neyman_sweep(m, pi, c.start, alphas);
        json series = json::array();
        for (const auto& [a, v] : sweep) series.push_back({a, v});
        payload["mertens_neyman"] = series;
    }
    acceptance = json::object();
    return payload;
}

json report_to_json(const RobustnessReport& rep) {
    json doc;
    doc["a1"] = rep.a1;
    doc["a2"] = rep.a2;
    doc["a3"] = rep.a3;
    doc["bound"] = rep.bound;
    doc["corollary_mode"] = rep.corollary_mode;
    doc["corollary_bound"] = rep.corollary_bound;
    doc["corollary_holds"] = rep.corollary_holds;
    doc["worst_gap"] = rep.worst_gap;
    doc["all_hold"] = rep.all_hold;
    doc["skipped_policies"] = rep.skipped_policies;
    json rows = json::array();
    for (const auto& r : rep.rows)
        rows.push_back({{"policy", r.policy_id},
                        {"v1", r.v1},
                        {"v2", r.v2},
                        {"gap", r.gap},
                        {"bound", r.bound},
                        {"holds", r.holds}});
    doc["rows"] = rows;
    return doc;
}

void report_to_csv(const RobustnessReport& rep, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << "policy,v1,v2,gap,bound,holds\n";
    std::ostringstream num;
    num.precision(17);
    for (const auto& r : rep.rows) {
        num.str("");
        num << r.v1 << "," << r.v2 << "," << r.gap << "," << r.bound;
        out << '"' << r.policy_id << "\"," << num.str() << "," << (r.holds ? 1 : 0) << "\n";
    }
}

json run_perturb_audit(const ExperimentConfig& c, json& acceptance) {
    const Mdp<double> m1 = resolve_model(c);
    Philox rng(*c.seed, /*stream=*/11);
    const Mdp<double> m2 = perturb_model(m1, c.eps, rng);
    json payload;
    Philox audit_rng = rng.split(1);
    const RobustnessReport disc =
        check_discounted_robustness(m1, m2, c.alpha, c.eps, c.start, c.stochastic_policies,
                                    audit_rng, c.jobs);
    payload["discounted"] = report_to_json(disc);
    Philox avg_rng = rng.split(2);
    const RobustnessReport avg = check_average_robustness(m1, m2, c.eps, c.start,
                                                          c.stochastic_policies, avg_rng, c.jobs);
    payload["average"] = report_to_json(avg);
    report_to_csv(disc, c.out_dir + "/perturb_audit_discounted.csv");
    report_to_csv(avg, c.out_dir + "/perturb_audit_average.csv");
    acceptance = {{"discounted_all_hold", disc.all_hold}, {"average_all_hold", avg.all_hold}};
    if (!disc.all_hold || !avg.all_hold)
        throw CheckFailure("robustness bound violated; see perturb_audit CSVs");
    return payload;
}

json run_learn_avg(const ExperimentConfig& c, json& acceptance) {
    const Mdp<double> env = resolve_model(c);
    if (!env.p_min) throw ConfigError("learn-avg needs a model with p_min recorded");
    PriorKnowledge prior{Rational(*env.p_min),
                         Rational(env.reward_bound.value_or(to_double(env.reward_sup_norm())))};
    const int n = env.num_states();
    EpisodeSchedule sched;
    if (c.theoretical_schedule) {
        sched = episode_schedule(prior, n, env.max_actions(), c.episodes);
    } else {
        sched = desk_schedule(prior, c.episodes, c.desk_l1);
    }
    const std::int64_t total = sched.total_steps > BigInt(c.steps)
                                   ? c.steps
                                   : sched.total_steps.convert_to<std::int64_t>();
    Philox rng(*c.seed, /*stream=*/13);
    const ExploreExploitResult res =
        run_explore_exploit(env, prior, sched, total, c.start, c.stride, rng);

    json payload;
    json sched_json = json::array();
    for (const auto& ep : sched.episodes)
        sched_json.push_back({{"episode", ep.index},
                              {"eps", ep.eps_i},
                              {"explore", ep.explore_len.str()},
                              {"exploit", ep.exploit_len.str()},
                              {"steps_before", ep.steps_before.str()}});
    payload["schedule"] = sched_json;
    json logs = json::array();
    for (std::size_t k = 0; k < res.episode_logs.size(); ++k) {
        const auto& log = res.episode_logs[k];
        json entry{{"episode", log.index},
                   {"explored", log.explored},
                   {"exploited", log.exploited},
                   {"fallback", log.fell_back_to_exploration},
                   {"choice", log.exploit_choice}};
        if (k < res.episode_models.size()) {
            const auto& em = res.episode_models[k];
            entry["model_snapshot"] = {{"visits", em.visits},
                                       {"transition_counts", em.transition_counts},
                                       {"rewards", em.reward_estimate}};
        }
        logs.push_back(std::move(entry));
    }
    payload["episodes"] = logs;
    json curve = json::array();
    for (const auto& [t, avg] : res.running_average) curve.push_back({t, avg});
    payload["running_average"] = curve;
    payload["final_average"] = res.final_average;
    payload["executed_steps"] = res.executed_steps;

    std::vector<std::pair<double, double>> series;
    for (const auto& [t, avg] : res.running_average)
        series.emplace_back(static_cast<double>(t), avg);
    write_series_csv(series, "t", "running_average", c.out_dir + "/learn_avg_curve.csv");
    acceptance = json::object();
    return payload;
}

json run_learn_q(const ExperimentConfig& c, json& acceptance) {
    const Mdp<double> env = resolve_model(c);
    QLearnOptions opt;
    opt.alpha = c.alpha;
    opt.steps = c.steps;
    opt.start = c.start;
    opt.epsilon_c = c.epsilon_c;
    opt.mode = c.exploration == "greedy" ? ExplorationMode::greedy
                                         : ExplorationMode::epsilon_greedy;
    opt.schedule = c.rate_schedule == "polynomial" ? LearningRateSchedule::polynomial(c.omega)
                                                   : LearningRateSchedule::harmonic();
    Philox rng(*c.seed, /*stream=*/17);
    const QLearnResult res = run_q_learning(env, opt, rng);
    const QTable<double> q_star = optimal_discounted(env, c.alpha, 1e-10).q_values;

    json payload;
    json checkpoints = json::array();
    std::vector<std::pair<double, double>> dist_series;
    for (const auto& [t, q] : res.snapshots) {
        const double d = q.sup_distance(q_star);
        checkpoints.push_back({{"t", t}, {"distance_to_optimal", d}});
        dist_series.emplace_back(static_cast<double>(t), d);
    }
    payload["checkpoints"] = checkpoints;
    payload["final_q"] = qtable_to_json(res.final_state.q);
    payload["final_distance"] = res.snapshots.back().second.sup_distance(q_star);

    write_qtable_csv(res.final_state.q, c.out_dir + "/learn_q_final.csv");
    write_series_csv(dist_series, "t", "q_distance", c.out_dir + "/learn_q_distance.csv");
    std::vector<int> acts(env.num_states());
    for (int i = 0; i < env.num_states(); ++i) acts[i] = env.num_actions(i);
    write_trajectory_log(res.trajectory, opt.schedule, acts,
                         c.out_dir + "/learn_q_trajectory.jsonl");
    acceptance = json::object();
    return payload;
}

json run_verify_rational(const ExperimentConfig& c, json& acceptance) {
    if (!c.model_path) throw ConfigError("verify-rational needs a model file (exact values)");
    const Mdp<Rational> m = load_model<Rational>(*c.model_path);
    const Rational alpha = parse_rational(c.alpha_exact);
    if (!(alpha > 0 && alpha < 1)) throw ConfigError("alpha_exact must lie in (0,1)");
    const auto pi = StationaryPolicy<Rational>::uniform(m);
    const MarkovChain<Rational> chain = induce_chain(m, pi);
    const int n = m.num_states();

    json checks = json::array();
    bool all_ok = true;
    auto push = [&](const std::string& name, bool ok, const std::string& detail) {
        checks.push_back({{"name", name}, {"ok", ok}, {"detail", detail}});
        all_ok &= ok;
    };

    // occupancy normalization: sum_j MT = 1 exactly
    {
        bool ok = true;
        for (int i = 0; i < n && ok; ++i) {
            const auto row = discounted_occupancy_row(chain, i, alpha);
            Rational sum(0);
            for (const auto& v : row) sum += v;
            ok = (sum == Rational(1));
        }
        push("occupancy_normalization", ok, "sum_j MT_{i,j} = 1, all i");
    }
    // duplicate-chain hitting identity
    {
        bool ok = true;
        const MarkovChain<Rational> dup = duplicate_chain(chain, alpha);
        std::vector<int> target(n);
        for (int j = 0; j < n; ++j) target[j] = n + j;
        for (int i = 0; i < n && ok; ++i) {
            const auto mt = discounted_occupancy_row(chain, i, alpha);
            for (int j = 0; j < n && ok; ++j) {
                const auto fw = fw_hitting_probability(dup, target, i, n + j);
                ok = (fw.value() == mt[j]);
            }
        }
        push("duplicate_chain_hitting", ok, "Pr(X_tau = copy j) = MT_{i,j} exactly");
    }
    // rational discounted identity
    {
        bool ok = true;
        for (int i = 0; i < n && ok; ++i) {
            const auto fw = fw_discounted_value(m, pi, alpha, i);
            const Rational direct =
                (Rational(1) - alpha) * evaluate_discounted(m, pi, alpha, i);
            ok = (fw.value() == direct);
        }
        push("discounted_value_identity", ok, "(1-alpha) v = FW quotient exactly");
    }
    acceptance = {{"all_ok", all_ok}};
    json payload;
    payload["checks"] = checks;
    payload["alpha"] = rational_to_string(alpha);
    if (!all_ok) throw CheckFailure("rational-form identities violated");
    return payload;
}

json run_arp_check(const ExperimentConfig& c, json& acceptance) {
    const Mdp<double> env = resolve_model(c);
    QLearnOptions opt;
    opt.alpha = c.alpha;
    opt.steps = c.steps;
    opt.start = c.start;
    opt.schedule = c.rate_schedule == "polynomial" ? LearningRateSchedule::polynomial(c.omega)
                                                   : LearningRateSchedule::harmonic();
    Philox rng(*c.seed, /*stream=*/19);
    const QLearnResult res = run_q_learning(env, opt, rng);

    // replay the online recursion at every step and compare per level
    std::vector<int> acts(env.num_states());
    for (int i = 0; i < env.num_states(); ++i) acts[i] = env.num_actions(i);
    QLearningState<double> replay =
        QLearningState<double>::fresh(env, QTable<double>::zeros(env));
    std::vector<QTable<double>> online;
    online.push_back(replay.q);
    for (std::size_t k = 0; k < res.trajectory.steps.size(); ++k) {
        const auto& s = res.trajectory.steps[k];
        const double gamma = opt.schedule.gamma(static_cast<std::int64_t>(k) + 1,
                                                replay.visits[s.state][s.action] + 1);
        q_update(replay, s.state, s.action, s.reward, s.next, gamma, opt.alpha);
        online.push_back(replay.q);
    }
    const auto arp = build_arp<double>(res.trajectory, opt.schedule, QTable<double>::zeros(env),
                                       static_cast<std::int64_t>(res.trajectory.steps.size()) + 1,
                                       acts);
    const auto solved = solve_arp(arp, c.alpha);
    double max_err = 0;
    for (std::size_t lvl = 0; lvl < solved.size(); ++lvl)
        max_err = std::max(max_err, solved[lvl].sup_distance(online[lvl]));
    const bool ok = max_err <= 1e-12;
    acceptance = {{"identity_holds", ok}, {"max_abs_error", max_err}};
    json payload;
    payload["levels"] = static_cast<std::int64_t>(solved.size());
    payload["max_abs_error"] = max_err;
    if (!ok) throw CheckFailure("replay-process identity violated");
    return payload;
}

json run_gen_model(const ExperimentConfig& c, json& acceptance) {
    if (!c.generator) throw ConfigError("gen-model needs a generator spec");
    Philox rng(*c.seed, /*stream=*/7);
    const Mdp<double> m = generate_model(*c.generator, rng);
    const ValidationReport rep = validate(m);
    if (!rep.ok()) throw CheckFailure("generated model failed validation");
    if (!is_communicating(m)) throw CheckFailure("generated model is not communicating");
    save_model(m, c.out_dir + "/model.json");
    acceptance = {{"valid", true}, {"communicating", true}};
    json payload;
    payload["path"] = "model.json";  // relative to out_dir, keeps records reproducible
    payload["model"] = model_to_json(m);
    return payload;
}

}  // namespace

std::vector<std::string> available_series(const RunRecord& record) {
    std::vector<std::string> out;
    const json& p = record.payload;
    if (p.contains("running_average")) out.push_back("running-average");
    if (p.contains("mertens_neyman")) out.push_back("mertens-neyman");
    if (p.contains("checkpoints")) out.push_back("q-distance");
    return out;
}

std::vector<std::pair<double, double>> extract_series(const RunRecord& record,
                                                      const std::string& series) {
    std::vector<std::pair<double, double>> out;
    const json& p = record.payload;
    if (series == "running-average" && p.contains("running_average")) {
        for (const auto& pt : p.at("running_average"))
            out.emplace_back(pt[0].get<double>(), pt[1].get<double>());
        return out;
    }
    if (series == "mertens-neyman" && p.contains("mertens_neyman")) {
        for (const auto& pt : p.at("mertens_neyman"))
            out.emplace_back(pt[0].get<double>(), pt[1].get<double>());
        return out;
    }
    if (series == "q-distance" && p.contains("checkpoints")) {
        for (const auto& cp : p.at("checkpoints"))
            out.emplace_back(cp.at("t").get<double>(),
                             cp.at("distance_to_optimal").get<double>());
        return out;
    }
    std::string names;
    for (const auto& name : available_series(record)) names += " " + name;
    throw ConfigError("unknown series '" + series + "'; available:" + names);
}

RunRecord run_experiment(const ExperimentConfig& config) {
    config.validate_for_kind();
    std::filesystem::create_directories(config.out_dir);
    RunRecord record;
    record.config_echo = config.to_json();
    record.version = tool_version();
    record.acceptance = json::object();
    const auto t0 = std::chrono::steady_clock::now();
    if (config.kind == "solve")
        record.payload = run_solve(config, record.acceptance);
    else if (config.kind == "evaluate")
        record.payload = run_evaluate(config, record.acceptance);
    else if (config.kind == "perturb-audit")
        record.payload = run_perturb_audit(config, record.acceptance);
    else if (config.kind == "learn-avg")
        record.payload = run_learn_avg(config, record.acceptance);
    else if (config.kind == "learn-q")
        record.payload = run_learn_q(config, record.acceptance);
    else if (config.kind == "verify-rational")
        record.payload = run_verify_rational(config, record.acceptance);
    else if (config.kind == "arp-check")
        record.payload = run_arp_check(config, record.acceptance);
    else if (config.kind == "gen-model")
        record.payload = run_gen_model(config, record.acceptance);
    else if (config.kind == "plot-data") {
        std::ifstream in(config.record_path);
        if (!in) throw ConfigError("cannot read record " + config.record_path);
        json doc;
        in >> doc;
        RunRecord source;
        source.payload = doc.at("payload");
        const auto series = extract_series(source, config.series);
        write_series_csv(series, "x", "y", config.out_dir + "/" + config.series + ".csv");
        record.payload = {{"path", config.series + ".csv"}, {"rows", series.size()}};
    } else {
        throw ConfigError("unknown experiment kind: " + config.kind);
    }
    record.wall_ms = std::chrono::duration<double, std::milli>(
                         std::chrono::steady_clock::now() - t0)
                         .count();
    return record;
}

}  // namespace mdpkit
