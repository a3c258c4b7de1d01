#include <cstdlib>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "mdpkit/harness.hpp"

namespace {

using mdpkit::ExperimentConfig;

/// Shared flags; each subcommand only surfaces the ones it uses, but the
/// config file may set any of them.
struct CliState {
    std::string config_path;
    ExperimentConfig cfg;
};

void add_common(CLI::App* cmd, CliState& st) {
    cmd->add_option("--config", st.config_path, "JSON config file; flags override its fields");
    cmd->add_option("--out-dir", st.cfg.out_dir, "output directory")
        ->envname("MDPKIT_OUT_DIR");
    cmd->add_option("--jobs", st.cfg.jobs, "parallelism across independent seeds/policies");
}

int dispatch(CliState& st, const std::string& kind, const std::vector<std::string>& set_flags) {
    ExperimentConfig cfg = st.cfg;
    if (!st.config_path.empty()) {
        std::ifstream in(st.config_path);
        if (!in) {
            std::cerr << "error: cannot read config " << st.config_path << "\n";
            return 2;
        }
        mdpkit::json doc;
        try {
            in >> doc;
        } catch (const std::exception& e) {
            std::cerr << "error: config parse: " << e.what() << "\n";
            return 2;
        }
        ExperimentConfig from_file = ExperimentConfig::from_json(doc);
        // flags set on the command line override the file
        mdpkit::json merged = from_file.to_json();
        mdpkit::json overrides = cfg.to_json();
        for (const auto& key : set_flags)
            if (overrides.contains(key)) merged[key] = overrides[key];
        cfg = ExperimentConfig::from_json(merged);
    }
    cfg.kind = kind;
    try {
        const mdpkit::RunRecord record = mdpkit::run_experiment(cfg);
        const std::string record_path = cfg.out_dir + "/record.json";
        std::ofstream out(record_path);
        out << record.to_json().dump(2) << "\n";
        std::ofstream meta(cfg.out_dir + "/record.meta.json");
        meta << mdpkit::json{{"wall_ms", record.wall_ms}}.dump(2) << "\n";
        std::cout << record_path << "\n";
        return 0;
    } catch (const mdpkit::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const mdpkit::CheckFailure& e) {
        std::cerr << "check failed: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Tabular MDP solving, perturbation audits, and learning experiments"};
    app.require_subcommand(1);

    CliState st;
    std::optional<std::uint64_t> seed;
    mdpkit::GeneratorSpec gen;
    bool use_generator = false;
    std::string model;

    auto wire_model = [&](CLI::App* cmd) {
        cmd->add_option("--model", model, "model JSON file");
        cmd->add_option("--gen-states", gen.n_states, "generated model: states");
        cmd->add_option("--gen-actions", gen.n_actions, "generated model: actions per state");
        cmd->add_option("--gen-pmin", gen.p_min, "generated model: probability floor");
        cmd->add_option("--gen-reward-bound", gen.reward_bound, "generated model: reward bound");
        cmd->add_flag("--generate", use_generator, "generate the model instead of loading");
    };

    auto* solve = app.add_subcommand("solve", "optimal discounted (or limit-average) solution");
    wire_model(solve);
    add_common(solve, st);
    solve->add_option("--alpha", st.cfg.alpha, "discount factor");
    solve->add_option("--tol", st.cfg.tol, "value accuracy");
    solve->add_option("--start", st.cfg.start, "start state");
    solve->add_flag("--average", st.cfg.average_criterion, "limit-average criterion");
    solve->add_option("--seed", seed, "seed (for generated models)");

    auto* evaluate = app.add_subcommand("evaluate", "value of a fixed policy");
    wire_model(evaluate);
    add_common(evaluate, st);
    evaluate->add_option("--alpha", st.cfg.alpha, "discount factor");
    evaluate->add_option("--policy", st.cfg.policy, "'uniform' or a policy JSON file");
    evaluate->add_option("--start", st.cfg.start, "start state");
    evaluate->add_flag("--average", st.cfg.average_criterion, "limit-average criterion");
    evaluate->add_flag("--sweep", st.cfg.sweep, "emit the vanishing-discount sweep");
    evaluate->add_option("--sweep-points", st.cfg.sweep_points, "alphas 1-10^-k, k=1..points");
    evaluate->add_option("--seed", seed, "seed (for generated models)");

    auto* audit = app.add_subcommand("perturb-audit",
                                     "perturb within budgets and audit the robustness bounds");
    wire_model(audit);
    add_common(audit, st);
    audit->add_option("--alpha", st.cfg.alpha, "discount factor");
    audit->add_option("--eps", st.cfg.eps, "perturbation budget epsilon");
    audit->add_option("--start", st.cfg.start, "start state");
    audit->add_option("--stochastic", st.cfg.stochastic_policies, "random stochastic policies");
    audit->add_option("--seed", seed, "seed")->required();

    auto* lavg = app.add_subcommand("learn-avg", "episodic explore-exploit learning run");
    wire_model(lavg);
    add_common(lavg, st);
    lavg->add_option("--episodes", st.cfg.episodes, "number of episodes");
    lavg->add_option("--steps", st.cfg.steps, "hard step cap");
    lavg->add_option("--stride", st.cfg.stride, "running-average sampling stride");
    lavg->add_option("--desk-l1", st.cfg.desk_l1, "desk schedule first exploration length");
    lavg->add_flag("--theoretical-schedule", st.cfg.theoretical_schedule,
                   "use the analysis budgets (astronomical; capped by --steps)");
    lavg->add_option("--start", st.cfg.start, "start state");
    lavg->add_option("--seed", seed, "seed")->required();

    auto* lq = app.add_subcommand("learn-q", "online Q-learning run");
    wire_model(lq);
    add_common(lq, st);
    lq->add_option("--alpha", st.cfg.alpha, "discount factor");
    lq->add_option("--steps", st.cfg.steps, "steps");
    lq->add_option("--rate-schedule", st.cfg.rate_schedule, "harmonic | polynomial");
    lq->add_option("--omega", st.cfg.omega, "polynomial rate exponent");
    lq->add_option("--exploration", st.cfg.exploration, "greedy | eps-greedy");
    lq->add_option("--epsilon-c", st.cfg.epsilon_c, "eps-greedy constant (0 = default)");
    lq->add_option("--start", st.cfg.start, "start state");
    lq->add_option("--seed", seed, "seed")->required();

    auto* vrat = app.add_subcommand("verify-rational",
                                    "exact-arithmetic identities on a rational model");
    wire_model(vrat);
    add_common(vrat, st);
    vrat->add_option("--alpha-exact", st.cfg.alpha_exact, "rational discount, e.g. 1/2");

    auto* arp = app.add_subcommand("arp-check", "replay-process identity on a learning run");
    wire_model(arp);
    add_common(arp, st);
    arp->add_option("--alpha", st.cfg.alpha, "discount factor");
    arp->add_option("--steps", st.cfg.steps, "trajectory length");
    arp->add_option("--rate-schedule", st.cfg.rate_schedule, "harmonic | polynomial");
    arp->add_option("--start", st.cfg.start, "start state");
    arp->add_option("--seed", seed, "seed")->required();

    auto* genm = app.add_subcommand("gen-model", "generate a communicating model file");
    add_common(genm, st);
    genm->add_option("--states", gen.n_states, "states");
    genm->add_option("--actions", gen.n_actions, "actions per state");
    genm->add_option("--pmin", gen.p_min, "probability floor");
    genm->add_option("--reward-bound", gen.reward_bound, "reward bound");
    genm->add_option("--seed", seed, "seed")->required();

    auto* plot = app.add_subcommand("plot-data", "extract a series from a run record as CSV");
    add_common(plot, st);
    plot->add_option("--record", st.cfg.record_path, "record.json produced by a run")->required();
    plot->add_option("--series", st.cfg.series, "series name")->required();

    CLI11_PARSE(app, argc, argv);

    CLI::App* active = app.get_subcommands().front();
    const std::string kind = active->get_name();
    if (seed) st.cfg.seed = *seed;
    if (use_generator || kind == "gen-model") st.cfg.generator = gen;
    if (!model.empty()) st.cfg.model_path = model;

    std::vector<std::string> set_flags;
    for (const auto* opt : active->get_options())
        if (opt->count() > 0) {
            std::string name = opt->get_name();
            if (name.rfind("--", 0) == 0) name = name.substr(2);
            for (auto& ch : name)
                if (ch == '-') ch = '_';
            set_flags.push_back(name);
        }
    set_flags.push_back("seed");
    set_flags.push_back("out_dir");

    return dispatch(st, kind, set_flags);
}
