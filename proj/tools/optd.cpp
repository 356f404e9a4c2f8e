// optd: command line front end for the resource-allocation experiments.

#include "optd/experiment.hpp"

#include <CLI11.hpp>

#include <cstdlib>
#include <iostream>

namespace {

struct CommonFlags {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> out;
    std::optional<std::size_t> threads;
    std::optional<std::string> fidelity;
    std::vector<std::string> overrides;
};

void add_common(CLI::App* sub, CommonFlags& f, bool config_required) {
    auto* c = sub->add_option("--config", f.config, "experiment config file (key = value)");
    if (config_required)
        c->required();
    sub->add_option("--seed", f.seed, "base seed for the per-run random streams");
    sub->add_option("--out", f.out, "output directory");
    sub->add_option("--threads", f.threads, "worker threads for independent runs");
    sub->add_option("--fidelity", f.fidelity, "TD update variant")
        ->check(CLI::IsMember({"default", "literal", "paper"}));
    sub->add_option("--set", f.overrides, "extra key=value config override (repeatable)");
}

optd::ExperimentConfig resolve(const CommonFlags& f) {
    optd::ExperimentConfig cfg = optd::ExperimentConfig::load(f.config);
    for (const auto& kv : f.overrides) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos)
            throw optd::ValidationError("--set expects key=value, got '" + kv + "'");
        cfg.set(kv.substr(0, eq), kv.substr(eq + 1));
    }
    if (f.seed)
        cfg.td.base_seed = *f.seed;
    if (f.threads)
        cfg.set("threads", std::to_string(*f.threads));
    if (f.fidelity)
        cfg.set("fidelity", *f.fidelity);
    if (f.out)
        cfg.out_dir = *f.out;
    else if (const char* env = std::getenv(optd::kOutDirEnv); env && *env)
        cfg.out_dir = env;
    cfg.validate();
    return cfg;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Off-policy TD experiments on a resource-allocation MDP"};
    app.require_subcommand(1);
    app.set_version_flag("--version", optd::kArtifactVersion);

    CommonFlags flags;
    std::size_t m = 0, capacity = 0;

    auto* count = app.add_subcommand("state-count", "count states C(N + m, m)");
    count->add_option("--m", m, "number of price classes");
    count->add_option("--N", capacity, "shared capacity");
    count->add_option("--config", flags.config, "read m and N from a config file");

    auto* solve = app.add_subcommand("solve-exact", "value iteration on the full MDP");
    auto* project = app.add_subcommand("project", "assemble and solve the projected linear system");
    auto* td = app.add_subcommand("td-run", "Monte-Carlo off-policy TD runs");
    auto* compare = app.add_subcommand("compare-policies", "TD runs per target policy with shared seeds");
    auto* verify = app.add_subcommand("verify", "definiteness, spectral and perturbation certificates");
    for (auto* sub : {solve, project, td, compare, verify})
        add_common(sub, flags, true);

    CLI11_PARSE(app, argc, argv);

    try {
        if (*count) {
            if (!flags.config.empty()) {
                const auto cfg = optd::ExperimentConfig::load(flags.config);
                if (count->count("--m") == 0)
                    m = cfg.spec.m;
                if (count->count("--N") == 0)
                    capacity = cfg.spec.capacity;
            }
            const auto r = optd::cmd_state_count(m, capacity, std::cerr);
            std::cout << r.count << '\n';
            return 0;
        }
        const optd::ExperimentConfig cfg = resolve(flags);
        if (*solve)
            optd::cmd_solve_exact(cfg, std::cout);
        else if (*project)
            optd::cmd_project(cfg, std::cout);
        else if (*td)
            optd::cmd_td_run(cfg, std::cout);
        else if (*compare)
            optd::cmd_compare_policies(cfg, std::cout);
        else if (*verify)
            optd::cmd_verify(cfg, std::cout);
        return 0;
    } catch (const std::exception& e) {
        std::cerr << "optd: " << e.what() << '\n';
        return optd::exit_code_for(e);
    }
}
