#include "optd/experiment.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <list>
#include <sstream>
#include <thread>

namespace optd {

namespace fs = std::filesystem;
using resource::PolicyKind;

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos)
        return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

double to_double(const std::string& key, const std::string& text) {
    const std::string t = trim(text);
    double v = 0.0;
    const auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
    if (ec != std::errc() || ptr != t.data() + t.size() || t.empty())
        throw ValidationError("config key '" + key + "': '" + t + "' is not a number");
    return v;
}

std::uint64_t to_u64(const std::string& key, const std::string& text) {
    const std::string t = trim(text);
    std::uint64_t v = 0;
    const auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
    if (ec != std::errc() || ptr != t.data() + t.size() || t.empty())
        throw ValidationError("config key '" + key + "': '" + t + "' is not a nonnegative integer");
    return v;
}

std::vector<std::string> to_list(const std::string& key, const std::string& text) {
    std::string t = trim(text);
    if (t.size() < 2 || t.front() != '[' || t.back() != ']')
        throw ValidationError("config key '" + key + "' expects a list like [a, b]");
    t = t.substr(1, t.size() - 2);
    std::vector<std::string> out;
    if (trim(t).empty())
        return out;
    std::stringstream ss(t);
    std::string item;
    while (std::getline(ss, item, ','))
        out.push_back(trim(item));
    return out;
}

std::vector<double> to_doubles(const std::string& key, const std::string& text) {
    const std::string t = trim(text);
    if (!t.empty() && t.front() != '[')
        return {to_double(key, t)};
    std::vector<double> out;
    for (const auto& item : to_list(key, t))
        out.push_back(to_double(key, item));
    return out;
}

bool to_bool(const std::string& key, const std::string& text) {
    const std::string t = trim(text);
    if (t == "true" || t == "1" || t == "yes")
        return true;
    if (t == "false" || t == "0" || t == "no")
        return false;
    throw ValidationError("config key '" + key + "' expects true or false");
}

std::string join_doubles(const std::vector<double>& v) {
    std::string s = "[";
    for (std::size_t i = 0; i < v.size(); ++i)
        s += (i ? ", " : "") + format_double(v[i]);
    return s + "]";
}

std::string join_vector(const Vector& v) {
    return join_doubles(std::vector<double>(v.data(), v.data() + v.size()));
}

bool is_policy_kind(const std::string& name) {
    try {
        resource::parse_policy_kind(name);
        return true;
    } catch (const ValidationError&) {
        return false;
    }
}

/// Collects output files and writes them once computation is done.
class OutputWriter {
public:
    explicit OutputWriter(const ExperimentConfig& cfg) : root_(cfg.out_dir) {}

    std::ostringstream& file(const std::string& relative) {
        buffers_.emplace_back(relative, std::ostringstream{});
        return buffers_.back().second;
    }

    std::vector<std::string> flush() {
        std::vector<std::string> names;
        for (auto& [name, buf] : buffers_) {
            const fs::path path = root_ / name;
            fs::create_directories(path.parent_path());
            std::ofstream os(path, std::ios::binary | std::ios::trunc);
            if (!os)
                throw Error("cannot open " + path.string() + " for writing");
            os << buf.str();
            if (!os)
                throw Error("failed writing " + path.string());
            names.push_back(name);
        }
        buffers_.clear();
        return names;
    }

private:
    fs::path root_;
    std::list<std::pair<std::string, std::ostringstream>> buffers_; // stable references
};

class Stopwatch {
public:
    double seconds() const {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    }

private:
    std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

void write_state_columns(std::ostream& os, const resource::StateEnumeration& states, std::size_t i) {
    os << i;
    for (auto v : states.state(i))
        os << ',' << v;
}

void write_state_header(std::ostream& os, std::size_t m) {
    os << "index";
    for (std::size_t j = 1; j <= m; ++j)
        os << ",x" << j;
}

void write_gnuplot(std::ostream& os, const std::string& csv, std::size_t series,
                   const std::string& title) {
    os << "set datafile separator ','\n"
       << "set key autotitle columnhead\n"
       << "set xlabel 'iteration'\n"
       << "set ylabel '||r||_2'\n"
       << "set title '" << title << "'\n"
       << "plot for [i=2:" << series + 1 << "] '" << csv << "' using 1:i with lines\n";
}

} // namespace

// ---------------------------------------------------------------------------
// Config
// ---------------------------------------------------------------------------

void ExperimentConfig::set(const std::string& key, const std::string& raw) {
    const std::string value = trim(raw);
    if (key == "m") {
        spec.m = to_u64(key, value);
    } else if (key == "N") {
        spec.capacity = to_u64(key, value);
    } else if (key == "c") {
        spec.price = to_doubles(key, value);
    } else if (key == "lambda") {
        spec.arrival = to_doubles(key, value);
    } else if (key == "mu") {
        spec.release = to_doubles(key, value);
    } else if (key == "alpha") {
        spec.discount = td.discount = to_double(key, value);
    } else if (key == "run_length") {
        td.run_length = to_u64(key, value);
    } else if (key == "num_runs") {
        td.num_runs = to_u64(key, value);
    } else if (key == "seed") {
        td.base_seed = to_u64(key, value);
    } else if (key == "step") {
        if (value == "diminishing")
            td.step.kind = StepSchedule::Kind::diminishing;
        else if (value == "constant")
            td.step.kind = StepSchedule::Kind::constant;
        else
            throw ValidationError("step must be 'diminishing' or 'constant'");
    } else if (key == "step_a") {
        td.step.a = to_double(key, value);
    } else if (key == "step_b") {
        td.step.b = to_double(key, value);
    } else if (key == "step_gamma") {
        td.step.gamma = to_double(key, value);
    } else if (key == "decimation") {
        td.decimation = to_u64(key, value);
    } else if (key == "fidelity") {
        if (value == "standard" || value == "default")
            td.fidelity = Fidelity::standard;
        else if (value == "literal" || value == "paper")
            td.fidelity = Fidelity::literal;
        else
            throw ValidationError("fidelity must be 'default' or 'literal'");
    } else if (key == "initial_state") {
        td.initial_state = to_u64(key, value);
    } else if (key == "r0") {
        const auto v = to_doubles(key, value);
        td.r0 = Eigen::Map<const Vector>(v.data(), static_cast<Eigen::Index>(v.size()));
    } else if (key == "divergence_limit") {
        td.divergence_limit = to_double(key, value);
    } else if (key == "target_policy") {
        target_policy = value;
    } else if (key == "mixing") {
        mixing = to_doubles(key, value);
    } else if (key == "exploration") {
        exploration = value;
    } else if (key == "policies") {
        policies = to_list(key, value);
    } else if (key == "projection") {
        if (value == "behavior")
            projection = ProjectedTransition::behavior;
        else if (value == "target")
            projection = ProjectedTransition::target;
        else
            throw ValidationError("projection must be 'target' or 'behavior'");
    } else if (key == "hybrid_weight") {
        policy_opts.hybrid_weight = to_double(key, value);
    } else if (key == "modulo_offset") {
        policy_opts.modulo_offset = to_u64(key, value);
    } else if (key == "cap") {
        cap = to_u64(key, value);
    } else if (key == "verify_cap") {
        verify_cap = to_u64(key, value);
    } else if (key == "mc_samples") {
        mc_samples = to_u64(key, value);
    } else if (key == "out") {
        out_dir = value;
    } else if (key == "threads") {
        threads = to_u64(key, value);
    } else if (key == "plot") {
        emit_plot = to_bool(key, value);
    } else {
        throw ValidationError("unknown config key '" + key + "'");
    }
}

ExperimentConfig ExperimentConfig::parse(std::istream& is) {
    ExperimentConfig cfg;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        if (const auto hash = line.find('#'); hash != std::string::npos)
            line.erase(hash);
        line = trim(line);
        if (line.empty())
            continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ValidationError("config line " + std::to_string(lineno) + ": expected key = value");
        cfg.set(trim(line.substr(0, eq)), line.substr(eq + 1));
    }
    return cfg;
}

ExperimentConfig ExperimentConfig::load(const fs::path& path) {
    std::ifstream is(path);
    if (!is)
        throw ValidationError("cannot read config " + path.string());
    return parse(is);
}

std::string ExperimentConfig::canonical() const {
    std::ostringstream os;
    os << "m = " << spec.m << '\n'
       << "N = " << spec.capacity << '\n'
       << "c = " << join_doubles(spec.price) << '\n'
       << "lambda = " << join_doubles(spec.arrival) << '\n'
       << "mu = " << join_doubles(spec.release) << '\n'
       << "alpha = " << format_double(spec.discount) << '\n'
       << "run_length = " << td.run_length << '\n'
       << "num_runs = " << td.num_runs << '\n'
       << "seed = " << td.base_seed << '\n'
       << "step = " << (td.step.kind == StepSchedule::Kind::constant ? "constant" : "diminishing") << '\n'
       << "step_a = " << format_double(td.step.a) << '\n'
       << "step_b = " << format_double(td.step.b) << '\n'
       << "step_gamma = " << format_double(td.step.gamma) << '\n'
       << "decimation = " << td.decimation << '\n'
       << "fidelity = " << (td.fidelity == Fidelity::literal ? "literal" : "default") << '\n';
    if (td.initial_state)
        os << "initial_state = " << *td.initial_state << '\n';
    if (td.r0)
        os << "r0 = " << join_vector(*td.r0) << '\n';
    os << "divergence_limit = " << format_double(td.divergence_limit) << '\n'
       << "target_policy = " << target_policy << '\n'
       << "mixing = " << (mixing.empty() ? join_doubles({spec.discount}) : join_doubles(mixing)) << '\n'
       << "exploration = " << exploration << '\n'
       << "policies = [";
    for (std::size_t i = 0; i < policies.size(); ++i)
        os << (i ? ", " : "") << policies[i];
    os << "]\n"
       << "projection = " << (projection == ProjectedTransition::behavior ? "behavior" : "target") << '\n'
       << "hybrid_weight = " << format_double(policy_opts.hybrid_weight) << '\n'
       << "modulo_offset = " << policy_opts.modulo_offset << '\n'
       << "cap = " << cap << '\n'
       << "verify_cap = " << verify_cap << '\n'
       << "mc_samples = " << mc_samples << '\n';
    return os.str();
}

void ExperimentConfig::validate() const {
    spec.validate();
    td.validate();
    if (td.discount != spec.discount)
        throw ValidationError("TD discount differs from the model discount");
    if (target_policy != "optimal" && !is_policy_kind(target_policy))
        throw ValidationError("unknown target policy '" + target_policy + "'");
    if (exploration != "uniform-random" && !is_policy_kind(exploration))
        throw ValidationError("exploration must be 'uniform-random' or a policy kind");
    for (const auto& p : policies)
        if (p != "optimal" && !is_policy_kind(p))
            throw ValidationError("unknown policy '" + p + "' in policies");
    for (double a : mixing)
        if (!(a > 0.0 && a < 1.0))
            throw ValidationError("mixing weights must lie strictly inside (0,1)");
    if (!(policy_opts.hybrid_weight >= 0.0 && policy_opts.hybrid_weight <= 1.0))
        throw ValidationError("hybrid_weight must lie in [0,1]");
    if (td.r0 && static_cast<std::size_t>(td.r0->size()) != spec.m + 1)
        throw StructuralError("r0 must have m + 1 entries");
}

std::uint64_t fnv1a64(const std::string& text) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char ch : text) {
        h ^= ch;
        h *= 0x100000001b3ULL;
    }
    return h;
}

// ---------------------------------------------------------------------------
// Pipeline
// ---------------------------------------------------------------------------

Pipeline build_pipeline(const ExperimentConfig& cfg, const std::string& policy) {
    cfg.validate();
    const std::string name = policy.empty() ? cfg.target_policy : policy;
    resource::StateEnumeration states(cfg.spec.m, cfg.spec.capacity);
    Mdp mdp = resource::build_mdp(cfg.spec, states);
    Vector reward = mdp.reward();
    FeatureMatrix phi = resource::feature_matrix(cfg.spec, states);

    const std::size_t n = states.size();
    if (cfg.td.initial_state && *cfg.td.initial_state >= n)
        throw ValidationError("initial_state is outside the state space");

    Policy target_pol;
    if (name == "optimal") {
        if (n > cfg.cap)
            throw CapabilityError("optimal target policy needs an exact solve; |X| = " + std::to_string(n) +
                                  " exceeds cap " + std::to_string(cfg.cap));
        target_pol = value_iteration(mdp, default_value_iteration_tolerance(cfg.spec.discount)).policy;
    } else {
        target_pol = resource::target_policy(cfg.spec, states, resource::parse_policy_kind(name),
                                             cfg.policy_opts);
    }
    StochasticMatrix target = transition_under_policy(mdp, target_pol);

    Policy explore_pol = cfg.exploration == "uniform-random"
                             ? Policy{StochasticPolicy::uniform(n, cfg.spec.m)}
                             : resource::target_policy(cfg.spec, states,
                                                       resource::parse_policy_kind(cfg.exploration),
                                                       cfg.policy_opts);
    StochasticMatrix exploration = transition_under_policy(mdp, explore_pol);

    Vector mixing;
    if (cfg.mixing.empty())
        mixing = Vector::Constant(static_cast<Eigen::Index>(n), cfg.spec.discount);
    else if (cfg.mixing.size() == 1)
        mixing = Vector::Constant(static_cast<Eigen::Index>(n), cfg.mixing[0]);
    else if (cfg.mixing.size() == n)
        mixing = Eigen::Map<const Vector>(cfg.mixing.data(), static_cast<Eigen::Index>(n));
    else
        throw StructuralError("mixing must have one entry or one per state (" + std::to_string(n) + ")");
    PerturbationSpec perturbation(std::move(mixing), exploration);
    StochasticMatrix behavior = perturb_transition(target, perturbation);

    return Pipeline{std::move(states),       std::move(mdp),          std::move(reward),
                    std::move(phi),          std::move(target),       std::move(exploration),
                    std::move(perturbation), std::move(behavior)};
}

ProjectedSystem projected_system(const ExperimentConfig& cfg, const Pipeline& p,
                                 const ProbabilityDistribution& behavior_weights) {
    const StochasticMatrix& inner = cfg.projection == ProjectedTransition::behavior ? p.behavior : p.target;
    return assemble_projected_system(p.phi, behavior_weights, inner, p.reward, cfg.spec.discount);
}

ProjectedSystem projected_system(const ExperimentConfig& cfg, const Pipeline& p) {
    return projected_system(cfg, p, stationary_distribution(p.behavior));
}

// ---------------------------------------------------------------------------
// Subcommands
// ---------------------------------------------------------------------------

StateCountResult cmd_state_count(std::size_t m, std::size_t capacity, std::ostream& log,
                                 std::uint64_t enumerate_limit) {
    if (m == 0)
        throw ValidationError("m must be at least 1");
    StateCountResult r;
    r.count = resource::state_count_string(m, capacity);
    std::optional<std::uint64_t> closed;
    try {
        closed = resource::state_count(m, capacity);
    } catch (const CapabilityError&) {
    }
    if (closed && *closed <= enumerate_limit) {
        r.enumerated = resource::StateEnumeration(m, capacity).size();
        r.agree = *r.enumerated == *closed;
    }
    log << "m = " << m << ", N = " << capacity << ": " << r.count << " states";
    if (r.enumerated)
        log << " (enumeration " << (r.agree ? "agrees" : "DISAGREES: " + std::to_string(*r.enumerated)) << ')';
    log << '\n';
    if (!r.agree)
        throw NumericalError("enumeration and closed-form count disagree");
    return r;
}

SolveExactResult cmd_solve_exact(const ExperimentConfig& cfg, std::ostream& log) {
    const Stopwatch clock;
    cfg.spec.validate();
    const std::uint64_t n = resource::state_count(cfg.spec.m, cfg.spec.capacity);
    if (n > cfg.cap)
        throw CapabilityError("|X| = " + std::to_string(n) + " exceeds the exact-solve cap " +
                              std::to_string(cfg.cap) + "; use td-run for this size");
    const resource::StateEnumeration states(cfg.spec.m, cfg.spec.capacity);
    const Mdp mdp = resource::build_mdp(cfg.spec, states);
    const double alpha = cfg.spec.discount;

    SolveExactResult r{value_iteration(mdp, default_value_iteration_tolerance(alpha)), {}, {}};
    if (!r.solution.report.converged)
        throw NumericalError("value iteration did not converge");
    r.policy_value = evaluate_policy_exact(transition_under_policy(mdp, r.solution.policy), mdp.reward(), alpha);
    r.norm_condition = norm_condition_check(mdp, alpha);

    OutputWriter out(cfg);
    auto& jcsv = out.file("J_star.csv");
    write_state_header(jcsv, cfg.spec.m);
    jcsv << ",value\n";
    auto& pcsv = out.file("policy.csv");
    write_state_header(pcsv, cfg.spec.m);
    pcsv << ",action\n";
    for (std::size_t i = 0; i < states.size(); ++i) {
        write_state_columns(jcsv, states, i);
        jcsv << ',' << format_double(r.solution.value[static_cast<Eigen::Index>(i)]) << '\n';
        write_state_columns(pcsv, states, i);
        pcsv << ',' << r.solution.policy.action[i] + 1 << '\n';
    }
    auto& rep = out.file("report.txt");
    rep << "states = " << states.size() << '\n';
    r.solution.report.write(rep);
    const double sup = r.solution.value.cwiseAbs().maxCoeff();
    rep << "value_sup_norm = " << format_double(sup) << '\n'
        << "value_sup_bound = " << format_double(mdp.reward().cwiseAbs().maxCoeff() / (1.0 - alpha)) << '\n'
        << "policy_evaluation_gap = "
        << format_double((r.solution.value - r.policy_value).cwiseAbs().maxCoeff()) << '\n';
    r.norm_condition.write(rep);
    auto files = out.flush();
    log << "solve-exact: " << states.size() << " states, " << r.solution.report.iterations
        << " iterations, ||J*|| = " << format_double(sup) << ", norm condition "
        << (r.norm_condition.holds ? "holds" : "fails") << '\n';
    write_manifest(cfg, "solve-exact", files, clock.seconds());
    return r;
}

ProjectResult cmd_project(const ExperimentConfig& cfg, std::ostream& log) {
    const Stopwatch clock;
    const Pipeline p = build_pipeline(cfg);
    ProjectResult r{projected_system(cfg, p), {}, {}, 0, {}};
    r.r_direct = solve_direct(r.system);
    r.spectrum = certificate_iteration_spectrum(r.system);
    IterationOptions opts;
    opts.step_tol = 1e-13;
    const auto traj = iterate_projected(r.system, ParameterVector::Zero(r.r_direct.size()), opts);
    r.r_iterated = traj.back();
    r.iterations = traj.size() - 1;

    OutputWriter out(cfg);
    auto& sys = out.file("projected_system.txt");
    sys << "projected_transition = " << (cfg.projection == ProjectedTransition::behavior ? "behavior" : "target")
        << '\n';
    r.system.write(sys);
    sys << "spectral_radius = " << format_double(r.spectrum.spectral_radius) << '\n'
        << "spectral_radius_below_one = " << (r.spectrum.holds ? "true" : "false") << '\n'
        << "iterations = " << r.iterations << '\n'
        << "iteration_gap = " << format_double((r.r_iterated - r.r_direct).norm()) << '\n';
    auto& csv = out.file("r_direct.csv");
    csv << "feature,r_direct,r_iterated\n";
    for (Eigen::Index i = 0; i < r.r_direct.size(); ++i)
        csv << i + 1 << ',' << format_double(r.r_direct[i]) << ',' << format_double(r.r_iterated[i]) << '\n';
    auto files = out.flush();
    log << "project: r = " << join_vector(r.r_direct) << ", spectral radius "
        << format_double(r.spectrum.spectral_radius) << '\n';
    write_manifest(cfg, "project", files, clock.seconds());
    return r;
}

TdExperimentResult run_td_experiment(const ExperimentConfig& cfg, const Pipeline& p, bool cross_check) {
    TdExperimentResult r;
    const std::size_t threads =
        cfg.threads ? cfg.threads : std::max<std::size_t>(1, std::thread::hardware_concurrency());
    r.runs = run_off_policy_td_batch(p.behavior, p.target, p.reward, p.phi, cfg.td, threads);
    r.aggregate = aggregate_runs(r.runs);
    if (cross_check && p.states.size() <= cfg.cap) {
        r.r_direct = solve_direct(projected_system(cfg, p));
        r.relative_error = ((r.aggregate.mean_final - *r.r_direct).array().abs() /
                            r.r_direct->array().abs())
                               .matrix();
    }
    return r;
}

TdExperimentResult cmd_td_run(const ExperimentConfig& cfg, std::ostream& log) {
    const Stopwatch clock;
    const Pipeline p = build_pipeline(cfg);
    TdExperimentResult r = run_td_experiment(cfg, p, true);

    OutputWriter out(cfg);
    const int width = std::max<int>(3, static_cast<int>(std::to_string(r.runs.size() - 1).size()));
    for (const auto& run : r.runs) {
        std::ostringstream name;
        name << "runs/run_" << std::setw(width) << std::setfill('0') << run.run_index << ".csv";
        run.write_csv(out.file(name.str()));
    }
    r.aggregate.write_mean_csv(out.file("aggregate.csv"));
    r.aggregate.write_norm_curves_csv(out.file("norm_curves.csv"));
    if (cfg.emit_plot)
        write_gnuplot(out.file("plot_norms.gp"), "norm_curves.csv", r.aggregate.norm_curves.size(),
                      "parameter norm per run");

    auto& sum = out.file("summary.txt");
    sum << "states = " << p.states.size() << '\n'
        << "target_policy = " << cfg.target_policy << '\n'
        << "runs = " << r.runs.size() << '\n'
        << "used_runs = " << r.aggregate.used_runs << '\n'
        << "diverged_runs = " << r.aggregate.diverged_runs << '\n'
        << "mean_r = " << join_vector(r.aggregate.mean_final) << '\n'
        << "mean_final_norm = " << format_double(r.aggregate.mean_final.norm()) << '\n';
    if (r.aggregate.iterations.size() >= 20)
        sum << "norm_curve_flatness = "
            << format_double(last_decile_slope_ratio(r.aggregate.iterations, r.aggregate.mean_norm_curve)) << '\n';
    if (r.r_direct) {
        sum << "r_direct = " << join_vector(*r.r_direct) << '\n'
            << "relative_error = " << join_vector(*r.relative_error) << '\n'
            << "max_relative_error = " << format_double(r.relative_error->maxCoeff()) << '\n';
    }
    for (const auto& run : r.runs)
        if (run.diverged)
            sum << "diverged run " << run.run_index << " after " << run.iterations_done << " updates\n";
    auto files = out.flush();

    log << "td-run: " << r.aggregate.used_runs << " of " << r.runs.size() << " runs used, mean r = "
        << join_vector(r.aggregate.mean_final) << '\n';
    if (r.r_direct)
        log << "        exact projected solution = " << join_vector(*r.r_direct)
            << ", max relative error = " << format_double(r.relative_error->maxCoeff()) << '\n';
    write_manifest(cfg, "td-run", files, clock.seconds());
    return r;
}

PolicyComparison compare_policies(const ExperimentConfig& cfg) {
    if (cfg.policies.empty())
        throw ValidationError("policies list is empty");
    PolicyComparison cmp;
    for (const auto& name : cfg.policies) {
        const Pipeline p = build_pipeline(cfg, name);
        TdExperimentResult r = run_td_experiment(cfg, p, false);
        double norm_sum = 0.0;
        for (const auto& run : r.runs)
            if (!run.diverged)
                norm_sum += run.final_r.norm();
        const double mean_norm = norm_sum / static_cast<double>(r.aggregate.used_runs);
        cmp.curves.push_back({name, std::move(r.aggregate), mean_norm});
    }

    std::ostringstream detail;
    auto find = [&](const std::string& n) -> const PolicyCurve* {
        for (const auto& c : cmp.curves)
            if (c.policy == n)
                return &c;
        return nullptr;
    };
    const PolicyCurve* greedy = find("greedy");
    const PolicyCurve* fair = find("fair");
    auto check = [&](const PolicyCurve& hi, const PolicyCurve& lo) {
        const bool ok = hi.final_norm_mean >= lo.final_norm_mean;
        detail << hi.policy << " (" << format_double(hi.final_norm_mean) << ") >= " << lo.policy << " ("
               << format_double(lo.final_norm_mean) << "): " << (ok ? "yes" : "NO") << '\n';
        cmp.ordering_holds = cmp.ordering_holds && ok;
    };
    for (const auto& c : cmp.curves) {
        if (c.policy == "greedy" || c.policy == "fair")
            continue;
        if (greedy)
            check(*greedy, c);
        if (fair)
            check(c, *fair);
    }
    if (greedy && fair)
        check(*greedy, *fair);
    cmp.ordering_detail = detail.str();
    return cmp;
}

PolicyComparison cmd_compare_policies(const ExperimentConfig& cfg, std::ostream& log) {
    const Stopwatch clock;
    PolicyComparison cmp = compare_policies(cfg);

    OutputWriter out(cfg);
    auto& csv = out.file("policy_comparison.csv");
    csv << "policy,final_norm_mean,used_runs,diverged_runs";
    const Eigen::Index psi = cmp.curves.front().aggregate.mean_final.size();
    for (Eigen::Index i = 0; i < psi; ++i)
        csv << ",r_" << i + 1;
    csv << '\n';
    for (const auto& c : cmp.curves) {
        csv << c.policy << ',' << format_double(c.final_norm_mean) << ',' << c.aggregate.used_runs << ','
            << c.aggregate.diverged_runs;
        for (Eigen::Index i = 0; i < psi; ++i)
            csv << ',' << format_double(c.aggregate.mean_final[i]);
        csv << '\n';
    }
    auto& curves = out.file("policy_norm_curves.csv");
    curves << "iteration";
    for (const auto& c : cmp.curves)
        curves << ',' << c.policy;
    curves << '\n';
    const auto& grid = cmp.curves.front().aggregate.iterations;
    for (std::size_t k = 0; k < grid.size(); ++k) {
        curves << grid[k];
        for (const auto& c : cmp.curves)
            curves << ',' << format_double(c.aggregate.mean_norm_curve.at(k));
        curves << '\n';
    }
    if (cfg.emit_plot)
        write_gnuplot(out.file("plot_policies.gp"), "policy_norm_curves.csv", cmp.curves.size(),
                      "mean parameter norm per target policy");
    auto& rep = out.file("ordering.txt");
    rep << cmp.ordering_detail << "ordering_holds = " << (cmp.ordering_holds ? "true" : "false") << '\n';
    auto files = out.flush();

    for (const auto& c : cmp.curves)
        log << "compare-policies: " << c.policy << " final mean norm " << format_double(c.final_norm_mean)
            << '\n';
    log << "compare-policies: ordering " << (cmp.ordering_holds ? "holds" : "does not hold") << '\n';
    write_manifest(cfg, "compare-policies", files, clock.seconds());
    return cmp;
}

VerifyResult cmd_verify(const ExperimentConfig& cfg, std::ostream& log) {
    const Stopwatch clock;
    const Pipeline p = build_pipeline(cfg);
    const double alpha = cfg.spec.discount;
    VerifyResult r;

    r.target_regularity = is_regular(p.target);
    if (r.target_regularity.regular)
        r.target_pd = certificate_positive_definite(stationary_distribution(p.target), p.target, alpha);
    const ProbabilityDistribution behavior_weights = stationary_distribution(p.behavior);
    r.behavior_pd = certificate_positive_definite(behavior_weights, p.target, alpha);
    r.spectrum = certificate_iteration_spectrum(projected_system(cfg, p, behavior_weights));
    r.mixture = deviation_report(p.target, p.perturbation);
    r.norm_condition = norm_condition_check(p.mdp, alpha);

    if (p.states.size() <= cfg.verify_cap) {
        const auto opt = value_iteration(p.mdp, default_value_iteration_tolerance(alpha));
        const StochasticMatrix p_star = transition_under_policy(p.mdp, opt.policy);
        const StochasticMatrix p_bar = perturb_transition(p_star, p.perturbation);
        r.value_bound = value_perturbation_bound(opt.value, evaluate_policy_exact(p_bar, p.reward, alpha),
                                                 p.reward, alpha);
    }
    r.all_hold = (!r.target_pd || r.target_pd->holds) && r.behavior_pd.holds && r.spectrum.holds &&
                 r.mixture.within_threshold && (!r.value_bound || r.value_bound->holds);

    OutputWriter out(cfg);
    auto& os = out.file("certificates.txt");
    auto pd = [&](const std::string& tag, const DefinitenessReport& d) {
        os << tag << ".min_eigenvalue = " << format_double(d.min_eigenvalue) << '\n'
           << tag << ".scaled_min_eigenvalue = " << format_double(d.scaled_min_eigenvalue) << '\n'
           << tag << ".scale = " << format_double(d.norm) << '\n'
           << tag << ".method = " << d.method << '\n'
           << tag << ".certified = " << (d.certified ? "true" : "false") << '\n'
           << tag << ".holds = " << (d.holds ? "true" : "false") << '\n';
    };
    os << "states = " << p.states.size() << '\n'
       << "target_policy = " << cfg.target_policy << '\n'
       << "target_regular = " << (r.target_regularity.regular ? "true" : "false") << '\n';
    if (!r.target_regularity.regular)
        os << "target_regularity_diagnosis = " << r.target_regularity.diagnosis << '\n';
    if (r.target_pd)
        pd("target_weighted_pd", *r.target_pd);
    else
        os << "target_weighted_pd = skipped (target chain not regular)\n";
    pd("behavior_weighted_pd", r.behavior_pd);
    os << "iteration_spectral_radius = " << format_double(r.spectrum.spectral_radius) << '\n'
       << "iteration_spectral_radius_below_one = " << (r.spectrum.holds ? "true" : "false") << '\n';
    r.mixture.write(os);
    r.norm_condition.write(os);
    if (r.value_bound) {
        os << "value_bound.lhs = " << format_double(r.value_bound->lhs) << '\n'
           << "value_bound.rhs = " << format_double(r.value_bound->rhs) << '\n'
           << "value_bound.holds = " << (r.value_bound->holds ? "true" : "false") << '\n';
    } else {
        os << "value_bound = skipped (|X| above verify_cap)\n";
    }
    os << "all_hold = " << (r.all_hold ? "true" : "false") << '\n';
    auto files = out.flush();
    log << "verify: certificates " << (r.all_hold ? "hold" : "do not all hold") << ", norm condition "
        << format_double(r.norm_condition.value) << (r.norm_condition.holds ? " < " : " >= ")
        << format_double(r.norm_condition.threshold) << '\n';
    write_manifest(cfg, "verify", files, clock.seconds());
    return r;
}

void write_manifest(const ExperimentConfig& cfg, const std::string& subcommand,
                    const std::vector<std::string>& files, double wall_seconds) {
    const std::string canon = cfg.canonical();
    char hash[17];
    std::snprintf(hash, sizeof hash, "%016llx", static_cast<unsigned long long>(fnv1a64(canon)));
    OutputWriter out(cfg);
    auto& os = out.file("manifest.txt");
    os << "subcommand = " << subcommand << '\n'
       << "version = " << kArtifactVersion << '\n'
       << "config_hash = " << hash << '\n'
       << "seed = " << cfg.td.base_seed << '\n'
       << "threads = " << cfg.threads << '\n'
       << "wall_seconds = " << std::fixed << std::setprecision(3) << wall_seconds << '\n'
       << "files =\n";
    for (const auto& f : files)
        os << "  " << f << '\n';
    os << "config =\n" << canon;
    out.flush();
}

int exit_code_for(const std::exception& e) {
    if (dynamic_cast<const ValidationError*>(&e) || dynamic_cast<const StructuralError*>(&e))
        return 2;
    if (dynamic_cast<const NumericalError*>(&e))
        return 3;
    if (dynamic_cast<const CapabilityError*>(&e))
        return 4;
    return 1;
}

} // namespace optd
