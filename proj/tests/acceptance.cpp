// Acceptance suite: one [PASS]/[FAIL] line per criterion, exit status 1 if any fail.

#include "optd/experiment.hpp"
#include "support.hpp"

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <map>
#include <iostream>
#include <sstream>

using namespace optd;
using testsupport::Rng;
namespace fs = std::filesystem;

namespace {

struct Outcome {
    bool pass;
    std::string detail;
};

int failures = 0;

void report(int id, const std::string& title, const std::function<Outcome()>& body) {
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
        o = body();
    } catch (const std::exception& e) {
        o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    std::printf("[%s] %d %s (%.1fs)\n", o.pass ? "PASS" : "FAIL", id, title.c_str(), secs);
    std::istringstream lines(o.detail);
    for (std::string line; std::getline(lines, line);)
        std::printf("       %s\n", line.c_str());
    std::fflush(stdout);
    failures += o.pass ? 0 : 1;
}

std::string vec(const Vector& v) {
    std::ostringstream os;
    os << '[';
    for (Eigen::Index i = 0; i < v.size(); ++i)
        os << (i ? ", " : "") << format_double(v[i]);
    os << ']';
    return os.str();
}

fs::path config_dir() { return fs::path(OPTD_SOURCE_DIR) / "configs"; }

fs::path scratch(const std::string& name) {
    const fs::path p = fs::temp_directory_path() / ("optd_acceptance_" + name);
    fs::remove_all(p);
    return p;
}

// Random regular chain of size 2..10 with a discount from the fixed grid.
struct ChainInstance {
    Matrix p;
    Matrix q;
    double alpha;
};

std::vector<ChainInstance> chain_family(std::size_t count, std::uint64_t seed) {
    Rng rng(seed);
    const double alphas[] = {0.1, 0.5, 0.9, 0.99};
    std::vector<ChainInstance> out;
    for (std::size_t i = 0; i < count; ++i) {
        const std::size_t n = 2 + rng.index(9);
        const double alpha = alphas[i % 4];
        Matrix p = testsupport::random_regular(n, rng, rng.uniform(0.0, 0.5));
        Matrix q = testsupport::random_stochastic(n, rng, rng.uniform(0.0, 0.7));
        out.push_back({std::move(p), std::move(q), alpha});
    }
    return out;
}

Outcome state_counts() {
    const std::size_t cases[][2] = {{2, 10}, {3, 20}, {5, 20}, {6, 20}, {4, 50}, {5, 50}};
    const std::size_t expected[] = {66, 1771, 53130, 230230, 316251, 3478761};
    bool ok = true;
    std::ostringstream d;
    for (int i = 0; i < 6; ++i) {
        const resource::StateEnumeration e(cases[i][0], cases[i][1]);
        const bool match = e.size() == expected[i] && resource::state_count(cases[i][0], cases[i][1]) == expected[i];
        ok = ok && match;
        d << "m=" << cases[i][0] << " N=" << cases[i][1] << ": enumerated " << e.size() << ", expected "
          << expected[i] << '\n';
    }
    return {ok, d.str()};
}

Outcome two_class_edges() {
    Rng rng(101);
    const resource::StateEnumeration states(2, 2);
    double worst = 0.0;
    for (int trial = 0; trial < 100; ++trial) {
        const double m1 = rng.uniform(0.01, 0.95), l1 = rng.uniform(0.0, 1.0 - m1), m2 = rng.uniform(0.01, 0.99);
        const resource::ResourceSpec spec{2, 2, {0.8, 0.9}, {l1, 0.1}, {m1, m2}, 0.9};
        const Matrix p = resource::build_transition(spec, states, 0).to_dense();
        Matrix oracle = Matrix::Zero(6, 6);
        for (const auto& e : testsupport::two_class_edges(l1, m1, m2))
            oracle(static_cast<Eigen::Index>(states.index_of(e.from)),
                   static_cast<Eigen::Index>(states.index_of(e.to))) += e.prob;
        worst = std::max(worst, (p - oracle).cwiseAbs().maxCoeff());
    }
    return {worst <= 1e-12, "max abs deviation over 100 draws: " + format_double(worst)};
}

Outcome definiteness() {
    std::size_t fail_target = 0, fail_behavior = 0;
    double min_target = 1e300, min_behavior = 1e300;
    for (const auto& inst : chain_family(200, 202)) {
        const StochasticMatrix p(inst.p);
        const auto t = certificate_positive_definite(stationary_distribution(p), p, inst.alpha);
        const Matrix bar = (1.0 - inst.alpha) * inst.q + inst.alpha * inst.p;
        const auto b = certificate_positive_definite(stationary_distribution(StochasticMatrix(bar)), p, inst.alpha);
        fail_target += t.holds ? 0 : 1;
        fail_behavior += b.holds ? 0 : 1;
        min_target = std::min(min_target, t.min_eigenvalue);
        min_behavior = std::min(min_behavior, b.min_eigenvalue);
    }
    std::ostringstream d;
    d << "stationary weights: " << fail_target << " failures, smallest min eigenvalue " << format_double(min_target)
      << "\nbehavior weights: " << fail_behavior << " failures, smallest min eigenvalue "
      << format_double(min_behavior) << '\n';
    return {fail_target == 0 && fail_behavior == 0, d.str()};
}

Outcome projected_iteration() {
    Rng rng(303);
    std::size_t radius_fail = 0, converge_fail = 0;
    double worst_radius = 0.0, worst_gap = 0.0;
    for (const auto& inst : chain_family(200, 202)) {
        const std::size_t n = static_cast<std::size_t>(inst.p.rows());
        const std::size_t psi = 1 + rng.index(std::min<std::size_t>(n, 4));
        const Matrix bar = (1.0 - inst.alpha) * inst.q + inst.alpha * inst.p;
        Vector reward(static_cast<Eigen::Index>(n));
        for (auto& v : reward)
            v = rng.uniform(-1.0, 1.0);
        const auto sys = assemble_projected_system(FeatureMatrix(testsupport::random_features(n, psi, rng)),
                                                   stationary_distribution(StochasticMatrix(bar)),
                                                   StochasticMatrix(inst.p), reward, inst.alpha);
        const auto spec = certificate_iteration_spectrum(sys);
        worst_radius = std::max(worst_radius, spec.spectral_radius);
        radius_fail += spec.holds ? 0 : 1;
        const auto direct = solve_direct(sys);
        IterationOptions opts;
        opts.max_iter = 10000;
        opts.step_tol = 1e-14;
        const auto traj = iterate_projected(sys, Vector::Zero(static_cast<Eigen::Index>(psi)), opts);
        const double gap = (traj.back() - direct).norm();
        worst_gap = std::max(worst_gap, gap);
        converge_fail += gap <= 1e-8 ? 0 : 1;
    }
    std::ostringstream d;
    d << "largest spectral radius " << format_double(worst_radius) << " (" << radius_fail << " >= 1)\n"
      << "largest iterate gap " << format_double(worst_gap) << " (" << converge_fail << " above 1e-8)\n";
    return {radius_fail == 0 && converge_fail == 0, d.str()};
}

Outcome value_bound() {
    Rng rng(404);
    std::size_t violations = 0, premise_fail = 0;
    double worst_ratio = 0.0;
    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t n = 2 + rng.index(11), k = 2 + rng.index(3);
        const double alpha = rng.uniform(0.05, 0.98);
        std::vector<StochasticMatrix> ps;
        for (std::size_t a = 0; a < k; ++a)
            ps.emplace_back(testsupport::random_stochastic(n, rng, 0.4));
        Vector reward(static_cast<Eigen::Index>(n));
        for (auto& v : reward)
            v = rng.uniform(-5.0, 5.0);
        const Mdp mdp({n, {}}, {k, {}}, ps, reward, alpha, rng.coin(0.5) ? Orientation::minimize
                                                                         : Orientation::maximize);
        const auto opt = value_iteration(mdp, default_value_iteration_tolerance(alpha));
        const Matrix p_star = transition_under_policy(mdp, opt.policy).to_dense();
        // Halfway between P* and a random matrix keeps ||P* - Q||_inf <= 1.
        const Matrix q = 0.5 * p_star + 0.5 * testsupport::random_stochastic(n, rng, 0.3);
        const Matrix bar = (1.0 - alpha) * q + alpha * p_star;
        const auto j_bar = evaluate_policy_exact(StochasticMatrix(bar), reward, alpha);
        const auto b = value_perturbation_bound(opt.value, j_bar, reward, alpha);
        violations += b.holds ? 0 : 1;
        worst_ratio = std::max(worst_ratio, b.lhs / b.rhs);
        const double premise = testsupport::dense_inf_norm(p_star - bar);
        premise_fail += premise <= 1.0 - alpha + 1e-12 ? 0 : 1;
    }
    std::ostringstream d;
    d << violations << " bound violations, largest lhs/rhs " << format_double(worst_ratio) << '\n'
      << premise_fail << " premise violations\n";
    return {violations == 0 && premise_fail == 0, d.str()};
}

Outcome deviation_identity() {
    Rng rng(505);
    double worst = 0.0;
    for (int trial = 0; trial < 1000; ++trial) {
        const std::size_t n = 2 + rng.index(12);
        const Matrix p = testsupport::random_stochastic(n, rng, rng.uniform(0.0, 0.8));
        const Matrix q = testsupport::random_stochastic(n, rng, rng.uniform(0.0, 0.8));
        const double w = rng.uniform(0.01, 0.99);
        const auto rep = deviation_report(StochasticMatrix(p), PerturbationSpec::uniform(w, StochasticMatrix(q)));
        worst = std::max(worst, std::abs(rep.deviation - (1.0 - w) * testsupport::dense_inf_norm(p - q)));
    }
    return {worst <= 1e-12, "largest |deviation - (1 - A) gap| = " + format_double(worst)};
}

Outcome monte_carlo() {
    // Eight independent replicates per sample size: every replicate at the
    // largest size must meet the tolerance, and the mean error must fall with K.
    const auto cfg = ExperimentConfig::load(config_dir() / "toy_m2_n2.cfg");
    const Pipeline p = build_pipeline(cfg);
    const auto sys = projected_system(cfg, p);
    std::ostringstream d;
    std::vector<double> means, worsts;
    for (std::size_t k : {10000u, 100000u, 1000000u}) {
        double sum = 0.0, worst = 0.0;
        d << "K=" << k << ": relative Frobenius errors";
        for (std::uint64_t rep = 0; rep < 8; ++rep) {
            RandomStream rng(splitmix64(k) ^ splitmix64(rep + 1));
            const auto est =
                estimate_projected_system_mc(p.behavior, p.target, p.reward, p.phi, cfg.spec.discount, k, rng);
            const double err = (est.z - sys.z).norm() / sys.z.norm();
            sum += err;
            worst = std::max(worst, err);
            d << ' ' << std::setprecision(3) << err;
        }
        means.push_back(sum / 8.0);
        worsts.push_back(worst);
        d << "\n    mean " << format_double(means.back()) << ", worst " << format_double(worst) << '\n';
    }
    const bool ok = worsts[2] <= 0.02 && means[0] > means[1] && means[1] > means[2];
    return {ok, d.str()};
}

Outcome reproduction() {
    auto cfg = ExperimentConfig::load(config_dir() / "resource_m4_n20.cfg");
    cfg.out_dir = scratch("reproduction").string();
    const Pipeline p = build_pipeline(cfg);
    std::ostringstream d;

    const auto norm = norm_condition_check(p.mdp, cfg.spec.discount);
    const bool a = norm.holds;
    d << "(a) norm condition value " << format_double(norm.value) << " vs 1 - alpha = "
      << format_double(norm.threshold) << " (actions " << norm.action_i + 1 << ", " << norm.action_j + 1
      << "): " << (a ? "holds" : "does not hold") << '\n';

    const auto r = run_td_experiment(cfg, p, true);
    const double flat = last_decile_slope_ratio(r.aggregate.iterations, r.aggregate.mean_norm_curve);
    const bool b = r.runs.size() == 100 && r.aggregate.diverged_runs == 0 &&
                   r.runs.front().iterations_done == 50000 && flat < 0.01;
    d << "(b) " << r.aggregate.used_runs << " of " << r.runs.size() << " runs completed 50000 updates, "
      << "last-decile slope / peak slope of the mean norm curve = " << format_double(flat) << '\n';

    const double max_err = r.relative_error->maxCoeff();
    const bool c = max_err <= 0.15;
    d << "(c) TD mean r            = " << vec(r.aggregate.mean_final) << '\n'
      << "    exact projected r    = " << vec(*r.r_direct) << '\n'
      << "    relative error       = " << vec(*r.relative_error) << " (max " << format_double(max_err) << ")\n"
      << "    reported reference r = [0.0212, 1.9179, 2.2853, 8.9394, 3.3748] (not compared)\n";
    d << "sub-results: a=" << (a ? "pass" : "fail") << " b=" << (b ? "pass" : "fail") << " c=" << (c ? "pass" : "fail")
      << '\n';
    return {a && b && c, d.str()};
}

Outcome ordering() {
    auto cfg = ExperimentConfig::load(config_dir() / "resource_m4_n20.cfg");
    cfg.out_dir = scratch("ordering").string();
    const auto cmp = compare_policies(cfg);
    std::ostringstream d;
    d << "runs per policy: " << cfg.td.num_runs << '\n';
    for (const auto& c : cmp.curves)
        d << c.policy << ": mean final ||r||_2 = " << format_double(c.final_norm_mean) << '\n';
    d << cmp.ordering_detail;
    return {cfg.td.num_runs >= 20 && cmp.ordering_holds, d.str()};
}

std::map<std::string, std::string> csv_files(const fs::path& root) {
    std::map<std::string, std::string> out;
    for (const auto& e : fs::recursive_directory_iterator(root))
        if (e.path().extension() == ".csv") {
            std::ifstream is(e.path(), std::ios::binary);
            std::ostringstream os;
            os << is.rdbuf();
            out[fs::relative(e.path(), root).string()] = os.str();
        }
    return out;
}

Outcome determinism() {
    std::ostringstream log, d;
    bool ok = true;
    auto run_all = [&](const ExperimentConfig& base, const std::string& tag) {
        std::map<std::string, std::string> first;
        for (int rep = 0; rep < 2; ++rep) {
            auto cfg = base;
            cfg.out_dir = scratch(tag + std::to_string(rep)).string();
            cfg.threads = rep == 0 ? 1 : 0;
            cmd_td_run(cfg, log);
            cmd_compare_policies(cfg, log);
            if (cfg.spec.m <= 2) {
                cmd_solve_exact(cfg, log);
                cmd_project(cfg, log);
            }
            auto files = csv_files(cfg.out_dir);
            if (rep == 0) {
                first = std::move(files);
                continue;
            }
            std::size_t same = 0;
            for (const auto& [name, body] : first)
                same += files.count(name) && files.at(name) == body ? 1 : 0;
            const bool match = same == first.size() && files.size() == first.size();
            ok = ok && match;
            d << tag << ": " << same << " of " << first.size() << " CSV files byte-identical\n";
        }
    };
    run_all(ExperimentConfig::load(config_dir() / "toy_m2_n2.cfg"), "toy");
    auto big = ExperimentConfig::load(config_dir() / "resource_m4_n20.cfg");
    big.set("num_runs", "4");
    big.set("run_length", "5000");
    run_all(big, "m4");
    return {ok, d.str()};
}

} // namespace

int main() {
    report(1, "state-space cardinalities by enumeration", state_counts);
    report(2, "two-class capacity-two transition edges, 100 random draws", two_class_edges);
    report(3, "definiteness certificates on 200 random regular chains", definiteness);
    report(4, "projected iteration spectrum and convergence", projected_iteration);
    report(5, "value perturbation bound on 100 random MDPs", value_bound);
    report(6, "uniform-mixing deviation identity on 1000 instances", deviation_identity);
    report(7, "Monte-Carlo projected system consistency", monte_carlo);
    report(8, "four-class reproduction: norm condition, flattening, exact cross-check", reproduction);
    report(9, "policy ordering of final parameter norms", ordering);
    report(10, "byte-identical CSV outputs on rerun", determinism);
    std::printf("%d of 10 criteria failed\n", failures);
    return failures == 0 ? 0 : 1;
}
