#pragma once

// Config-driven experiment orchestration behind the `optd` command line tool.

#include "optd/exact_solver.hpp"
#include "optd/off_policy_td.hpp"
#include "optd/perturbation.hpp"
#include "optd/projection.hpp"
#include "optd/resource_allocation.hpp"

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace optd {

inline constexpr const char* kArtifactVersion = "0.1.0";
inline constexpr const char* kOutDirEnv = "OPTD_OUT_DIR";

/// Transition matrix inside Z: the target matrix P (default) or the behavior
/// matrix Pbar. The weights are always the behavior chain's stationary distribution.
enum class ProjectedTransition { target, behavior };

struct ExperimentConfig {
    resource::ResourceSpec spec;
    TdConfig td;
    std::string target_policy = "greedy"; ///< policy kind name or "optimal"
    /// Weight on the target matrix in Pbar = (I - A) Q + A P. One value means
    /// uniform A; otherwise one entry per state. Defaults to the discount.
    std::vector<double> mixing;
    std::string exploration = "uniform-random"; ///< or a policy kind name
    std::vector<std::string> policies{"greedy", "random", "hybrid", "modulo", "fair"};
    ProjectedTransition projection = ProjectedTransition::target;
    resource::PolicyOptions policy_opts;
    std::size_t cap = 200000;        ///< largest |X| for exact solves
    std::size_t verify_cap = 5000;   ///< largest |X| for the value-function checks in verify
    std::size_t mc_samples = 1000000;
    std::string out_dir = "out";
    std::size_t threads = 0; ///< 0 uses every hardware thread
    bool emit_plot = true;

    /// Flat `key = value` text; arrays as `[a, b, c]`; `#` starts a comment.
    static ExperimentConfig parse(std::istream& is);
    static ExperimentConfig load(const std::filesystem::path& path);
    /// Applies one key/value pair; throws ValidationError for unknown keys or bad values.
    void set(const std::string& key, const std::string& value);

    /// Canonical `key = value` listing of every effective setting.
    std::string canonical() const;
    void validate() const;
};

std::uint64_t fnv1a64(const std::string& text);

/// Everything derived from a config for one target policy.
struct Pipeline {
    resource::StateEnumeration states;
    Mdp mdp;
    Vector reward;
    FeatureMatrix phi;
    StochasticMatrix target;
    StochasticMatrix exploration;
    PerturbationSpec perturbation;
    StochasticMatrix behavior;
};

/// `policy` overrides cfg.target_policy when non-empty.
Pipeline build_pipeline(const ExperimentConfig& cfg, const std::string& policy = {});

/// Projected system weighted by stationary(Pbar), with the matrix chosen by cfg.projection.
ProjectedSystem projected_system(const ExperimentConfig& cfg, const Pipeline& p,
                                 const ProbabilityDistribution& behavior_weights);
ProjectedSystem projected_system(const ExperimentConfig& cfg, const Pipeline& p);

// ---------------------------------------------------------------------------
// Subcommands. Each returns its in-memory results and writes its files under
// cfg.out_dir once all computation has finished.
// ---------------------------------------------------------------------------

struct StateCountResult {
    std::string count;             ///< closed form, exact
    std::optional<std::uint64_t> enumerated; ///< present when enumeration ran
    bool agree = true;
};

/// Enumerates when the count is at most `enumerate_limit`.
StateCountResult cmd_state_count(std::size_t m, std::size_t capacity, std::ostream& log,
                                 std::uint64_t enumerate_limit = 5000000);

struct SolveExactResult {
    ValueIterationResult solution;
    ValueFunction policy_value; ///< evaluate_policy_exact under the returned policy
    NormConditionReport norm_condition;
};

SolveExactResult cmd_solve_exact(const ExperimentConfig& cfg, std::ostream& log);

struct ProjectResult {
    ProjectedSystem system;
    ParameterVector r_direct;
    ParameterVector r_iterated;
    std::size_t iterations = 0;
    SpectrumReport spectrum;
};

ProjectResult cmd_project(const ExperimentConfig& cfg, std::ostream& log);

struct TdExperimentResult {
    std::vector<TdRunResult> runs;
    Aggregate aggregate;
    std::optional<ParameterVector> r_direct; ///< when |X| <= cap
    std::optional<Vector> relative_error;    ///< per coordinate, against r_direct
};

/// Computes the runs only; no files.
TdExperimentResult run_td_experiment(const ExperimentConfig& cfg, const Pipeline& pipeline,
                                     bool cross_check);

TdExperimentResult cmd_td_run(const ExperimentConfig& cfg, std::ostream& log);

struct PolicyCurve {
    std::string policy;
    Aggregate aggregate;
    double final_norm_mean = 0.0; ///< mean over non-diverged runs of ||r_final||_2
};

struct PolicyComparison {
    std::vector<PolicyCurve> curves;
    /// greedy >= every middle policy >= fair on final_norm_mean (vacuous for absent kinds)
    bool ordering_holds = true;
    std::string ordering_detail;
};

PolicyComparison compare_policies(const ExperimentConfig& cfg);
PolicyComparison cmd_compare_policies(const ExperimentConfig& cfg, std::ostream& log);

struct VerifyResult {
    std::optional<DefinitenessReport> target_pd; ///< absent when P is not regular
    RegularityReport target_regularity;
    DefinitenessReport behavior_pd;
    SpectrumReport spectrum;
    MixtureReport mixture;
    NormConditionReport norm_condition;
    std::optional<BoundReport> value_bound; ///< when |X| <= verify_cap
    bool all_hold = false;
};

VerifyResult cmd_verify(const ExperimentConfig& cfg, std::ostream& log);

/// Writes manifest.txt listing the given files relative to the output directory.
void write_manifest(const ExperimentConfig& cfg, const std::string& subcommand,
                    const std::vector<std::string>& files, double wall_seconds);

/// 0 success, 2 validation/structure, 3 numerical, 4 capability, 1 anything else.
int exit_code_for(const std::exception& e);

} // namespace optd
