#pragma once

#include "optd/mdp_core.hpp"
#include "optd/projection.hpp"

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <random>
#include <vector>

namespace optd {

/// Per-run random stream. The seed is a SplitMix64 hash of (base seed, run
/// index), so results never depend on how runs are scheduled across threads.
class RandomStream {
public:
    explicit RandomStream(std::uint64_t seed) : engine_(seed) {}
    static RandomStream for_run(std::uint64_t base_seed, std::uint64_t run);

    /// Uniform double in [0, 1) built from the top 53 bits.
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
    /// Uniform integer in [0, n).
    std::size_t index(std::size_t n);

private:
    std::mt19937_64 engine_;
};

std::uint64_t splitmix64(std::uint64_t x);

/// Draws x' with probability P(x, x') by inverse CDF over the sparse row.
std::size_t sample_next(const StochasticMatrix& p, std::size_t x, RandomStream& rng);

struct StepSchedule {
    enum class Kind { constant, diminishing };
    Kind kind = Kind::diminishing;
    double gamma = 0.01; ///< constant step
    double a = 1.0;      ///< diminishing: a / (b + k)
    double b = 1000.0;

    double at(std::size_t k) const {
        return kind == Kind::constant ? gamma : a / (b + static_cast<double>(k));
    }
    void validate() const;
};

/// Which states feed the reward and the update direction.
/// standard: reward R(xbar_k), update along phi(xbar_k).
/// literal:  reward R(x_k),    update along phi(x_k), x_k the target-sampled state.
enum class Fidelity { standard, literal };

struct TdConfig {
    double discount = 0.9;
    StepSchedule step;
    std::size_t run_length = 50000;
    std::size_t num_runs = 1;
    std::uint64_t base_seed = 0;
    std::optional<ParameterVector> r0; ///< zero vector when absent
    std::size_t decimation = 50;
    Fidelity fidelity = Fidelity::standard;
    /// Behavior chain start; drawn uniformly from the run's stream when absent.
    std::optional<std::size_t> initial_state;
    double divergence_limit = 1e12;

    void validate() const;
};

struct TdSnapshot {
    std::size_t iteration; ///< number of updates applied
    ParameterVector r;
    double norm2;
    double td_error_mean; ///< mean TD error over the updates since the previous snapshot
};

struct TdRunResult {
    std::size_t run_index = 0;
    std::uint64_t seed = 0;
    std::size_t initial_state = 0;
    std::vector<TdSnapshot> snapshots;
    std::vector<double> norms; ///< ||r_k||_2 after every update
    ParameterVector final_r;
    double td_error_mean = 0.0;
    double td_error_abs_mean = 0.0;
    bool diverged = false;
    std::size_t iterations_done = 0;

    /// `iteration,r_1..r_psi,norm2,td_error_mean`
    void write_csv(std::ostream& os) const;
};

/**
 * One Monte-Carlo run of off-policy TD(0) with linear features.
 *
 * The behavior chain evolves under `behavior`; at every visited state a target
 * transition is drawn from `target` and the TD error
 *   delta = R + alpha phi(x_k)^T r - phi(xbar_k)^T r
 * drives r <- r + gamma_k delta phi. Inputs are never modified.
 */
TdRunResult run_off_policy_td(const StochasticMatrix& behavior, const StochasticMatrix& target,
                              const Vector& reward, const FeatureMatrix& phi, const TdConfig& cfg,
                              std::size_t run_index = 0);

/// Runs cfg.num_runs independent runs on up to `threads` workers.
std::vector<TdRunResult> run_off_policy_td_batch(const StochasticMatrix& behavior,
                                                 const StochasticMatrix& target, const Vector& reward,
                                                 const FeatureMatrix& phi, const TdConfig& cfg,
                                                 std::size_t threads = 1);

/// Sample moments of the projected system from paired behavior/target transitions.
struct McEstimate {
    Matrix z;
    Vector d;
    std::size_t samples = 0;
};

McEstimate estimate_projected_system_mc(const StochasticMatrix& behavior, const StochasticMatrix& target,
                                        const Vector& reward, const FeatureMatrix& phi, double discount,
                                        std::size_t samples, RandomStream& rng,
                                        std::optional<std::size_t> initial_state = std::nullopt);

struct Aggregate {
    ParameterVector mean_final;
    std::size_t used_runs = 0;
    std::size_t diverged_runs = 0;
    std::vector<std::size_t> iterations;          ///< snapshot iteration grid
    std::vector<std::vector<double>> norm_curves; ///< per run, on the grid
    std::vector<double> mean_norm_curve;
    std::vector<ParameterVector> mean_r_curve;

    /// Mean curve: `iteration,r_1..r_psi,norm2`
    void write_mean_csv(std::ostream& os) const;
    /// Per-run norms: `iteration,run_0,run_1,...`
    void write_norm_curves_csv(std::ostream& os) const;
};

/// Averages non-diverged runs; throws NumericalError if every run diverged.
Aggregate aggregate_runs(const std::vector<TdRunResult>& results);

/// Flatness of a curve sampled on `iterations`: |least-squares slope| over the
/// last tenth of the grid divided by the steepest slope between consecutive
/// samples. Needs at least 20 points.
double last_decile_slope_ratio(const std::vector<std::size_t>& iterations, const std::vector<double>& curve);

} // namespace optd
