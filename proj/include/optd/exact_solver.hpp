#pragma once

#include "optd/mdp_core.hpp"

#include <iosfwd>
#include <string>

namespace optd {

using ValueFunction = Vector;

struct SolveReport {
    std::size_t iterations = 0;
    double residual = 0.0; ///< ||J_{k+1} - J_k||_inf at exit
    bool converged = false;

    void write(std::ostream& os) const;
};

/// One application of the optimal Bellman operator (min or max per orientation).
ValueFunction bellman_apply(const Mdp& mdp, const ValueFunction& j);

/// Greedy policy with respect to `j`; ties go to the lowest action index.
DeterministicPolicy greedy_policy(const Mdp& mdp, const ValueFunction& j);

struct ValueIterationResult {
    ValueFunction value;
    DeterministicPolicy policy;
    SolveReport report;
};

/// Default stopping tolerance 1e-10 (1 - alpha) / alpha, so the returned J is
/// within 1e-10 of the fixed point in sup norm.
double default_value_iteration_tolerance(double discount);

/// Runs J <- F J from J = 0 until ||J_{k+1} - J_k||_inf <= tol. When max_iter is
/// reached the partial iterate is returned with report.converged == false.
ValueIterationResult value_iteration(const Mdp& mdp, double tol, std::size_t max_iter = 100000);

/// Unique solution of (I - alpha P) J = R. Dense LU up to kDenseSolveLimit states,
/// fixed-point iteration with residual <= 1e-10 beyond that.
ValueFunction evaluate_policy_exact(const StochasticMatrix& p, const Vector& reward, double discount);

inline constexpr std::size_t kDenseSolveLimit = 2000;

struct StationaryOptions {
    double tol = 1e-12;
    std::size_t max_iter = 1000000;
};

/// Stationary distribution of a regular chain with ||eps^T P - eps^T||_1 <= tol.
/// Throws ValidationError for non-regular chains and NumericalError when the
/// iteration budget runs out.
ProbabilityDistribution stationary_distribution(const StochasticMatrix& p,
                                                StationaryOptions opts = {});

struct BoundReport {
    double lhs = 0.0;
    double rhs = 0.0;
    bool holds = false;
};

/// ||J* - Jbar||_inf against alpha ||R||_inf / (1 - alpha).
BoundReport value_perturbation_bound(const ValueFunction& j_star, const ValueFunction& j_bar,
                                     const Vector& reward, double discount);

struct NormConditionReport {
    double value = 0.0;     ///< max over action pairs and rows of the L1 row difference
    double threshold = 0.0; ///< 1 - alpha
    bool holds = false;     ///< value < threshold
    std::size_t action_i = 0;
    std::size_t action_j = 0;

    void write(std::ostream& os) const;
};

NormConditionReport norm_condition_check(const Mdp& mdp, double discount);

} // namespace optd
