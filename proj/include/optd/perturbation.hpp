#pragma once

#include "optd/mdp_core.hpp"

#include <iosfwd>

namespace optd {

/// Mixing diagonal A (entries strictly inside (0,1)) and exploratory matrix Q
/// defining Pbar = (I - A) Q + A P.
class PerturbationSpec {
public:
    PerturbationSpec(Vector mixing, StochasticMatrix exploration);
    static PerturbationSpec uniform(double weight, StochasticMatrix exploration);

    const Vector& mixing() const { return mixing_; }
    const StochasticMatrix& exploration() const { return exploration_; }
    bool is_uniform() const;
    double min_weight() const { return mixing_.minCoeff(); }

private:
    Vector mixing_;
    StochasticMatrix exploration_;
};

/// Row x of the result is (1 - A_x) Q_x + A_x P_x.
StochasticMatrix perturb_transition(const StochasticMatrix& p, const PerturbationSpec& spec);

struct MixtureReport {
    double deviation = 0.0;     ///< ||P - Pbar||_inf
    double target_gap = 0.0;    ///< ||P - Q||_inf
    double bound = 0.0;         ///< (1 - min A) ||P - Q||_inf
    double threshold = 0.0;     ///< 1 - min A
    bool within_threshold = false; ///< deviation <= 1 - min A
    bool uniform = false;

    void write(std::ostream& os) const;
};

/// For uniform A the deviation equals the bound up to 1e-12; a larger gap
/// raises NumericalError.
MixtureReport deviation_report(const StochasticMatrix& p, const PerturbationSpec& spec);

/// xi * explore + (1 - xi) * target, with xi strictly inside (0,1).
StochasticPolicy mixture_policy(const StochasticPolicy& target, const StochasticPolicy& explore, double xi);

} // namespace optd
