#pragma once

#include "optd/exact_solver.hpp"
#include "optd/mdp_core.hpp"

#include <iosfwd>
#include <vector>

namespace optd {

/// |X| x psi basis with full column rank.
class FeatureMatrix {
public:
    /// Rejects rank-deficient input (pivoted QR, tolerance 1e-10 ||Phi||).
    explicit FeatureMatrix(Matrix phi);

    std::size_t num_states() const { return static_cast<std::size_t>(phi_.rows()); }
    std::size_t num_features() const { return static_cast<std::size_t>(phi_.cols()); }
    const Matrix& matrix() const { return phi_; }
    auto row(std::size_t x) const { return phi_.row(static_cast<Eigen::Index>(x)); }

private:
    Matrix phi_;
};

/// Numerical rank by column-pivoted QR with threshold 1e-10 ||m||_F.
std::size_t numerical_rank(const Matrix& m);

using ParameterVector = Vector;

/// Z r = d, with Z = Phi^T Theta (I - alpha P) Phi and d = Phi^T Theta R.
struct ProjectedSystem {
    Matrix z;
    Vector d;
    Matrix gram; ///< Phi^T Theta Phi
    ProbabilityDistribution weights;
    double discount = 0.0;
    std::size_t num_states = 0;
    std::size_t num_features = 0;

    void write(std::ostream& os) const;
};

/// Streams over rows so no |X| x |X| dense product is formed.
ProjectedSystem assemble_projected_system(const FeatureMatrix& phi, const ProbabilityDistribution& weights,
                                          const StochasticMatrix& p, const Vector& reward,
                                          double discount);

/// r = Z^{-1} d; throws NumericalError with a condition estimate when Z is singular.
ParameterVector solve_direct(const ProjectedSystem& sys);

struct IterationOptions {
    std::size_t max_iter = 10000;
    /// Stop early once ||r_{k+1} - r_k||_2 falls below this (0 disables).
    double step_tol = 0.0;
    double divergence_limit = 1e12;
};

/// r_{k+1} = r_k - G^{-1}(Z r_k - d), G = Phi^T Theta Phi. Returns r_0..r_K.
std::vector<ParameterVector> iterate_projected(const ProjectedSystem& sys, const ParameterVector& r0,
                                               IterationOptions opts);

struct DefinitenessReport {
    double min_eigenvalue = 0.0;        ///< of S, the symmetric part of Theta (I - alpha P)
    double scaled_min_eigenvalue = 0.0; ///< of Theta^{-1/2} S Theta^{-1/2}
    double norm = 0.0;                  ///< spectral scale of the scaled matrix
    /// scaled_min_eigenvalue > 1e-12 * norm. The congruence preserves inertia,
    /// so this decides the sign of S without being swamped by tiny weights.
    bool holds = false;
    bool certified = false; ///< sign established by factorization or full eigen-solve
    std::string method;
};

/// Positive definiteness of Theta (I - alpha P). Dense symmetric eigen-solves up
/// to kDenseSolveLimit states; beyond that Rayleigh-quotient estimates plus a
/// sparse Cholesky factorization of the scaled matrix certifying the sign.
DefinitenessReport certificate_positive_definite(const ProbabilityDistribution& weights,
                                                 const StochasticMatrix& p, double discount);

struct SpectrumReport {
    double spectral_radius = 0.0; ///< of I - G^{-1} Z
    bool holds = false;           ///< radius < 1 - 1e-12
};

SpectrumReport certificate_iteration_spectrum(const ProjectedSystem& sys);

struct ProjectionResult {
    ParameterVector coefficients;
    ValueFunction fitted;
};

/// Weighted least-squares fit of J onto the span of Phi under the weights.
ProjectionResult project_value(const ValueFunction& j, const FeatureMatrix& phi,
                               const ProbabilityDistribution& weights);

} // namespace optd
