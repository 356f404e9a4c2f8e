#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

namespace optd {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// Default tolerance on row sums of stochastic matrices and distributions.
inline constexpr double kRowTolerance = 1e-9;

// ---------------------------------------------------------------------------
// Errors. The CLI maps each category onto its own exit code.
// ---------------------------------------------------------------------------

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Shapes or indices are inconsistent.
struct StructuralError : Error {
    using Error::Error;
};

/// Inputs are well-shaped but violate a precondition (stochasticity, ranges).
struct ValidationError : Error {
    using Error::Error;
};

/// Divergence, singular systems, non-convergence.
struct NumericalError : Error {
    using Error::Error;
};

/// Problem size exceeds what a code path is configured to handle.
struct CapabilityError : Error {
    using Error::Error;
};

// ---------------------------------------------------------------------------

struct Triplet {
    std::size_t row;
    std::size_t col;
    double value;
};

/// Unvalidated square matrix in coordinate form, as read from disk or
/// produced by a generator before it is admitted as a StochasticMatrix.
struct TripletMatrix {
    std::size_t size = 0;
    std::vector<Triplet> entries;

    static TripletMatrix from_dense(const Matrix& dense);
};

struct RowDeviation {
    std::size_t row;
    double deviation; ///< |row sum - 1|
};

struct ValidationReport {
    bool passed = true;
    double max_row_deviation = 0.0;
    std::vector<RowDeviation> bad_rows;
    std::size_t negative_entries = 0;
    std::size_t out_of_range_entries = 0; ///< entries above 1

    std::string summary() const;
};

/// Checks that every entry is in [0,1] and every row sums to 1 within `tau`.
/// Throws StructuralError on out-of-range indices.
ValidationReport validate_stochastic(const TripletMatrix& m, double tau = kRowTolerance);
/// Throws StructuralError if `m` is not square.
ValidationReport validate_stochastic(const Matrix& m, double tau = kRowTolerance);

/**
 * Row-stochastic matrix in compressed sparse row form.
 *
 * Immutable after construction. The constructor accepts rows whose sums are
 * within `tau` of one and rescales them exactly onto the simplex; anything
 * further off is rejected with a ValidationError.
 */
class StochasticMatrix {
public:
    StochasticMatrix() = default;
    explicit StochasticMatrix(const TripletMatrix& m, double tau = kRowTolerance);
    explicit StochasticMatrix(const Matrix& dense, double tau = kRowTolerance);

    static StochasticMatrix identity(std::size_t n);

    /// Builds directly from sorted CSR arrays (columns strictly increasing per row).
    static StochasticMatrix from_csr(std::size_t n, std::vector<std::size_t> row_ptr,
                                     std::vector<std::size_t> cols, std::vector<double> vals,
                                     double tau = kRowTolerance);

    std::size_t size() const { return n_; }
    std::size_t nonzeros() const { return vals_.size(); }

    struct RowView {
        const std::size_t* cols;
        const double* vals;
        std::size_t count;
    };
    RowView row(std::size_t r) const {
        return {cols_.data() + row_ptr_[r], vals_.data() + row_ptr_[r],
                row_ptr_[r + 1] - row_ptr_[r]};
    }

    double at(std::size_t r, std::size_t c) const;

    /// y = P x
    Vector apply(const Vector& x) const;
    /// y = P^T x  (i.e. x^T P as a column)
    Vector apply_transpose(const Vector& x) const;

    Matrix to_dense() const;
    TripletMatrix to_triplets() const;

private:
    void finalize(double tau);

    std::size_t n_ = 0;
    std::vector<std::size_t> row_ptr_{0};
    std::vector<std::size_t> cols_;
    std::vector<double> vals_;
};

/// Probability vector over states.
class ProbabilityDistribution {
public:
    ProbabilityDistribution() = default;
    explicit ProbabilityDistribution(Vector p, double tau = kRowTolerance);

    static ProbabilityDistribution uniform(std::size_t n);

    std::size_t size() const { return static_cast<std::size_t>(p_.size()); }
    const Vector& values() const { return p_; }
    double operator[](std::size_t i) const { return p_[static_cast<Eigen::Index>(i)]; }
    bool strictly_positive() const { return p_.size() > 0 && p_.minCoeff() > 0.0; }

private:
    Vector p_;
};

enum class Orientation { minimize, maximize };

struct StateSpace {
    std::size_t size = 0;
    /// Optional human-readable descriptor per state.
    std::vector<std::string> labels;
};

struct ActionSet {
    std::size_t size = 0;
    std::vector<std::string> labels;
};

/// Finite MDP with state-only reward.
class Mdp {
public:
    Mdp(StateSpace states, ActionSet actions, std::vector<StochasticMatrix> transitions,
        Vector reward, double discount, Orientation orientation);

    const StateSpace& states() const { return states_; }
    const ActionSet& actions() const { return actions_; }
    std::size_t num_states() const { return states_.size; }
    std::size_t num_actions() const { return actions_.size; }
    const StochasticMatrix& transition(std::size_t action) const { return transitions_.at(action); }
    const std::vector<StochasticMatrix>& transitions() const { return transitions_; }
    const Vector& reward() const { return reward_; }
    double discount() const { return discount_; }
    Orientation orientation() const { return orientation_; }

private:
    StateSpace states_;
    ActionSet actions_;
    std::vector<StochasticMatrix> transitions_;
    Vector reward_;
    double discount_;
    Orientation orientation_;
};

struct DeterministicPolicy {
    std::vector<std::size_t> action; ///< action index per state
};

/// |X| x |U| matrix of action probabilities.
struct StochasticPolicy {
    Matrix probs;

    static StochasticPolicy from_deterministic(const DeterministicPolicy& p, std::size_t num_actions);
    static StochasticPolicy uniform(std::size_t num_states, std::size_t num_actions);
    void validate(double tau = kRowTolerance) const;
};

using Policy = std::variant<DeterministicPolicy, StochasticPolicy>;

/// Transition matrix induced by following `policy` in `mdp`.
StochasticMatrix transition_under_policy(const Mdp& mdp, const Policy& policy);

/// max_x sum_x' |P_xx' - Q_xx'|
double infinity_norm_diff(const StochasticMatrix& p, const StochasticMatrix& q);

struct RegularityReport {
    bool regular = false;
    bool irreducible = false;
    std::size_t period = 0; ///< 0 when not irreducible
    std::string diagnosis;
};

/// Irreducible and aperiodic, from the graph of nonzero entries.
RegularityReport is_regular(const StochasticMatrix& p);

// ---------------------------------------------------------------------------
// Text formats: `n nnz` header followed by `row col value` lines; vectors one
// value per line. Values are written with 17 significant digits.
// ---------------------------------------------------------------------------

void write_triplets(std::ostream& os, const StochasticMatrix& p);
TripletMatrix read_triplets(std::istream& is);
void write_vector(std::ostream& os, const Vector& v);
Vector read_vector(std::istream& is);

/// "%.17g"
std::string format_double(double v);

} // namespace optd
