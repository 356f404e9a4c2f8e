#pragma once

// Resource-allocation MDP: m single-server birth-death chains sharing a
// capacity of N resources. Action j opens arrivals to chain j only; every
// chain with customers releases one with probability mu_i per step. Arrivals
// that would exceed the capacity are lost.

#include "optd/mdp_core.hpp"
#include "optd/projection.hpp"

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

namespace optd::resource {

struct ResourceSpec {
    std::size_t m = 0;        ///< number of price classes (= actions)
    std::size_t capacity = 0; ///< N
    std::vector<double> price;
    std::vector<double> arrival; ///< lambda
    std::vector<double> release; ///< mu
    double discount = 0.9;

    /// Throws ValidationError. `allow_degenerate` admits mu_i = 0 (test-only).
    void validate(bool allow_degenerate = false) const;
};

/// Number of occupancy vectors with sum <= N, i.e. C(N + m, m). Throws
/// CapabilityError when the count does not fit in 64 bits.
std::uint64_t state_count(std::size_t m, std::size_t capacity);
/// Same count as a decimal string, exact for any size.
std::string state_count_string(std::size_t m, std::size_t capacity);

/**
 * Dense indexing of { x in N^m : sum x <= N } in graded lexicographic order:
 * by total occupancy, then lexicographically.
 */
class StateEnumeration {
public:
    StateEnumeration(std::size_t m, std::size_t capacity);

    std::size_t size() const { return count_; }
    std::size_t dims() const { return m_; }
    std::size_t capacity() const { return capacity_; }

    std::span<const std::uint16_t> state(std::size_t index) const {
        return {data_.data() + index * m_, m_};
    }
    /// Inverse of state(); throws StructuralError for vectors outside the space.
    std::size_t index_of(std::span<const std::uint16_t> x) const;
    std::size_t total(std::size_t index) const;

    void write_csv(std::ostream& os) const;

private:
    std::uint64_t binom(std::size_t n, std::size_t k) const;

    std::size_t m_;
    std::size_t capacity_;
    std::size_t count_;
    std::vector<std::uint16_t> data_;
    std::vector<std::vector<std::uint64_t>> binom_;
};

StochasticMatrix build_transition(const ResourceSpec& spec, const StateEnumeration& states,
                                  std::size_t action);

Vector reward_vector(const ResourceSpec& spec, const StateEnumeration& states);

/// Columns: constant 1, then x_1..x_m.
FeatureMatrix feature_matrix(const ResourceSpec& spec, const StateEnumeration& states);

/// Maximizing MDP with one action per price class.
Mdp build_mdp(const ResourceSpec& spec, const StateEnumeration& states);

enum class PolicyKind { greedy, fair, random, hybrid, modulo };

PolicyKind parse_policy_kind(const std::string& name);
std::string to_string(PolicyKind kind);

struct PolicyOptions {
    double hybrid_weight = 0.6; ///< mass on the slowest-release action
    std::size_t modulo_offset = 0; ///< action = (sum x + offset) mod m, 0-based
};

/// Expected next-step revenue of choosing `action` at `index`.
double expected_next_revenue(const ResourceSpec& spec, const StateEnumeration& states,
                             std::size_t index, std::size_t action);

Policy target_policy(const ResourceSpec& spec, const StateEnumeration& states, PolicyKind kind,
                     const PolicyOptions& opts = {});

} // namespace optd::resource
