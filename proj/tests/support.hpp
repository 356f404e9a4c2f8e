#pragma once

// Random instance generators and dense reference computations shared by the
// test binaries. Oracles here avoid the library's own kernels on purpose.

#include "optd/mdp_core.hpp"

#include <Eigen/Dense>

#include <array>
#include <random>
#include <vector>

namespace testsupport {

using optd::Matrix;
using optd::Vector;

class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}
    double uniform(double lo = 0.0, double hi = 1.0) {
        return std::uniform_real_distribution<double>(lo, hi)(engine_);
    }
    std::size_t index(std::size_t n) { return std::uniform_int_distribution<std::size_t>(0, n - 1)(engine_); }
    bool coin(double p) { return uniform() < p; }
    std::mt19937_64& engine() { return engine_; }

private:
    std::mt19937_64 engine_;
};

/// Dense row-stochastic matrix; each entry is zeroed with probability `sparsity`
/// (at least one nonzero per row survives).
inline Matrix random_stochastic(std::size_t n, Rng& rng, double sparsity = 0.0) {
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) {
        double sum = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            const double v = rng.coin(sparsity) ? 0.0 : rng.uniform(0.05, 1.0);
            m(i, j) = v;
            sum += v;
        }
        if (sum == 0.0) {
            m(i, rng.index(n)) = 1.0;
            sum = 1.0;
        }
        m.row(i) /= sum;
    }
    return m;
}

/// Irreducible and aperiodic: a Hamiltonian cycle plus self-loops plus random extra edges.
inline Matrix random_regular(std::size_t n, Rng& rng, double extra_density = 0.3) {
    Matrix m = Matrix::Zero(n, n);
    for (std::size_t i = 0; i < n; ++i) {
        m(i, (i + 1) % n) = rng.uniform(0.1, 1.0);
        m(i, i) = rng.uniform(0.1, 1.0);
        for (std::size_t j = 0; j < n; ++j)
            if (rng.coin(extra_density))
                m(i, j) += rng.uniform(0.0, 1.0);
        m.row(i) /= m.row(i).sum();
    }
    return m;
}

inline Vector random_distribution(std::size_t n, Rng& rng) {
    Vector v(n);
    for (std::size_t i = 0; i < n; ++i)
        v[i] = rng.uniform(0.05, 1.0);
    return v / v.sum();
}

/// Stationary vector of a dense stochastic matrix by solving the bordered
/// system [P^T - I; 1^T] eps = [0; 1] in the least-squares sense.
inline Vector dense_stationary(const Matrix& p) {
    const auto n = p.rows();
    Matrix a(n + 1, n);
    a.topRows(n) = p.transpose() - Matrix::Identity(n, n);
    a.row(n).setOnes();
    Vector b = Vector::Zero(n + 1);
    b[n] = 1.0;
    return a.colPivHouseholderQr().solve(b);
}

/// Some power P^k with k <= n^2 is entrywise positive (boolean powering).
inline bool brute_force_regular(const Matrix& p) {
    const auto n = p.rows();
    using B = Eigen::Matrix<int, Eigen::Dynamic, Eigen::Dynamic>;
    B a(n, n);
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < n; ++j)
            a(i, j) = p(i, j) > 0.0 ? 1 : 0;
    B pw = a;
    for (Eigen::Index k = 1; k <= n * n; ++k) {
        if ((pw.array() > 0).all())
            return true;
        B next = (pw * a).unaryExpr([](int v) { return v > 0 ? 1 : 0; });
        pw = next;
    }
    return false;
}

/// Reachability closure from every node; true iff strongly connected.
inline bool brute_force_irreducible(const Matrix& p) {
    const auto n = p.rows();
    for (Eigen::Index s = 0; s < n; ++s) {
        std::vector<bool> seen(n, false);
        std::vector<Eigen::Index> stack{s};
        seen[s] = true;
        while (!stack.empty()) {
            const auto u = stack.back();
            stack.pop_back();
            for (Eigen::Index v = 0; v < n; ++v)
                if (p(u, v) > 0.0 && !seen[v]) {
                    seen[v] = true;
                    stack.push_back(v);
                }
        }
        for (bool b : seen)
            if (!b)
                return false;
    }
    return true;
}

inline double dense_inf_norm(const Matrix& m) { return m.cwiseAbs().rowwise().sum().maxCoeff(); }

/// Random feature matrix with the first column constant and condition number
/// at most 100. The Gram matrix then has condition number below 1e4 / min
/// weight, so double-precision solves stay accurate far below 1e-8.
inline Matrix random_features(std::size_t n, std::size_t psi, Rng& rng) {
    for (;;) {
        Matrix f(n, psi);
        for (std::size_t i = 0; i < n; ++i) {
            f(i, 0) = 1.0;
            for (std::size_t j = 1; j < psi; ++j)
                f(i, j) = rng.uniform(-2.0, 2.0);
        }
        const Vector sv = Eigen::JacobiSVD<Matrix>(f).singularValues();
        if (sv[static_cast<Eigen::Index>(psi) - 1] * 100.0 >= sv[0])
            return f;
    }
}

/// Hand-derived transition probabilities for two classes, capacity two, with
/// arrivals offered to class 1 only. Entries are (from, to, probability) over
/// occupancy pairs; departures free space before an arrival is admitted.
struct Edge {
    std::array<std::uint16_t, 2> from;
    std::array<std::uint16_t, 2> to;
    double prob;
};

inline std::vector<Edge> two_class_edges(double l1, double m1, double m2) {
    return {
        {{0, 0}, {1, 0}, l1},
        {{0, 0}, {0, 0}, 1 - l1},
        {{1, 0}, {2, 0}, l1},
        {{1, 0}, {0, 0}, m1},
        {{1, 0}, {1, 0}, 1 - l1 - m1},
        {{0, 1}, {1, 1}, l1 * (1 - m2)},
        {{0, 1}, {1, 0}, l1 * m2},
        {{0, 1}, {0, 0}, (1 - l1) * m2},
        {{0, 1}, {0, 1}, (1 - l1) * (1 - m2)},
        {{2, 0}, {1, 0}, m1},
        {{2, 0}, {2, 0}, 1 - m1},
        {{1, 1}, {2, 0}, l1 * m2},
        {{1, 1}, {0, 0}, m1 * m2},
        {{1, 1}, {0, 1}, m1 * (1 - m2)},
        {{1, 1}, {1, 0}, (1 - l1 - m1) * m2},
        {{1, 1}, {1, 1}, (1 - m1) * (1 - m2)},
        {{0, 2}, {1, 1}, l1 * m2},
        {{0, 2}, {0, 1}, (1 - l1) * m2},
        {{0, 2}, {0, 2}, 1 - m2},
    };
}

} // namespace testsupport
