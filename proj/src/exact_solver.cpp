#include "optd/exact_solver.hpp"

#include <Eigen/LU>

#include <algorithm>
#include <cmath>
#include <ostream>

namespace optd {

void SolveReport::write(std::ostream& os) const {
    os << "iterations = " << iterations << '\n'
       << "residual = " << format_double(residual) << '\n'
       << "converged = " << (converged ? "true" : "false") << '\n';
}

void NormConditionReport::write(std::ostream& os) const {
    os << "norm_condition_value = " << format_double(value) << '\n'
       << "norm_condition_threshold = " << format_double(threshold) << '\n'
       << "norm_condition_pair = " << action_i << ',' << action_j << '\n'
       << "norm_condition_holds = " << (holds ? "true" : "false") << '\n';
}

namespace {

// Ties within this relative gap count as equal so the lowest index wins even
// when two actions accumulate the same row sum in a different order.
constexpr double kTieTolerance = 1e-12;

bool strictly_better(double candidate, double best, Orientation o) {
    const double gap = kTieTolerance * std::max(1.0, std::abs(best));
    return o == Orientation::maximize ? candidate > best + gap : candidate < best - gap;
}

// Continuation values (P(u) J)(x) for every action.
Matrix continuation(const Mdp& mdp, const ValueFunction& j) {
    Matrix q(static_cast<Eigen::Index>(mdp.num_states()), static_cast<Eigen::Index>(mdp.num_actions()));
    for (std::size_t a = 0; a < mdp.num_actions(); ++a)
        q.col(static_cast<Eigen::Index>(a)) = mdp.transition(a).apply(j);
    return q;
}

} // namespace

ValueFunction bellman_apply(const Mdp& mdp, const ValueFunction& j) {
    if (static_cast<std::size_t>(j.size()) != mdp.num_states())
        throw StructuralError("value function length does not match state count");
    const Matrix q = continuation(mdp, j);
    const Vector best = mdp.orientation() == Orientation::maximize ? Vector(q.rowwise().maxCoeff())
                                                                   : Vector(q.rowwise().minCoeff());
    return mdp.reward() + mdp.discount() * best;
}

DeterministicPolicy greedy_policy(const Mdp& mdp, const ValueFunction& j) {
    const Matrix q = continuation(mdp, j);
    DeterministicPolicy pol;
    pol.action.resize(mdp.num_states());
    for (Eigen::Index x = 0; x < q.rows(); ++x) {
        std::size_t arg = 0;
        for (Eigen::Index a = 1; a < q.cols(); ++a)
            if (strictly_better(q(x, a), q(x, static_cast<Eigen::Index>(arg)), mdp.orientation()))
                arg = static_cast<std::size_t>(a);
        pol.action[static_cast<std::size_t>(x)] = arg;
    }
    return pol;
}

double default_value_iteration_tolerance(double discount) {
    return 1e-10 * (1.0 - discount) / discount;
}

ValueIterationResult value_iteration(const Mdp& mdp, double tol, std::size_t max_iter) {
    if (!(tol > 0.0))
        throw ValidationError("value iteration tolerance must be positive");
    ValueIterationResult out;
    ValueFunction j = ValueFunction::Zero(static_cast<Eigen::Index>(mdp.num_states()));
    for (std::size_t k = 0; k < max_iter; ++k) {
        ValueFunction next = bellman_apply(mdp, j);
        out.report.residual = (next - j).lpNorm<Eigen::Infinity>();
        out.report.iterations = k + 1;
        j = std::move(next);
        if (out.report.residual <= tol) {
            out.report.converged = true;
            break;
        }
    }
    out.value = std::move(j);
    out.policy = greedy_policy(mdp, out.value);
    return out;
}

ValueFunction evaluate_policy_exact(const StochasticMatrix& p, const Vector& reward, double discount) {
    const auto n = static_cast<Eigen::Index>(p.size());
    if (reward.size() != n)
        throw StructuralError("reward length does not match matrix dimension");
    if (!(discount > 0.0 && discount < 1.0))
        throw ValidationError("discount must lie in (0,1)");

    if (p.size() <= kDenseSolveLimit) {
        const Matrix a = Matrix::Identity(n, n) - discount * p.to_dense();
        Eigen::PartialPivLU<Matrix> lu(a);
        ValueFunction j = lu.solve(reward);
        if (!j.allFinite())
            throw NumericalError("policy evaluation solve broke down");
        return j;
    }

    // Neumann series J_{k+1} = R + alpha P J_k; the residual of J_{k+1} is
    // bounded by alpha ||J_{k+1} - J_k||.
    ValueFunction j = reward;
    for (std::size_t k = 0; k < 100000000; ++k) {
        ValueFunction next = reward + discount * p.apply(j);
        const double step = (next - j).lpNorm<Eigen::Infinity>();
        j = std::move(next);
        if (discount * step <= 1e-10)
            return j;
        if (!std::isfinite(step))
            throw NumericalError("policy evaluation iteration diverged");
    }
    throw NumericalError("policy evaluation iteration did not converge");
}

namespace {

double stationarity_residual(const StochasticMatrix& p, const Vector& eps) {
    return (p.apply_transpose(eps) - eps).lpNorm<1>();
}

} // namespace

ProbabilityDistribution stationary_distribution(const StochasticMatrix& p, StationaryOptions opts) {
    const auto reg = is_regular(p);
    if (!reg.regular)
        throw ValidationError("chain is not regular: " + reg.diagnosis);
    const auto n = static_cast<Eigen::Index>(p.size());

    Vector eps = Vector::Constant(n, 1.0 / static_cast<double>(n));
    if (p.size() <= kDenseSolveLimit) {
        // (I - P^T) eps = 0 with the last equation replaced by sum(eps) = 1.
        Matrix a = Matrix::Identity(n, n) - p.to_dense().transpose();
        a.row(n - 1).setOnes();
        Vector b = Vector::Zero(n);
        b[n - 1] = 1.0;
        Vector direct = Eigen::FullPivLU<Matrix>(a).solve(b);
        if (direct.allFinite() && direct.minCoeff() > 0.0)
            eps = direct / direct.sum();
    }

    double res = stationarity_residual(p, eps);
    // Power iteration, switching to Cesaro averages for the second half of the
    // budget in case the plain iterates stall.
    Vector avg = Vector::Zero(n);
    std::size_t averaged = 0;
    for (std::size_t k = 0; k < opts.max_iter && res > opts.tol; ++k) {
        eps = p.apply_transpose(eps);
        eps /= eps.sum();
        if (k >= opts.max_iter / 2) {
            avg += eps;
            ++averaged;
            const Vector mean = avg / static_cast<double>(averaged);
            const double mean_res = stationarity_residual(p, mean);
            if (mean_res <= opts.tol) {
                eps = mean;
                res = mean_res;
                break;
            }
        }
        res = stationarity_residual(p, eps);
    }
    if (!(res <= opts.tol))
        throw NumericalError("stationary distribution did not converge (residual " +
                             format_double(res) + ")");
    if (!(eps.minCoeff() > 0.0))
        throw NumericalError("stationary distribution has non-positive entries");
    return ProbabilityDistribution(std::move(eps));
}

BoundReport value_perturbation_bound(const ValueFunction& j_star, const ValueFunction& j_bar,
                                     const Vector& reward, double discount) {
    if (j_star.size() != j_bar.size() || j_star.size() != reward.size())
        throw StructuralError("value functions and reward must have equal length");
    BoundReport r;
    r.lhs = (j_star - j_bar).lpNorm<Eigen::Infinity>();
    r.rhs = discount * reward.lpNorm<Eigen::Infinity>() / (1.0 - discount);
    r.holds = r.lhs <= r.rhs + 1e-12;
    return r;
}

NormConditionReport norm_condition_check(const Mdp& mdp, double discount) {
    NormConditionReport r;
    r.threshold = 1.0 - discount;
    for (std::size_t i = 0; i < mdp.num_actions(); ++i)
        for (std::size_t j = i + 1; j < mdp.num_actions(); ++j) {
            const double v = infinity_norm_diff(mdp.transition(i), mdp.transition(j));
            if (v > r.value) {
                r.value = v;
                r.action_i = i;
                r.action_j = j;
            }
        }
    r.holds = r.value < r.threshold;
    return r;
}

} // namespace optd
