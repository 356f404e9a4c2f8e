#include "optd/projection.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/QR>
#include <Eigen/SparseCholesky>
#include <Eigen/SparseCore>

#include <cmath>
#include <ostream>

namespace optd {

std::size_t numerical_rank(const Matrix& m) {
    if (m.size() == 0)
        return 0;
    Eigen::ColPivHouseholderQR<Matrix> qr(m);
    const double cutoff = 1e-10 * m.norm();
    const Matrix& r = qr.matrixQR();
    const Eigen::Index diag = std::min(r.rows(), r.cols());
    std::size_t rank = 0;
    for (Eigen::Index i = 0; i < diag; ++i)
        if (std::abs(r(i, i)) > cutoff)
            ++rank;
    return rank;
}

FeatureMatrix::FeatureMatrix(Matrix phi) : phi_(std::move(phi)) {
    if (phi_.rows() == 0 || phi_.cols() == 0)
        throw StructuralError("feature matrix is empty");
    if (phi_.cols() > phi_.rows())
        throw ValidationError("more features than states cannot have full column rank");
    if (!phi_.allFinite())
        throw ValidationError("feature matrix has non-finite entries");
    const std::size_t rank = numerical_rank(phi_);
    if (rank != num_features())
        throw ValidationError("feature matrix is rank deficient: rank " + std::to_string(rank) +
                              " < " + std::to_string(num_features()) + " columns");
}

void ProjectedSystem::write(std::ostream& os) const {
    os << "discount = " << format_double(discount) << '\n'
       << "features = " << num_features << '\n'
       << "states = " << num_states << '\n'
       << "Z =\n";
    for (Eigen::Index i = 0; i < z.rows(); ++i) {
        for (Eigen::Index j = 0; j < z.cols(); ++j)
            os << (j ? " " : "") << format_double(z(i, j));
        os << '\n';
    }
    os << "d =\n";
    for (Eigen::Index i = 0; i < d.size(); ++i)
        os << format_double(d[i]) << '\n';
}

ProjectedSystem assemble_projected_system(const FeatureMatrix& phi, const ProbabilityDistribution& weights,
                                          const StochasticMatrix& p, const Vector& reward,
                                          double discount) {
    const std::size_t n = phi.num_states();
    if (weights.size() != n || p.size() != n || static_cast<std::size_t>(reward.size()) != n)
        throw StructuralError("projected system inputs have inconsistent dimensions");
    if (!weights.strictly_positive())
        throw ValidationError("projection weights must be strictly positive");

    const auto k = static_cast<Eigen::Index>(phi.num_features());
    ProjectedSystem sys;
    sys.z = Matrix::Zero(k, k);
    sys.gram = Matrix::Zero(k, k);
    sys.d = Vector::Zero(k);
    sys.weights = weights;
    sys.discount = discount;
    sys.num_states = n;
    sys.num_features = phi.num_features();

    const Matrix& f = phi.matrix();
    Vector expected_next(k);
    for (std::size_t x = 0; x < n; ++x) {
        const auto row = p.row(x);
        expected_next.setZero();
        for (std::size_t j = 0; j < row.count; ++j)
            expected_next += row.vals[j] * f.row(static_cast<Eigen::Index>(row.cols[j])).transpose();
        const Vector fx = f.row(static_cast<Eigen::Index>(x)).transpose();
        const double w = weights[x];
        sys.gram.noalias() += w * fx * fx.transpose();
        sys.z.noalias() += w * fx * (fx - discount * expected_next).transpose();
        sys.d += w * reward[static_cast<Eigen::Index>(x)] * fx;
    }
    return sys;
}

ParameterVector solve_direct(const ProjectedSystem& sys) {
    Eigen::FullPivLU<Matrix> lu(sys.z);
    const double rcond = lu.rcond();
    if (!lu.isInvertible() || rcond < 1e-14)
        throw NumericalError("projected system matrix is numerically singular (rcond estimate " +
                             format_double(rcond) + ")");
    ParameterVector r = lu.solve(sys.d);
    // One step of iterative refinement.
    r += lu.solve(Vector(sys.d - sys.z * r));
    return r;
}

std::vector<ParameterVector> iterate_projected(const ProjectedSystem& sys, const ParameterVector& r0,
                                               IterationOptions opts) {
    if (static_cast<std::size_t>(r0.size()) != sys.num_features)
        throw StructuralError("initial parameter vector has wrong length");
    const Eigen::LLT<Matrix> gram(sys.gram);
    if (gram.info() != Eigen::Success)
        throw NumericalError("Phi^T Theta Phi is not positive definite");

    std::vector<ParameterVector> traj{r0};
    ParameterVector r = r0;
    for (std::size_t k = 0; k < opts.max_iter; ++k) {
        ParameterVector next = r - gram.solve(Vector(sys.z * r - sys.d));
        const double norm = next.norm();
        if (!std::isfinite(norm) || norm > opts.divergence_limit)
            throw NumericalError("projected iteration diverged at step " + std::to_string(k + 1) +
                                 " (||r|| = " + format_double(norm) + ")");
        const double step = (next - r).norm();
        traj.push_back(next);
        r = std::move(next);
        if (opts.step_tol > 0.0 && step <= opts.step_tol)
            break;
    }
    return traj;
}

namespace {

using SparseMatrix = Eigen::SparseMatrix<double>;

// Symmetric part of Theta (I - alpha P); with `scaled` it is conjugated by
// Theta^{-1/2}, giving diagonal entries 1 - alpha P(x, x).
SparseMatrix symmetric_part(const ProbabilityDistribution& w, const StochasticMatrix& p, double alpha,
                            bool scaled) {
    const std::size_t n = p.size();
    std::vector<double> root(n);
    for (std::size_t x = 0; x < n; ++x)
        root[x] = std::sqrt(w[x]);
    std::vector<Eigen::Triplet<double>> t;
    t.reserve(2 * p.nonzeros() + n);
    for (std::size_t x = 0; x < n; ++x) {
        const auto xi = static_cast<int>(x);
        t.emplace_back(xi, xi, scaled ? 1.0 : w[x]);
        const auto row = p.row(x);
        for (std::size_t k = 0; k < row.count; ++k) {
            const std::size_t y = row.cols[k];
            // w_x / sqrt(w_x w_y) = sqrt(w_x) / sqrt(w_y), computed without underflow.
            const double v = -0.5 * alpha * row.vals[k] * (scaled ? root[x] / root[y] : w[x]);
            const auto yi = static_cast<int>(y);
            t.emplace_back(xi, yi, v);
            t.emplace_back(yi, xi, v);
        }
    }
    SparseMatrix s(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
    s.setFromTriplets(t.begin(), t.end());
    return s;
}

bool cholesky_succeeds(const SparseMatrix& s, double shift) {
    SparseMatrix shifted = s;
    for (Eigen::Index i = 0; i < shifted.rows(); ++i)
        shifted.coeffRef(i, i) -= shift;
    Eigen::SimplicialLLT<SparseMatrix> llt(shifted);
    return llt.info() == Eigen::Success;
}

double gershgorin_radius(const SparseMatrix& s) {
    double sigma = 0.0;
    for (Eigen::Index k = 0; k < s.outerSize(); ++k) {
        double row_sum = 0.0;
        for (SparseMatrix::InnerIterator it(s, k); it; ++it)
            row_sum += std::abs(it.value());
        sigma = std::max(sigma, row_sum);
    }
    return sigma;
}

// Power iteration on (sigma I - S), whose dominant eigenvalue is sigma - lambda_min(S).
// Returns a Rayleigh quotient, which bounds lambda_min from above.
double min_eigenvalue_estimate(const SparseMatrix& s) {
    const auto n = s.rows();
    const double sigma = gershgorin_radius(s);
    Vector v = Vector::Ones(n) / std::sqrt(static_cast<double>(n));
    // Perturb the start so it is not orthogonal to the target eigenvector.
    for (Eigen::Index i = 0; i < n; ++i)
        v[i] += 1e-3 * std::sin(static_cast<double>(i + 1));
    v.normalize();
    double rayleigh = v.dot(s * v);
    for (int it = 0; it < 5000; ++it) {
        Vector w = sigma * v - s * v;
        v = w.normalized();
        const double next = v.dot(s * v);
        if (std::abs(next - rayleigh) <= 1e-13 * sigma) {
            rayleigh = next;
            break;
        }
        rayleigh = next;
    }
    return rayleigh;
}

} // namespace

DefinitenessReport certificate_positive_definite(const ProbabilityDistribution& weights,
                                                 const StochasticMatrix& p, double discount) {
    if (weights.size() != p.size())
        throw StructuralError("weights and matrix dimensions differ");
    DefinitenessReport rep;
    const SparseMatrix s = symmetric_part(weights, p, discount, false);
    if (!weights.strictly_positive()) {
        // A zero weight leaves a zero row and column in S, so it is at best semidefinite.
        rep.min_eigenvalue = p.size() <= kDenseSolveLimit
                                 ? Eigen::SelfAdjointEigenSolver<Matrix>(Matrix(s), Eigen::EigenvaluesOnly)
                                       .eigenvalues()
                                       .minCoeff()
                                 : min_eigenvalue_estimate(s);
        rep.certified = true;
        rep.method = "zero-weight";
        return rep;
    }
    const SparseMatrix scaled = symmetric_part(weights, p, discount, true);

    if (p.size() <= kDenseSolveLimit) {
        Eigen::SelfAdjointEigenSolver<Matrix> plain(Matrix(s), Eigen::EigenvaluesOnly);
        Eigen::SelfAdjointEigenSolver<Matrix> conj(Matrix(scaled), Eigen::EigenvaluesOnly);
        rep.min_eigenvalue = plain.eigenvalues().minCoeff();
        rep.scaled_min_eigenvalue = conj.eigenvalues().minCoeff();
        rep.norm = conj.eigenvalues().cwiseAbs().maxCoeff();
        rep.holds = rep.scaled_min_eigenvalue > 1e-12 * rep.norm;
        rep.certified = true;
        rep.method = "dense-eigen";
        return rep;
    }

    rep.min_eigenvalue = min_eigenvalue_estimate(s);
    rep.scaled_min_eigenvalue = min_eigenvalue_estimate(scaled);
    rep.norm = gershgorin_radius(scaled);
    rep.holds = cholesky_succeeds(scaled, 1e-12 * rep.norm);
    rep.certified = true;
    rep.method = "sparse-cholesky";
    return rep;
}

SpectrumReport certificate_iteration_spectrum(const ProjectedSystem& sys) {
    const Eigen::LLT<Matrix> gram(sys.gram);
    if (gram.info() != Eigen::Success)
        throw NumericalError("Phi^T Theta Phi is not positive definite");
    const auto k = static_cast<Eigen::Index>(sys.num_features);
    const Matrix iter = Matrix::Identity(k, k) - gram.solve(sys.z);
    Eigen::EigenSolver<Matrix> es(iter, false);
    SpectrumReport rep;
    rep.spectral_radius = es.eigenvalues().cwiseAbs().maxCoeff();
    rep.holds = rep.spectral_radius < 1.0 - 1e-12;
    return rep;
}

ProjectionResult project_value(const ValueFunction& j, const FeatureMatrix& phi,
                               const ProbabilityDistribution& weights) {
    if (static_cast<std::size_t>(j.size()) != phi.num_states() || weights.size() != phi.num_states())
        throw StructuralError("projection inputs have inconsistent dimensions");
    const Matrix& f = phi.matrix();
    const Vector& w = weights.values();
    const Matrix gram = f.transpose() * w.asDiagonal() * f;
    const Vector rhs = f.transpose() * w.cwiseProduct(j);
    Eigen::LDLT<Matrix> ldlt(gram);
    if (ldlt.info() != Eigen::Success)
        throw NumericalError("weighted Gram matrix is singular");
    ProjectionResult out;
    out.coefficients = ldlt.solve(rhs);
    out.coefficients += ldlt.solve(Vector(rhs - gram * out.coefficients));
    out.fitted = f * out.coefficients;
    return out;
}

} // namespace optd
