#include "optd/perturbation.hpp"

#include <cmath>
#include <ostream>

namespace optd {

PerturbationSpec::PerturbationSpec(Vector mixing, StochasticMatrix exploration)
    : mixing_(std::move(mixing)), exploration_(std::move(exploration)) {
    if (static_cast<std::size_t>(mixing_.size()) != exploration_.size())
        throw StructuralError("mixing diagonal length does not match exploration matrix");
    for (Eigen::Index i = 0; i < mixing_.size(); ++i)
        if (!(mixing_[i] > 0.0 && mixing_[i] < 1.0))
            throw ValidationError("mixing weight at state " + std::to_string(i) + " = " +
                                  format_double(mixing_[i]) + " is not strictly inside (0,1)");
}

PerturbationSpec PerturbationSpec::uniform(double weight, StochasticMatrix exploration) {
    const auto n = static_cast<Eigen::Index>(exploration.size());
    return PerturbationSpec(Vector::Constant(n, weight), std::move(exploration));
}

bool PerturbationSpec::is_uniform() const {
    return (mixing_.array() == mixing_[0]).all();
}

StochasticMatrix perturb_transition(const StochasticMatrix& p, const PerturbationSpec& spec) {
    const auto& q = spec.exploration();
    if (p.size() != q.size())
        throw StructuralError("target and exploration matrices differ in dimension");
    const std::size_t n = p.size();
    std::vector<std::size_t> ptr{0}, cols;
    std::vector<double> vals;
    cols.reserve(p.nonzeros() + q.nonzeros());
    vals.reserve(p.nonzeros() + q.nonzeros());
    for (std::size_t x = 0; x < n; ++x) {
        const double a = spec.mixing()[static_cast<Eigen::Index>(x)];
        const auto pr = p.row(x), qr = q.row(x);
        std::size_t i = 0, j = 0;
        while (i < pr.count || j < qr.count) {
            if (j == qr.count || (i < pr.count && pr.cols[i] < qr.cols[j])) {
                cols.push_back(pr.cols[i]);
                vals.push_back(a * pr.vals[i++]);
            } else if (i == pr.count || qr.cols[j] < pr.cols[i]) {
                cols.push_back(qr.cols[j]);
                vals.push_back((1.0 - a) * qr.vals[j++]);
            } else {
                cols.push_back(pr.cols[i]);
                vals.push_back((1.0 - a) * qr.vals[j++] + a * pr.vals[i++]);
            }
        }
        ptr.push_back(cols.size());
    }
    return StochasticMatrix::from_csr(n, std::move(ptr), std::move(cols), std::move(vals));
}

void MixtureReport::write(std::ostream& os) const {
    os << "deviation = " << format_double(deviation) << '\n'
       << "target_exploration_gap = " << format_double(target_gap) << '\n'
       << "deviation_bound = " << format_double(bound) << '\n'
       << "deviation_threshold = " << format_double(threshold) << '\n'
       << "deviation_within_threshold = " << (within_threshold ? "true" : "false") << '\n'
       << "uniform_mixing = " << (uniform ? "true" : "false") << '\n';
}

MixtureReport deviation_report(const StochasticMatrix& p, const PerturbationSpec& spec) {
    MixtureReport r;
    const StochasticMatrix pbar = perturb_transition(p, spec);
    r.deviation = infinity_norm_diff(p, pbar);
    r.target_gap = infinity_norm_diff(p, spec.exploration());
    r.threshold = 1.0 - spec.min_weight();
    r.bound = r.threshold * r.target_gap;
    r.within_threshold = r.deviation <= r.threshold;
    r.uniform = spec.is_uniform();
    if (r.uniform && std::abs(r.deviation - r.bound) > 1e-12)
        throw NumericalError("uniform mixing deviation " + format_double(r.deviation) +
                             " differs from (1 - a)||P - Q|| = " + format_double(r.bound));
    return r;
}

StochasticPolicy mixture_policy(const StochasticPolicy& target, const StochasticPolicy& explore, double xi) {
    if (!(xi > 0.0 && xi < 1.0))
        throw ValidationError("exploration parameter must lie strictly inside (0,1)");
    if (target.probs.rows() != explore.probs.rows() || target.probs.cols() != explore.probs.cols())
        throw StructuralError("policy shapes differ");
    target.validate();
    explore.validate();
    StochasticPolicy out;
    out.probs = xi * explore.probs + (1.0 - xi) * target.probs;
    return out;
}

} // namespace optd
