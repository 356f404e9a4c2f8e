#include "optd/mdp_core.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <istream>
#include <limits>
#include <numeric>
#include <ostream>
#include <queue>
#include <sstream>

namespace optd {

std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

TripletMatrix TripletMatrix::from_dense(const Matrix& dense) {
    if (dense.rows() != dense.cols())
        throw StructuralError("matrix is not square: " + std::to_string(dense.rows()) + "x" +
                              std::to_string(dense.cols()));
    TripletMatrix t;
    t.size = static_cast<std::size_t>(dense.rows());
    for (Eigen::Index r = 0; r < dense.rows(); ++r)
        for (Eigen::Index c = 0; c < dense.cols(); ++c)
            if (dense(r, c) != 0.0)
                t.entries.push_back({static_cast<std::size_t>(r), static_cast<std::size_t>(c),
                                     dense(r, c)});
    return t;
}

std::string ValidationReport::summary() const {
    std::ostringstream os;
    os << (passed ? "pass" : "fail") << ": max row deviation " << format_double(max_row_deviation)
       << ", " << bad_rows.size() << " bad rows, " << negative_entries << " negative entries, "
       << out_of_range_entries << " entries above 1";
    return os.str();
}

ValidationReport validate_stochastic(const TripletMatrix& m, double tau) {
    ValidationReport rep;
    std::vector<double> sums(m.size, 0.0);
    for (const auto& e : m.entries) {
        if (e.row >= m.size || e.col >= m.size)
            throw StructuralError("entry (" + std::to_string(e.row) + "," + std::to_string(e.col) +
                                  ") outside " + std::to_string(m.size) + "x" +
                                  std::to_string(m.size) + " matrix");
        if (!(e.value >= 0.0))
            ++rep.negative_entries;
        else if (e.value > 1.0)
            ++rep.out_of_range_entries;
        sums[e.row] += e.value;
    }
    for (std::size_t r = 0; r < m.size; ++r) {
        double dev = std::abs(sums[r] - 1.0);
        if (!std::isfinite(dev))
            dev = std::numeric_limits<double>::infinity();
        rep.max_row_deviation = std::max(rep.max_row_deviation, dev);
        if (dev > tau)
            rep.bad_rows.push_back({r, dev});
    }
    rep.passed = rep.bad_rows.empty() && rep.negative_entries == 0 && rep.out_of_range_entries == 0;
    return rep;
}

ValidationReport validate_stochastic(const Matrix& m, double tau) {
    return validate_stochastic(TripletMatrix::from_dense(m), tau);
}

// ---------------------------------------------------------------------------
// StochasticMatrix
// ---------------------------------------------------------------------------

StochasticMatrix::StochasticMatrix(const TripletMatrix& m, double tau) : n_(m.size) {
    auto entries = m.entries;
    for (const auto& e : entries)
        if (e.row >= n_ || e.col >= n_)
            throw StructuralError("entry (" + std::to_string(e.row) + "," + std::to_string(e.col) +
                                  ") outside " + std::to_string(n_) + "x" + std::to_string(n_) +
                                  " matrix");
    std::sort(entries.begin(), entries.end(), [](const Triplet& a, const Triplet& b) {
        return a.row != b.row ? a.row < b.row : a.col < b.col;
    });
    row_ptr_.assign(n_ + 1, 0);
    for (std::size_t i = 0; i < entries.size();) {
        std::size_t j = i;
        double v = 0.0;
        while (j < entries.size() && entries[j].row == entries[i].row &&
               entries[j].col == entries[i].col)
            v += entries[j++].value;
        if (v != 0.0) {
            cols_.push_back(entries[i].col);
            vals_.push_back(v);
            ++row_ptr_[entries[i].row + 1];
        }
        i = j;
    }
    std::partial_sum(row_ptr_.begin(), row_ptr_.end(), row_ptr_.begin());
    finalize(tau);
}

StochasticMatrix::StochasticMatrix(const Matrix& dense, double tau)
    : StochasticMatrix(TripletMatrix::from_dense(dense), tau) {}

StochasticMatrix StochasticMatrix::identity(std::size_t n) {
    std::vector<std::size_t> ptr(n + 1), cols(n);
    std::iota(ptr.begin(), ptr.end(), std::size_t{0});
    std::iota(cols.begin(), cols.end(), std::size_t{0});
    return from_csr(n, std::move(ptr), std::move(cols), std::vector<double>(n, 1.0));
}

StochasticMatrix StochasticMatrix::from_csr(std::size_t n, std::vector<std::size_t> row_ptr,
                                            std::vector<std::size_t> cols,
                                            std::vector<double> vals, double tau) {
    if (row_ptr.size() != n + 1 || cols.size() != vals.size() || row_ptr.back() != cols.size())
        throw StructuralError("inconsistent CSR arrays");
    StochasticMatrix p;
    p.n_ = n;
    p.row_ptr_ = std::move(row_ptr);
    p.cols_ = std::move(cols);
    p.vals_ = std::move(vals);
    for (std::size_t r = 0; r < n; ++r)
        for (std::size_t k = p.row_ptr_[r]; k < p.row_ptr_[r + 1]; ++k) {
            if (p.cols_[k] >= n)
                throw StructuralError("column index out of range in row " + std::to_string(r));
            if (k > p.row_ptr_[r] && p.cols_[k] <= p.cols_[k - 1])
                throw StructuralError("CSR columns not strictly increasing in row " +
                                      std::to_string(r));
        }
    p.finalize(tau);
    return p;
}

void StochasticMatrix::finalize(double tau) {
    if (n_ == 0)
        throw StructuralError("stochastic matrix needs at least one state");
    for (std::size_t r = 0; r < n_; ++r) {
        double sum = 0.0;
        for (std::size_t k = row_ptr_[r]; k < row_ptr_[r + 1]; ++k) {
            const double v = vals_[k];
            if (!(v >= 0.0) || v > 1.0 + tau)
                throw ValidationError("entry (" + std::to_string(r) + "," +
                                      std::to_string(cols_[k]) + ") = " + format_double(v) +
                                      " outside [0,1]");
            sum += v;
        }
        const double dev = std::abs(sum - 1.0);
        if (!(dev <= tau))
            throw ValidationError("row " + std::to_string(r) + " sums to " + format_double(sum) +
                                  " (deviation " + format_double(dev) + " exceeds tolerance)");
        if (sum != 1.0)
            for (std::size_t k = row_ptr_[r]; k < row_ptr_[r + 1]; ++k)
                vals_[k] = std::min(1.0, vals_[k] / sum);
    }
}

double StochasticMatrix::at(std::size_t r, std::size_t c) const {
    const auto v = row(r);
    const auto* it = std::lower_bound(v.cols, v.cols + v.count, c);
    return (it != v.cols + v.count && *it == c) ? v.vals[it - v.cols] : 0.0;
}

Vector StochasticMatrix::apply(const Vector& x) const {
    if (static_cast<std::size_t>(x.size()) != n_)
        throw StructuralError("vector length does not match matrix dimension");
    Vector y(static_cast<Eigen::Index>(n_));
    for (std::size_t r = 0; r < n_; ++r) {
        double s = 0.0;
        for (std::size_t k = row_ptr_[r]; k < row_ptr_[r + 1]; ++k)
            s += vals_[k] * x[static_cast<Eigen::Index>(cols_[k])];
        y[static_cast<Eigen::Index>(r)] = s;
    }
    return y;
}

Vector StochasticMatrix::apply_transpose(const Vector& x) const {
    if (static_cast<std::size_t>(x.size()) != n_)
        throw StructuralError("vector length does not match matrix dimension");
    Vector y = Vector::Zero(static_cast<Eigen::Index>(n_));
    for (std::size_t r = 0; r < n_; ++r) {
        const double xr = x[static_cast<Eigen::Index>(r)];
        for (std::size_t k = row_ptr_[r]; k < row_ptr_[r + 1]; ++k)
            y[static_cast<Eigen::Index>(cols_[k])] += vals_[k] * xr;
    }
    return y;
}

Matrix StochasticMatrix::to_dense() const {
    Matrix d = Matrix::Zero(static_cast<Eigen::Index>(n_), static_cast<Eigen::Index>(n_));
    for (std::size_t r = 0; r < n_; ++r)
        for (std::size_t k = row_ptr_[r]; k < row_ptr_[r + 1]; ++k)
            d(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(cols_[k])) = vals_[k];
    return d;
}

TripletMatrix StochasticMatrix::to_triplets() const {
    TripletMatrix t;
    t.size = n_;
    t.entries.reserve(vals_.size());
    for (std::size_t r = 0; r < n_; ++r)
        for (std::size_t k = row_ptr_[r]; k < row_ptr_[r + 1]; ++k)
            t.entries.push_back({r, cols_[k], vals_[k]});
    return t;
}

// ---------------------------------------------------------------------------

ProbabilityDistribution::ProbabilityDistribution(Vector p, double tau) : p_(std::move(p)) {
    if (p_.size() == 0)
        throw StructuralError("empty distribution");
    for (Eigen::Index i = 0; i < p_.size(); ++i)
        if (!(p_[i] >= 0.0) || p_[i] > 1.0 + tau)
            throw ValidationError("distribution entry " + std::to_string(i) + " = " +
                                  format_double(p_[i]) + " outside [0,1]");
    const double s = p_.sum();
    if (!(std::abs(s - 1.0) <= tau))
        throw ValidationError("distribution sums to " + format_double(s));
}

ProbabilityDistribution ProbabilityDistribution::uniform(std::size_t n) {
    return ProbabilityDistribution(
        Vector::Constant(static_cast<Eigen::Index>(n), 1.0 / static_cast<double>(n)));
}

// ---------------------------------------------------------------------------

Mdp::Mdp(StateSpace states, ActionSet actions, std::vector<StochasticMatrix> transitions,
         Vector reward, double discount, Orientation orientation)
    : states_(std::move(states)), actions_(std::move(actions)),
      transitions_(std::move(transitions)), reward_(std::move(reward)), discount_(discount),
      orientation_(orientation) {
    if (states_.size == 0)
        throw StructuralError("MDP needs at least one state");
    if (actions_.size == 0)
        throw StructuralError("MDP needs at least one action");
    if (!states_.labels.empty() && states_.labels.size() != states_.size)
        throw StructuralError("state label count does not match state count");
    if (actions_.labels.empty())
        for (std::size_t a = 0; a < actions_.size; ++a)
            actions_.labels.push_back(std::to_string(a));
    if (actions_.labels.size() != actions_.size)
        throw StructuralError("action label count does not match action count");
    if (transitions_.size() != actions_.size)
        throw StructuralError("need one transition matrix per action");
    for (const auto& p : transitions_)
        if (p.size() != states_.size)
            throw StructuralError("transition matrix dimension does not match state count");
    if (static_cast<std::size_t>(reward_.size()) != states_.size)
        throw StructuralError("reward length does not match state count");
    if (!reward_.allFinite())
        throw ValidationError("reward has non-finite entries");
    if (!(discount_ > 0.0 && discount_ < 1.0))
        throw ValidationError("discount must lie in (0,1), got " + format_double(discount_));
}

StochasticPolicy StochasticPolicy::from_deterministic(const DeterministicPolicy& p,
                                                      std::size_t num_actions) {
    StochasticPolicy s;
    s.probs = Matrix::Zero(static_cast<Eigen::Index>(p.action.size()),
                           static_cast<Eigen::Index>(num_actions));
    for (std::size_t x = 0; x < p.action.size(); ++x) {
        if (p.action[x] >= num_actions)
            throw StructuralError("invalid action index " + std::to_string(p.action[x]) +
                                  " at state " + std::to_string(x));
        s.probs(static_cast<Eigen::Index>(x), static_cast<Eigen::Index>(p.action[x])) = 1.0;
    }
    return s;
}

StochasticPolicy StochasticPolicy::uniform(std::size_t num_states, std::size_t num_actions) {
    StochasticPolicy s;
    s.probs = Matrix::Constant(static_cast<Eigen::Index>(num_states),
                               static_cast<Eigen::Index>(num_actions),
                               1.0 / static_cast<double>(num_actions));
    return s;
}

void StochasticPolicy::validate(double tau) const {
    for (Eigen::Index x = 0; x < probs.rows(); ++x) {
        for (Eigen::Index u = 0; u < probs.cols(); ++u)
            if (!(probs(x, u) >= 0.0) || probs(x, u) > 1.0 + tau)
                throw ValidationError("policy probability outside [0,1] at state " +
                                      std::to_string(x));
        if (!(std::abs(probs.row(x).sum() - 1.0) <= tau))
            throw ValidationError("policy row " + std::to_string(x) + " does not sum to 1");
    }
}

namespace {

StochasticMatrix select_rows(const Mdp& mdp, const DeterministicPolicy& policy) {
    const std::size_t n = mdp.num_states();
    if (policy.action.size() != n)
        throw StructuralError("policy length does not match state count");
    std::vector<std::size_t> ptr{0}, cols;
    std::vector<double> vals;
    for (std::size_t x = 0; x < n; ++x) {
        const std::size_t a = policy.action[x];
        if (a >= mdp.num_actions())
            throw StructuralError("invalid action index " + std::to_string(a) + " at state " +
                                  std::to_string(x));
        const auto row = mdp.transition(a).row(x);
        cols.insert(cols.end(), row.cols, row.cols + row.count);
        vals.insert(vals.end(), row.vals, row.vals + row.count);
        ptr.push_back(cols.size());
    }
    return StochasticMatrix::from_csr(n, std::move(ptr), std::move(cols), std::move(vals));
}

StochasticMatrix mix_rows(const Mdp& mdp, const StochasticPolicy& policy) {
    const std::size_t n = mdp.num_states();
    if (static_cast<std::size_t>(policy.probs.rows()) != n ||
        static_cast<std::size_t>(policy.probs.cols()) != mdp.num_actions())
        throw StructuralError("policy shape does not match MDP");
    policy.validate();
    std::vector<std::size_t> ptr{0}, cols;
    std::vector<double> vals;
    std::vector<std::pair<std::size_t, double>> acc;
    for (std::size_t x = 0; x < n; ++x) {
        acc.clear();
        for (std::size_t a = 0; a < mdp.num_actions(); ++a) {
            const double w = policy.probs(static_cast<Eigen::Index>(x), static_cast<Eigen::Index>(a));
            if (w == 0.0)
                continue;
            const auto row = mdp.transition(a).row(x);
            for (std::size_t k = 0; k < row.count; ++k)
                acc.emplace_back(row.cols[k], w * row.vals[k]);
        }
        std::stable_sort(acc.begin(), acc.end(),
                         [](const auto& l, const auto& r) { return l.first < r.first; });
        for (std::size_t i = 0; i < acc.size();) {
            std::size_t j = i;
            double v = 0.0;
            while (j < acc.size() && acc[j].first == acc[i].first)
                v += acc[j++].second;
            if (v != 0.0) {
                cols.push_back(acc[i].first);
                vals.push_back(v);
            }
            i = j;
        }
        ptr.push_back(cols.size());
    }
    return StochasticMatrix::from_csr(n, std::move(ptr), std::move(cols), std::move(vals));
}

} // namespace

StochasticMatrix transition_under_policy(const Mdp& mdp, const Policy& policy) {
    return std::visit(
        [&](const auto& p) -> StochasticMatrix {
            using T = std::decay_t<decltype(p)>;
            if constexpr (std::is_same_v<T, DeterministicPolicy>)
                return select_rows(mdp, p);
            else
                return mix_rows(mdp, p);
        },
        policy);
}

double infinity_norm_diff(const StochasticMatrix& p, const StochasticMatrix& q) {
    if (p.size() != q.size())
        throw StructuralError("matrix dimensions differ");
    double worst = 0.0;
    for (std::size_t r = 0; r < p.size(); ++r) {
        const auto a = p.row(r), b = q.row(r);
        std::size_t i = 0, j = 0;
        double s = 0.0;
        while (i < a.count || j < b.count) {
            if (j == b.count || (i < a.count && a.cols[i] < b.cols[j]))
                s += std::abs(a.vals[i++]);
            else if (i == a.count || b.cols[j] < a.cols[i])
                s += std::abs(b.vals[j++]);
            else
                s += std::abs(a.vals[i++] - b.vals[j++]);
        }
        worst = std::max(worst, s);
    }
    return worst;
}

RegularityReport is_regular(const StochasticMatrix& p) {
    const std::size_t n = p.size();
    RegularityReport rep;
    constexpr std::size_t unseen = static_cast<std::size_t>(-1);

    // Forward BFS from state 0 gives levels; reverse reachability via transposed adjacency.
    std::vector<std::size_t> level(n, unseen);
    std::queue<std::size_t> frontier;
    level[0] = 0;
    frontier.push(0);
    while (!frontier.empty()) {
        const std::size_t u = frontier.front();
        frontier.pop();
        const auto row = p.row(u);
        for (std::size_t k = 0; k < row.count; ++k)
            if (level[row.cols[k]] == unseen) {
                level[row.cols[k]] = level[u] + 1;
                frontier.push(row.cols[k]);
            }
    }
    const auto unreached = std::find(level.begin(), level.end(), unseen);
    if (unreached != level.end()) {
        rep.diagnosis = "not irreducible: state " + std::to_string(unreached - level.begin()) +
                        " is unreachable from state 0";
        return rep;
    }

    std::vector<std::vector<std::size_t>> incoming(n);
    for (std::size_t u = 0; u < n; ++u) {
        const auto row = p.row(u);
        for (std::size_t k = 0; k < row.count; ++k)
            incoming[row.cols[k]].push_back(u);
    }
    std::vector<bool> seen(n, false);
    seen[0] = true;
    frontier.push(0);
    while (!frontier.empty()) {
        const std::size_t v = frontier.front();
        frontier.pop();
        for (std::size_t u : incoming[v])
            if (!seen[u]) {
                seen[u] = true;
                frontier.push(u);
            }
    }
    const auto cannot_return = std::find(seen.begin(), seen.end(), false);
    if (cannot_return != seen.end()) {
        rep.diagnosis = "not irreducible: state 0 is unreachable from state " +
                        std::to_string(cannot_return - seen.begin());
        return rep;
    }
    rep.irreducible = true;

    // Period = gcd over edges u->v of level(u) + 1 - level(v).
    std::size_t g = 0;
    for (std::size_t u = 0; u < n; ++u) {
        const auto row = p.row(u);
        for (std::size_t k = 0; k < row.count; ++k) {
            const auto lu = static_cast<long long>(level[u]);
            const auto lv = static_cast<long long>(level[row.cols[k]]);
            g = std::gcd(g, static_cast<std::size_t>(std::llabs(lu + 1 - lv)));
        }
    }
    rep.period = g;
    rep.regular = (g == 1);
    rep.diagnosis = rep.regular ? "regular" : "periodic with period " + std::to_string(g);
    return rep;
}

// ---------------------------------------------------------------------------

void write_triplets(std::ostream& os, const StochasticMatrix& p) {
    os << p.size() << ' ' << p.nonzeros() << '\n';
    for (std::size_t r = 0; r < p.size(); ++r) {
        const auto row = p.row(r);
        for (std::size_t k = 0; k < row.count; ++k)
            os << r << ' ' << row.cols[k] << ' ' << format_double(row.vals[k]) << '\n';
    }
}

TripletMatrix read_triplets(std::istream& is) {
    TripletMatrix t;
    std::size_t nnz = 0;
    if (!(is >> t.size >> nnz))
        throw StructuralError("missing `n nnz` header");
    t.entries.reserve(nnz);
    for (std::size_t i = 0; i < nnz; ++i) {
        Triplet e{};
        if (!(is >> e.row >> e.col >> e.value))
            throw StructuralError("expected " + std::to_string(nnz) + " entries, read " +
                                  std::to_string(i));
        t.entries.push_back(e);
    }
    return t;
}

void write_vector(std::ostream& os, const Vector& v) {
    for (Eigen::Index i = 0; i < v.size(); ++i)
        os << format_double(v[i]) << '\n';
}

Vector read_vector(std::istream& is) {
    std::vector<double> vals;
    std::string line;
    while (std::getline(is, line)) {
        if (line.empty())
            continue;
        std::size_t used = 0;
        double v = 0.0;
        try {
            v = std::stod(line, &used);
        } catch (const std::exception&) {
            throw StructuralError("cannot parse vector entry: " + line);
        }
        vals.push_back(v);
    }
    return Eigen::Map<Vector>(vals.data(), static_cast<Eigen::Index>(vals.size()));
}

} // namespace optd
