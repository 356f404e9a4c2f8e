#include "optd/resource_allocation.hpp"

#include <boost/multiprecision/cpp_int.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <ostream>

namespace optd::resource {

void ResourceSpec::validate(bool allow_degenerate) const {
    if (m == 0)
        throw ValidationError("need at least one price class");
    if (capacity == 0)
        throw ValidationError("capacity must be at least 1");
    if (price.size() != m || arrival.size() != m || release.size() != m)
        throw StructuralError("price, arrival and release vectors must each have m entries");
    for (std::size_t i = 0; i < m; ++i) {
        const std::string tag = " for class " + std::to_string(i + 1);
        if (!(price[i] > 0.0))
            throw ValidationError("price must be positive" + tag);
        if (!(arrival[i] >= 0.0))
            throw ValidationError("arrival probability must be nonnegative" + tag);
        const bool release_ok = allow_degenerate ? (release[i] >= 0.0 && release[i] < 1.0)
                                                 : (release[i] > 0.0 && release[i] < 1.0);
        if (!release_ok)
            throw ValidationError("release probability out of range" + tag);
        if (!(arrival[i] + release[i] <= 1.0))
            throw ValidationError("arrival + release probability exceeds 1" + tag);
    }
    if (!(discount > 0.0 && discount < 1.0))
        throw ValidationError("discount must lie in (0,1)");
}

std::uint64_t state_count(std::size_t m, std::size_t capacity) {
    // C(N + m, m) built incrementally: C(N + k, k) = C(N + k - 1, k - 1) (N + k) / k.
    unsigned __int128 c = 1;
    for (std::size_t k = 1; k <= m; ++k) {
        c = c * (capacity + k) / k;
        if (c > std::numeric_limits<std::uint64_t>::max())
            throw CapabilityError("state count overflows 64 bits");
    }
    return static_cast<std::uint64_t>(c);
}

std::string state_count_string(std::size_t m, std::size_t capacity) {
    boost::multiprecision::cpp_int c = 1;
    for (std::size_t k = 1; k <= m; ++k)
        c = c * (capacity + k) / k;
    return c.str();
}

// ---------------------------------------------------------------------------

StateEnumeration::StateEnumeration(std::size_t m, std::size_t capacity)
    : m_(m), capacity_(capacity), count_(0) {
    if (m == 0 || capacity == 0)
        throw ValidationError("state enumeration needs m >= 1 and N >= 1");
    if (capacity > std::numeric_limits<std::uint16_t>::max())
        throw CapabilityError("capacity too large for 16-bit occupancy counts");
    count_ = static_cast<std::size_t>(state_count(m, capacity));

    const std::size_t top = capacity + m + 1;
    binom_.assign(top + 1, std::vector<std::uint64_t>(top + 1, 0));
    for (std::size_t n = 0; n <= top; ++n) {
        binom_[n][0] = 1;
        for (std::size_t k = 1; k <= n; ++k)
            binom_[n][k] = binom_[n - 1][k - 1] + (k <= n - 1 ? binom_[n - 1][k] : 0);
    }

    data_.reserve(count_ * m_);
    std::vector<std::uint16_t> x(m_, 0);
    for (std::size_t s = 0; s <= capacity_; ++s) {
        // Lexicographic compositions of s: start at (0,...,0,s).
        std::fill(x.begin(), x.end(), 0);
        x[m_ - 1] = static_cast<std::uint16_t>(s);
        while (true) {
            data_.insert(data_.end(), x.begin(), x.end());
            // Advance: find rightmost i < m-1 that can be incremented by
            // borrowing from the tail.
            if (m_ == 1)
                break;
            std::size_t tail = x[m_ - 1];
            std::ptrdiff_t i = static_cast<std::ptrdiff_t>(m_) - 2;
            while (i >= 0 && tail == 0) {
                tail += x[static_cast<std::size_t>(i)];
                x[static_cast<std::size_t>(i)] = 0;
                --i;
            }
            if (i < 0)
                break;
            ++x[static_cast<std::size_t>(i)];
            for (std::size_t k = static_cast<std::size_t>(i) + 1; k < m_; ++k)
                x[k] = 0;
            x[m_ - 1] = static_cast<std::uint16_t>(tail - 1);
        }
    }
}

std::uint64_t StateEnumeration::binom(std::size_t n, std::size_t k) const {
    return k > n ? 0 : binom_[n][k];
}

std::size_t StateEnumeration::index_of(std::span<const std::uint16_t> x) const {
    if (x.size() != m_)
        throw StructuralError("occupancy vector has wrong dimension");
    std::size_t s = 0;
    for (auto v : x)
        s += v;
    if (s > capacity_)
        throw StructuralError("occupancy exceeds capacity");
    // States with smaller total: C(s - 1 + m, m).
    std::uint64_t idx = s == 0 ? 0 : binom(s - 1 + m_, m_);
    std::size_t rem = s;
    for (std::size_t i = 0; i + 1 < m_; ++i) {
        const std::size_t parts = m_ - i - 1;
        for (std::size_t v = 0; v < x[i]; ++v)
            idx += binom(rem - v + parts - 1, parts - 1);
        rem -= x[i];
    }
    return static_cast<std::size_t>(idx);
}

std::size_t StateEnumeration::total(std::size_t index) const {
    const auto x = state(index);
    return std::accumulate(x.begin(), x.end(), std::size_t{0});
}

void StateEnumeration::write_csv(std::ostream& os) const {
    os << "index";
    for (std::size_t i = 0; i < m_; ++i)
        os << ",x" << i + 1;
    os << '\n';
    for (std::size_t s = 0; s < count_; ++s) {
        os << s;
        for (auto v : state(s))
            os << ',' << v;
        os << '\n';
    }
}

// ---------------------------------------------------------------------------

namespace {

struct ChainOutcome {
    int delta;
    double prob;
};

} // namespace

StochasticMatrix build_transition(const ResourceSpec& spec, const StateEnumeration& states,
                                  std::size_t action) {
    const std::size_t m = spec.m;
    if (action >= m)
        throw StructuralError("action index " + std::to_string(action) + " out of range");
    if (states.dims() != m || states.capacity() != spec.capacity)
        throw StructuralError("state enumeration does not match resource spec");

    const std::size_t n = states.size();
    std::vector<std::size_t> ptr{0}, cols;
    std::vector<double> vals;
    std::vector<std::vector<ChainOutcome>> chains(m);
    std::vector<std::pair<std::size_t, double>> acc;
    std::vector<std::uint16_t> next(m);

    for (std::size_t s = 0; s < n; ++s) {
        const auto x = states.state(s);
        for (std::size_t i = 0; i < m; ++i) {
            auto& out = chains[i];
            out.clear();
            const double dep = x[i] > 0 ? spec.release[i] : 0.0;
            const double arr = i == action ? spec.arrival[i] : 0.0;
            if (arr > 0.0)
                out.push_back({+1, arr});
            if (dep > 0.0)
                out.push_back({-1, dep});
            if (1.0 - arr - dep > 0.0)
                out.push_back({0, 1.0 - arr - dep});
        }
        const std::size_t occupied = states.total(s);

        // Walk the product of per-chain outcomes.
        acc.clear();
        std::vector<std::size_t> pick(m, 0);
        while (true) {
            double prob = 1.0;
            int departures = 0;
            bool arrival = false;
            for (std::size_t i = 0; i < m; ++i) {
                const auto& o = chains[i][pick[i]];
                prob *= o.prob;
                departures += o.delta < 0 ? 1 : 0;
                arrival = arrival || o.delta > 0;
            }
            const bool blocked =
                arrival && occupied - static_cast<std::size_t>(departures) + 1 > spec.capacity;
            for (std::size_t i = 0; i < m; ++i) {
                const int d = chains[i][pick[i]].delta;
                next[i] = static_cast<std::uint16_t>(x[i] + ((d > 0 && blocked) ? 0 : d));
            }
            acc.emplace_back(states.index_of(next), prob);

            std::size_t i = 0;
            while (i < m && ++pick[i] == chains[i].size())
                pick[i++] = 0;
            if (i == m)
                break;
        }
        std::sort(acc.begin(), acc.end(),
                  [](const auto& l, const auto& r) { return l.first < r.first; });
        for (std::size_t i = 0; i < acc.size();) {
            std::size_t j = i;
            double v = 0.0;
            while (j < acc.size() && acc[j].first == acc[i].first)
                v += acc[j++].second;
            cols.push_back(acc[i].first);
            vals.push_back(v);
            i = j;
        }
        ptr.push_back(cols.size());
    }
    return StochasticMatrix::from_csr(n, std::move(ptr), std::move(cols), std::move(vals), 1e-12);
}

Vector reward_vector(const ResourceSpec& spec, const StateEnumeration& states) {
    Vector r(static_cast<Eigen::Index>(states.size()));
    for (std::size_t s = 0; s < states.size(); ++s) {
        const auto x = states.state(s);
        double v = 0.0;
        for (std::size_t i = 0; i < spec.m; ++i)
            v += spec.price[i] * x[i];
        r[static_cast<Eigen::Index>(s)] = v;
    }
    return r;
}

FeatureMatrix feature_matrix(const ResourceSpec& spec, const StateEnumeration& states) {
    Matrix phi(static_cast<Eigen::Index>(states.size()), static_cast<Eigen::Index>(spec.m + 1));
    for (std::size_t s = 0; s < states.size(); ++s) {
        const auto x = states.state(s);
        const auto r = static_cast<Eigen::Index>(s);
        phi(r, 0) = 1.0;
        for (std::size_t i = 0; i < spec.m; ++i)
            phi(r, static_cast<Eigen::Index>(i + 1)) = x[i];
    }
    return FeatureMatrix(std::move(phi));
}

Mdp build_mdp(const ResourceSpec& spec, const StateEnumeration& states) {
    std::vector<StochasticMatrix> trans;
    ActionSet actions{spec.m, {}};
    for (std::size_t j = 0; j < spec.m; ++j) {
        trans.push_back(build_transition(spec, states, j));
        actions.labels.push_back("c" + std::to_string(j + 1));
    }
    return Mdp(StateSpace{states.size(), {}}, std::move(actions), std::move(trans),
               reward_vector(spec, states), spec.discount, Orientation::maximize);
}

// ---------------------------------------------------------------------------

PolicyKind parse_policy_kind(const std::string& name) {
    if (name == "greedy")
        return PolicyKind::greedy;
    if (name == "fair")
        return PolicyKind::fair;
    if (name == "random")
        return PolicyKind::random;
    if (name == "hybrid")
        return PolicyKind::hybrid;
    if (name == "modulo")
        return PolicyKind::modulo;
    throw ValidationError("unknown target policy '" + name + "'");
}

std::string to_string(PolicyKind kind) {
    switch (kind) {
    case PolicyKind::greedy: return "greedy";
    case PolicyKind::fair: return "fair";
    case PolicyKind::random: return "random";
    case PolicyKind::hybrid: return "hybrid";
    case PolicyKind::modulo: return "modulo";
    }
    return "unknown";
}

double expected_next_revenue(const ResourceSpec& spec, const StateEnumeration& states,
                             std::size_t index, std::size_t action) {
    const auto x = states.state(index);
    double v = 0.0;
    for (std::size_t i = 0; i < spec.m; ++i) {
        v += spec.price[i] * x[i];
        if (x[i] > 0)
            v -= spec.price[i] * spec.release[i];
    }
    if (states.total(index) < spec.capacity)
        v += spec.price[action] * spec.arrival[action];
    return v;
}

Policy target_policy(const ResourceSpec& spec, const StateEnumeration& states, PolicyKind kind,
                     const PolicyOptions& opts) {
    const std::size_t n = states.size();
    const std::size_t m = spec.m;
    switch (kind) {
    case PolicyKind::greedy:
    case PolicyKind::fair: {
        DeterministicPolicy p;
        p.action.resize(n);
        for (std::size_t s = 0; s < n; ++s) {
            std::size_t best = 0;
            double best_score = expected_next_revenue(spec, states, s, 0);
            for (std::size_t j = 1; j < m; ++j) {
                const double score = expected_next_revenue(spec, states, s, j);
                if (kind == PolicyKind::greedy ? score > best_score : score < best_score) {
                    best = j;
                    best_score = score;
                }
            }
            p.action[s] = best;
        }
        return p;
    }
    case PolicyKind::random:
        return StochasticPolicy::uniform(n, m);
    case PolicyKind::hybrid: {
        if (!(opts.hybrid_weight >= 0.0 && opts.hybrid_weight <= 1.0))
            throw ValidationError("hybrid weight must lie in [0,1]");
        const auto slowest = static_cast<Eigen::Index>(
            std::min_element(spec.release.begin(), spec.release.end()) - spec.release.begin());
        StochasticPolicy p = StochasticPolicy::uniform(n, m);
        p.probs *= 1.0 - opts.hybrid_weight;
        p.probs.col(slowest).array() += opts.hybrid_weight;
        return p;
    }
    case PolicyKind::modulo: {
        DeterministicPolicy p;
        p.action.resize(n);
        for (std::size_t s = 0; s < n; ++s)
            p.action[s] = (states.total(s) + opts.modulo_offset) % m;
        return p;
    }
    }
    throw ValidationError("unknown target policy");
}

} // namespace optd::resource
