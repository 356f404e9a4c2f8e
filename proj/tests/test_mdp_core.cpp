#include "optd/mdp_core.hpp"
#include "optd/resource_allocation.hpp"
#include "support.hpp"

#include <doctest.h>

#include <sstream>

using namespace optd;
using testsupport::Rng;

namespace {

Mdp two_action_mdp(const Matrix& a0, const Matrix& a1, const Vector& r, double alpha = 0.9) {
    const auto n = static_cast<std::size_t>(a0.rows());
    return Mdp({n, {}}, {2, {}}, {StochasticMatrix(a0), StochasticMatrix(a1)}, r, alpha,
               Orientation::minimize);
}

} // namespace

TEST_SUITE("mdp_core") {

TEST_CASE("validate_stochastic accepts exact rows and reports deviations") {
    Matrix ok(2, 2);
    ok << 0.5, 0.5, 0.2, 0.8;
    CHECK(validate_stochastic(ok).passed);

    Matrix bad(2, 2);
    bad << 0.5, 0.4, 0.2, 0.8;
    const auto rep = validate_stochastic(bad, 1e-12);
    CHECK_FALSE(rep.passed);
    REQUIRE(rep.bad_rows.size() == 1);
    CHECK(rep.bad_rows[0].row == 0);
    CHECK(rep.bad_rows[0].deviation == doctest::Approx(0.1).epsilon(1e-12));

    Matrix neg(2, 2);
    neg << 1.2, -0.2, 0.0, 1.0;
    const auto rn = validate_stochastic(neg);
    CHECK_FALSE(rn.passed);
    CHECK(rn.negative_entries == 1);
    CHECK(rn.out_of_range_entries == 1);

    CHECK_THROWS_AS(validate_stochastic(Matrix(2, 3)), StructuralError);
    TripletMatrix t{2, {{0, 5, 1.0}}};
    CHECK_THROWS_AS(validate_stochastic(t), StructuralError);
}

TEST_CASE("stochastic matrix construction rejects rows outside tolerance") {
    Matrix bad(2, 2);
    bad << 0.5, 0.4, 0.2, 0.8;
    CHECK_THROWS_AS(StochasticMatrix{bad}, ValidationError);

    Matrix close(2, 2);
    close << 0.5, 0.5 + 1e-11, 0.2, 0.8;
    const StochasticMatrix p(close);
    const auto row = p.row(0);
    CHECK(row.vals[0] + row.vals[1] == doctest::Approx(1.0).epsilon(1e-15));

    TripletMatrix dup{2, {{0, 1, 0.25}, {0, 1, 0.25}, {0, 0, 0.5}, {1, 1, 1.0}, {1, 0, 0.0}}};
    const StochasticMatrix merged(dup);
    CHECK(merged.nonzeros() == 3);
    CHECK(merged.at(0, 1) == doctest::Approx(0.5));
    CHECK(merged.at(1, 0) == 0.0);
}

TEST_CASE("every accepted matrix has rows summing to one") {
    Rng rng(11);
    for (int trial = 0; trial < 200; ++trial) {
        const std::size_t n = 1 + rng.index(12);
        Matrix m = testsupport::random_stochastic(n, rng, 0.5);
        // Perturb within tolerance.
        m(0, 0) += 5e-10 * rng.uniform(-1.0, 1.0);
        if (m(0, 0) < 0.0)
            m(0, 0) = 0.0;
        if (std::abs(m.row(0).sum() - 1.0) > kRowTolerance)
            continue;
        const StochasticMatrix p(m);
        for (std::size_t r = 0; r < n; ++r) {
            double s = 0.0;
            const auto row = p.row(r);
            for (std::size_t k = 0; k < row.count; ++k)
                s += row.vals[k];
            CHECK(std::abs(s - 1.0) <= kRowTolerance);
        }
    }
}

TEST_CASE("apply and apply_transpose match dense products") {
    Rng rng(3);
    const Matrix d = testsupport::random_stochastic(7, rng, 0.4);
    const StochasticMatrix p(d);
    Vector x(7);
    for (int i = 0; i < 7; ++i)
        x[i] = rng.uniform(-1.0, 1.0);
    CHECK((p.apply(x) - d * x).norm() < 1e-14);
    CHECK((p.apply_transpose(x) - d.transpose() * x).norm() < 1e-14);
    CHECK((p.to_dense() - d).norm() < 1e-15);
}

TEST_CASE("transition_under_policy selects rows and mixes actions") {
    Matrix one(1, 1);
    one << 1.0;
    const Mdp single({1, {}}, {1, {}}, {StochasticMatrix(one)}, Vector::Ones(1), 0.9, Orientation::minimize);
    CHECK(transition_under_policy(single, DeterministicPolicy{{0}}).to_dense()(0, 0) == 1.0);

    Rng rng(5);
    const Matrix a0 = testsupport::random_stochastic(2, rng);
    const Matrix a1 = testsupport::random_stochastic(2, rng);
    const Mdp mdp = two_action_mdp(a0, a1, Vector::Zero(2));
    CHECK(transition_under_policy(mdp, DeterministicPolicy{{0, 0}}).to_dense() == a0);

    Matrix expect(2, 2);
    expect.row(0) = a1.row(0);
    expect.row(1) = a0.row(1);
    CHECK((transition_under_policy(mdp, DeterministicPolicy{{1, 0}}).to_dense() - expect).norm() == 0.0);

    StochasticPolicy sp;
    sp.probs.resize(2, 2);
    sp.probs << 0.25, 0.75, 1.0, 0.0;
    Matrix mixed(2, 2);
    mixed.row(0) = 0.25 * a0.row(0) + 0.75 * a1.row(0);
    mixed.row(1) = a0.row(1);
    CHECK((transition_under_policy(mdp, sp).to_dense() - mixed).cwiseAbs().maxCoeff() < 1e-15);

    CHECK_THROWS_AS(transition_under_policy(mdp, DeterministicPolicy{{0, 2}}), StructuralError);
    CHECK_THROWS_AS(transition_under_policy(mdp, DeterministicPolicy{{0}}), StructuralError);
}

TEST_CASE("transition_under_policy matches the resource model for a constant action") {
    resource::ResourceSpec spec{2, 2, {0.8, 0.9}, {0.3, 0.2}, {0.4, 0.5}, 0.9};
    const resource::StateEnumeration states(2, 2);
    const Mdp mdp = resource::build_mdp(spec, states);
    const StochasticMatrix p =
        transition_under_policy(mdp, DeterministicPolicy{std::vector<std::size_t>(states.size(), 0)});
    const std::uint16_t from[] = {1, 1}, to[] = {2, 0};
    CHECK(p.at(states.index_of(from), states.index_of(to)) == doctest::Approx(0.3 * 0.5).epsilon(1e-14));
    CHECK(validate_stochastic(p.to_triplets()).passed);
}

TEST_CASE("infinity_norm_diff examples and properties") {
    Matrix i2 = Matrix::Identity(2, 2);
    Matrix sw(2, 2);
    sw << 0, 1, 1, 0;
    CHECK(infinity_norm_diff(StochasticMatrix(i2), StochasticMatrix(i2)) == 0.0);
    CHECK(infinity_norm_diff(StochasticMatrix(i2), StochasticMatrix(sw)) == 2.0);
    CHECK_THROWS_AS(infinity_norm_diff(StochasticMatrix(i2), StochasticMatrix::identity(3)), StructuralError);

    Rng rng(17);
    for (int trial = 0; trial < 300; ++trial) {
        const std::size_t n = 1 + rng.index(8);
        const Matrix a = testsupport::random_stochastic(n, rng, 0.5);
        const Matrix b = testsupport::random_stochastic(n, rng, 0.5);
        const Matrix c = testsupport::random_stochastic(n, rng, 0.5);
        const StochasticMatrix pa(a), pb(b), pc(c);
        const double ab = infinity_norm_diff(pa, pb);
        CHECK(ab == doctest::Approx(testsupport::dense_inf_norm(a - b)).epsilon(1e-12));
        CHECK(ab == doctest::Approx(infinity_norm_diff(pb, pa)).epsilon(1e-15));
        CHECK(ab <= 2.0 + 1e-12);
        CHECK(infinity_norm_diff(pa, pc) <= ab + infinity_norm_diff(pb, pc) + 1e-12);

        // Scaling the difference: mixing b toward a by weight t scales the gap by (1 - t).
        const double t = rng.uniform(0.01, 0.99);
        const StochasticMatrix mix(Matrix(t * a + (1.0 - t) * b));
        CHECK(infinity_norm_diff(pa, mix) == doctest::Approx((1.0 - t) * ab).epsilon(1e-9));
    }
}

TEST_CASE("is_regular examples") {
    Matrix cyc(2, 2);
    cyc << 0, 1, 1, 0;
    const auto r1 = is_regular(StochasticMatrix(cyc));
    CHECK_FALSE(r1.regular);
    CHECK(r1.irreducible);
    CHECK(r1.period == 2);
    CHECK(r1.diagnosis.find("period 2") != std::string::npos);

    Matrix half = Matrix::Constant(2, 2, 0.5);
    CHECK(is_regular(StochasticMatrix(half)).regular);

    const auto r3 = is_regular(StochasticMatrix::identity(3));
    CHECK_FALSE(r3.irreducible);
    CHECK(r3.diagnosis.find("not irreducible") != std::string::npos);
}

TEST_CASE("is_regular agrees with boolean matrix powering up to six states") {
    Rng rng(23);
    int regular = 0, irregular = 0;
    for (int trial = 0; trial < 2000; ++trial) {
        const std::size_t n = 1 + rng.index(6);
        const double sparsity = rng.uniform(0.3, 0.85);
        const Matrix m = testsupport::random_stochastic(n, rng, sparsity);
        const bool oracle = testsupport::brute_force_regular(m);
        const auto rep = is_regular(StochasticMatrix(m));
        CHECK(rep.regular == oracle);
        CHECK(rep.irreducible == testsupport::brute_force_irreducible(m));
        (oracle ? regular : irregular)++;
    }
    CHECK(regular > 100);
    CHECK(irregular > 100);
}

TEST_CASE("resource chain under constant action agrees with the reachability oracle") {
    // With no arrivals to chain 2, states holding class-2 customers cannot be
    // reached from the empty state, so the constant-action chain is reducible.
    Rng rng(31);
    for (int trial = 0; trial < 50; ++trial) {
        const double l1 = rng.uniform(0.01, 0.5), m1 = rng.uniform(0.01, 0.49), m2 = rng.uniform(0.01, 0.99);
        resource::ResourceSpec spec{2, 2, {0.8, 0.9}, {l1, 0.2}, {m1, m2}, 0.9};
        const resource::StateEnumeration states(2, 2);
        const StochasticMatrix p = resource::build_transition(spec, states, 0);
        const Matrix d = p.to_dense();
        CHECK(is_regular(p).regular == testsupport::brute_force_regular(d));
        CHECK(is_regular(p).irreducible == testsupport::brute_force_irreducible(d));
    }
}

TEST_CASE("triplet and vector text round trip") {
    Rng rng(2);
    const StochasticMatrix p(testsupport::random_stochastic(5, rng, 0.5));
    std::stringstream ss;
    write_triplets(ss, p);
    const StochasticMatrix back(read_triplets(ss));
    CHECK((back.to_dense() - p.to_dense()).cwiseAbs().maxCoeff() == 0.0);

    Vector v(3);
    v << 0.1, -2.5e-17, 1.0 / 3.0;
    std::stringstream vs;
    write_vector(vs, v);
    CHECK(read_vector(vs) == v);
    CHECK(format_double(0.1) == "0.10000000000000001");

    std::stringstream broken("3 2\n0 0 1\n");
    CHECK_THROWS_AS(read_triplets(broken), StructuralError);
}

TEST_CASE("mdp validation") {
    const Matrix i2 = Matrix::Identity(2, 2);
    CHECK_THROWS_AS(Mdp({2, {}}, {1, {}}, {StochasticMatrix(i2)}, Vector::Zero(3), 0.9, Orientation::maximize),
                    StructuralError);
    CHECK_THROWS_AS(Mdp({2, {}}, {1, {}}, {StochasticMatrix(i2)}, Vector::Zero(2), 1.0, Orientation::maximize),
                    ValidationError);
    CHECK_THROWS_AS(Mdp({2, {}}, {2, {}}, {StochasticMatrix(i2)}, Vector::Zero(2), 0.5, Orientation::maximize),
                    StructuralError);
    CHECK_THROWS_AS(ProbabilityDistribution(Vector::Constant(2, 0.4)), ValidationError);
    CHECK(ProbabilityDistribution::uniform(4).strictly_positive());
}

}
