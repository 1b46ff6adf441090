#include <cmath>
#include <cstring>
#include <random>

#include "doctest.h"

#include "conserve/conservation.hpp"
#include "conserve/error.hpp"
#include "conserve/grad_check.hpp"
#include "conserve/ops.hpp"
#include "test_util.hpp"

using namespace conserve;
using conserve::testing::max_abs_diff;
using conserve::testing::random_tensor;
using conserve::testing::vec;

namespace {

CorrectionCoefficients sum_to_one(Var A) { return {A, CoefficientConstraint::SumToOne}; }
CorrectionCoefficients free_coeffs(Var A) { return {A, CoefficientConstraint::Unconstrained}; }

ConservationLaw quadratic_law(double eps, bool exact = true) {
    ConservationLaw law;
    law.kind = LawKind::Quadratic;
    law.epsilon = eps;
    law.exactness_pass = exact;
    return law;
}

double distance(const Tensor& a, const Tensor& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
    return std::sqrt(s);
}

}  // namespace

TEST_CASE("conserved quantities") {
    CHECK(quantity_linear(vec({1, 2, 3})) == 6.0);
    CHECK(quantity_linear(Tensor(Shape{4})) == 0.0);
    CHECK(quantity_linear(Tensor(Shape{2, 2}, {1, 2, 3, 4})) == 10.0);
    CHECK(quantity_quadratic(vec({3, 4})) == 25.0);
    CHECK(quantity_quadratic(Tensor(Shape{3})) == 0.0);
    ComplexField psi({2});
    psi.re = {1, 0};
    psi.im = {0, 2};
    CHECK(quantity_quadratic(psi.to_grid()) == 5.0);

    ConservationLaw law;
    law.channels = {1};
    CHECK(quantity(law, Tensor(Shape{2, 2}, {1, 2, 3, 4})) == 7.0);
    CHECK_THROWS_AS(law.validate(1), UsageError);
    law.channels = {};
    CHECK_THROWS_AS(law.validate(2), UsageError);
}

TEST_CASE("local correction operator") {
    CHECK(local_correct({1, 2, 3}, 0, 6) == std::vector<double>{1, 2, 3});
    CHECK(local_correct({1, 2, 3}, 2, 9) == std::vector<double>{1, 2, 6});
    CHECK(local_correct({5}, 0, 0) == std::vector<double>{0});
    CHECK_THROWS_AS(local_correct({1, 2}, 2, 0), std::out_of_range);
}

TEST_CASE("linear correction") {
    Tape t;
    Var U = t.constant(vec({1, 2, 3}));

    SUBCASE("uniform coefficients spread the residual") {
        Var out = linear_correct(U, sum_to_one(t.constant(vec({1.0 / 3, 1.0 / 3, 1.0 / 3}))), 9.0);
        CHECK(max_abs_diff(out.value(), vec({2, 3, 4})) < 1e-15);
    }
    SUBCASE("one-hot coefficients reduce to the local operator") {
        Var out = linear_correct(U, sum_to_one(t.constant(vec({1, 0, 0}))), 9.0);
        CHECK(out.value().values() == std::vector<double>{4, 2, 3});
        CHECK(out.value().values() == local_correct({1, 2, 3}, 0, 9));
    }
    SUBCASE("conserving input passes through bitwise") {
        std::mt19937_64 rng(4);
        for (int trial = 0; trial < 50; ++trial) {
            Tensor u = random_tensor(Shape{1, 37}, rng);
            Tensor a = random_tensor(Shape{1, 37}, rng, -3, 3);
            Var out = linear_correct(t.constant(u), sum_to_one(t.constant(a)), quantity_linear(u));
            CHECK(std::memcmp(out.value().values().data(), u.values().data(), u.size() * sizeof(double)) == 0);
        }
    }
    SUBCASE("unconstrained coefficients are rejected") {
        CHECK_THROWS(linear_correct(U, free_coeffs(t.constant(vec({1, 0, 0}))), 9.0));
    }
    SUBCASE("shape mismatch is rejected") {
        CHECK_THROWS_AS(linear_correct(U, sum_to_one(t.constant(vec({1, 0}))), 9.0), ShapeError);
    }
}

TEST_CASE("linear exactness property over random instances") {
    std::mt19937_64 rng(100);
    std::uniform_int_distribution<std::size_t> size_dist(1, 256);
    std::normal_distribution<double> nd;
    for (int trial = 0; trial < 1000; ++trial) {
        const std::size_t n = size_dist(rng);
        Tape t;
        Tensor u = random_tensor(Shape{n}, rng, -10, 10);
        const double m0 = 50.0 * nd(rng);
        Var A = softmax_flat(t.constant(random_tensor(Shape{n}, rng, -4, 4)));
        Var out = linear_correct(t.constant(u), sum_to_one(A), m0);
        const double tol = 1e-10 * std::max({1.0, std::abs(m0), std::abs(quantity_linear(u))});
        CHECK(std::abs(quantity_linear(out.value()) - m0) <= tol);
    }
}

TEST_CASE("global operator equals the convex combination of local operators") {
    std::mt19937_64 rng(12);
    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t n = 1 + static_cast<std::size_t>(trial % 17);
        Tensor u = random_tensor(Shape{n}, rng);
        const double m0 = std::uniform_real_distribution<double>(-5, 5)(rng);
        Tape t;
        Var alpha = softmax_flat(t.constant(random_tensor(Shape{n}, rng, -2, 2)));
        Var global = linear_correct(t.constant(u), sum_to_one(alpha), m0);

        std::vector<double> combo(n, 0.0);
        for (std::size_t i = 0; i < n; ++i) {
            auto local = local_correct(u.values(), i, m0);
            for (std::size_t k = 0; k < n; ++k) combo[k] += alpha.value()[i] * local[k];
        }
        CHECK(max_abs_diff(global.value(), Tensor(Shape{n}, combo)) < 1e-12);
    }
}

TEST_CASE("lambda2 roots") {
    SUBCASE("scaled onto the target leaves roots 0 and -2 S_UA / S_A2") {
        auto r = lambda2_roots(1.0, 4.0, 1.5, 2.0, 4.0);
        REQUIRE(r.size() == 2);
        CHECK(r[0] == doctest::Approx(-1.5));
        CHECK(r[1] == 0.0);
    }
    SUBCASE("negative discriminant has no real root") {
        CHECK(lambda2_roots(1.0, 8.0, 0.0, 1.0, 7.0).empty());
    }
    SUBCASE("every root satisfies the defining quadratic") {
        std::mt19937_64 rng(3);
        std::uniform_real_distribution<double> ud(-3, 3), pos(0.1, 5);
        int checked = 0;
        for (int trial = 0; trial < 2000; ++trial) {
            const double l1 = ud(rng), su2 = pos(rng), sa2 = pos(rng), c0 = pos(rng) * 3;
            const double sua = ud(rng) * std::sqrt(su2 * sa2) / 3.0;
            for (double r : lambda2_roots(l1, su2, sua, sa2, c0)) {
                const double lhs = l1 * l1 * su2 + 2 * l1 * r * sua + r * r * sa2;
                CHECK(std::abs(lhs - c0) <= 1e-9 * std::max(1.0, c0));
                ++checked;
            }
        }
        CHECK(checked > 1000);
    }
    CHECK_THROWS_AS(lambda2_roots(1, 1, 1, 0, 1), DomainError);
}

TEST_CASE("quadratic correction") {
    Tape t;
    SUBCASE("zero coefficients on a conserving input are the identity") {
        Var out = quadratic_correct(t.constant(vec({3, 4})), free_coeffs(t.constant(vec({0, 0}))), 25.0,
                                    quadratic_law(0.0));
        CHECK(max_abs_diff(out.value(), vec({3, 4})) <= 1e-14);
    }
    SUBCASE("orthogonal coefficients leave the input alone") {
        Var out = quadratic_correct(t.constant(vec({3, 4})), free_coeffs(t.constant(vec({4, -3}))), 25.0,
                                    quadratic_law(0.0));
        CHECK(max_abs_diff(out.value(), vec({3, 4})) <= 1e-14);
    }
    SUBCASE("hand-evaluated closed form") {
        // l1 = 2, l2 = -4: [2 * 1 - 4 * 1, 0]
        Var out = quadratic_correct(t.constant(vec({1, 0})), free_coeffs(t.constant(vec({1, 0}))), 4.0,
                                    quadratic_law(0.0));
        CHECK(out.value().values() == std::vector<double>{-2, 0});
        CHECK(quantity_quadratic(out.value()) == 4.0);
    }
    SUBCASE("error paths") {
        CHECK_THROWS_AS(quadratic_correct(t.constant(vec({1, 0})), free_coeffs(t.constant(vec({1, 0}))), -1.0,
                                          quadratic_law(0.0)),
                        DomainError);
        CHECK_THROWS_AS(quadratic_correct(t.constant(vec({0, 0})), free_coeffs(t.constant(vec({1, 0}))), 1.0,
                                          quadratic_law(0.0)),
                        DomainError);
        CHECK_THROWS_AS(quadratic_correct(t.constant(vec({0, 0})), free_coeffs(t.constant(vec({1, 0}))), 1.0,
                                          quadratic_law(1e-12)),
                        DomainError);
    }
    SUBCASE("degenerate input passes through in lenient mode") {
        reset_degenerate_count();
        ConservationLaw law = quadratic_law(1e-12);
        law.strict = false;
        Var out = quadratic_correct(t.constant(vec({0, 0})), free_coeffs(t.constant(vec({1, 0}))), 1.0, law);
        CHECK(out.value().values() == std::vector<double>{0, 0});
        CHECK(degenerate_count() == 1);
    }
    SUBCASE("zero target collapses to zero") {
        Var out = quadratic_correct(t.constant(vec({1, 2})), free_coeffs(t.constant(vec({1, 0}))), 0.0,
                                    quadratic_law(0.0));
        CHECK(quantity_quadratic(out.value()) == 0.0);
    }
}

TEST_CASE("quadratic exactness property over random instances") {
    std::mt19937_64 rng(200);
    std::uniform_int_distribution<std::size_t> size_dist(1, 256);
    std::uniform_real_distribution<double> log_scale(-3, 3);
    int plain = 0, exact = 0;
    for (int trial = 0; trial < 1000; ++trial) {
        const std::size_t n = size_dist(rng);
        Tensor u = random_tensor(Shape{n}, rng, -1, 1);
        Tensor a = random_tensor(Shape{n}, rng, -1, 1);
        if (quantity_quadratic(u) < 1e-6 || quantity_quadratic(a) < 1e-6) continue;
        const double c0 = std::pow(10.0, log_scale(rng));
        Tape t;
        Var out0 = quadratic_correct(t.constant(u), free_coeffs(t.constant(a)), c0, quadratic_law(0.0));
        CHECK(std::abs(quantity_quadratic(out0.value()) - c0) <= 1e-10 * std::max(1.0, c0));
        ++plain;
        Var out1 = quadratic_correct(t.constant(u), free_coeffs(t.constant(a)), c0, quadratic_law(1e-12, true));
        CHECK(std::abs(quantity_quadratic(out1.value()) - c0) <= 1e-12 * std::max(1.0, c0));
        ++exact;
    }
    CHECK(plain > 900);
    CHECK(exact == plain);
}

TEST_CASE("projections") {
    Tape t;
    CHECK(max_abs_diff(project_linear(vec({1, 2, 3}), 9.0), vec({2, 3, 4})) < 1e-15);
    CHECK(project_linear(vec({1, 2, 3}), 6.0) == vec({1, 2, 3}));
    CHECK(project_linear(vec({7}), 2.0) == vec({2}));
    CHECK(project_quadratic(vec({3, 4}), 100.0) == vec({6, 8}));
    CHECK(project_quadratic(vec({3, 4}), 25.0) == vec({3, 4}));
    CHECK(project_quadratic(vec({1, 0}), 9.0) == vec({3, 0}));
    CHECK_THROWS_AS(project_quadratic(vec({0, 0}), 1.0), DomainError);

    SUBCASE("uniform offset equals linear correction with uniform coefficients") {
        std::mt19937_64 rng(8);
        Tensor u = random_tensor(Shape{12}, rng);
        Var a = t.constant(Tensor(Shape{12}, 1.0 / 12.0));
        Var lc = linear_correct(t.constant(u), sum_to_one(a), 3.5);
        CHECK(project_linear(u, 3.5) == lc.value());
    }
}

TEST_CASE("projections are nearest feasible points") {
    // Oracle: random feasible candidates never beat the closed form.
    std::mt19937_64 rng(77);
    std::normal_distribution<double> nd;
    for (int trial = 0; trial < 20; ++trial) {
        const std::size_t n = 1 + static_cast<std::size_t>(trial % 4);
        Tensor u = random_tensor(Shape{n}, rng, -2, 2);
        const double m0 = 3.0 * nd(rng);
        const double c0 = 0.5 + 4.0 * std::abs(nd(rng));
        const Tensor pl = project_linear(u, m0);
        const Tensor pq = project_quadratic(u, c0);
        const double dl = distance(pl, u), dq = distance(pq, u);
        for (int k = 0; k < 10000; ++k) {
            Tensor v = random_tensor(Shape{n}, rng, -4, 4);
            Tensor lin = v;
            const double shift = (m0 - quantity_linear(v)) / static_cast<double>(n);
            for (double& x : lin.values()) x += shift;
            CHECK(distance(lin, u) >= dl - 1e-6);
            Tensor sph = v;
            const double s = std::sqrt(c0 / quantity_quadratic(v));
            for (double& x : sph.values()) x *= s;
            CHECK(distance(sph, u) >= dq - 1e-6);
        }
    }
}

TEST_CASE("penalty term and conservation error") {
    Tape t;
    CHECK(penalty_term(t.constant(vec({1, 2, 3})), LawKind::Linear, 6.0).value().item() == 0.0);
    CHECK(penalty_term(t.constant(vec({1, 2, 3})), LawKind::Linear, 9.0).value().item() == 3.0);
    CHECK(penalty_term(t.constant(vec({3, 4})), LawKind::Quadratic, 16.0).value().item() == 9.0);

    auto e = conservation_error(vec({1, 1}), LawKind::Linear, 3.0);
    CHECK(e.abs == 1.0);
    REQUIRE(e.rel.has_value());
    CHECK(*e.rel == doctest::Approx(1.0 / 3.0));
    CHECK(conservation_error(vec({1, 1}), LawKind::Quadratic, 2.0).abs == 0.0);
    CHECK_FALSE(conservation_error(vec({1, -1}), LawKind::Linear, 0.0).rel.has_value());
}

TEST_CASE("correctors are differentiable") {
    std::mt19937_64 rng(31);
    ParamStore ps;
    ps.add("u", random_tensor(Shape{1, 16}, rng));
    ps.add("z", random_tensor(Shape{1, 16}, rng));
    Tensor gt = random_tensor(Shape{1, 16}, rng);

    SUBCASE("linear") {
        auto f = [&](Tape& t, ParamStore& p) {
            Var A = softmax_flat(t.param(p, "z"));
            Var out = linear_correct(t.param(p, "u"), sum_to_one(A), 2.5);
            return relative_l2_loss(out, gt);
        };
        CHECK(grad_check(f, ps, 1e-6).max_rel_error < 1e-5);
    }
    SUBCASE("quadratic, plain and with the exactness pass") {
        for (double eps : {0.0, 1e-12, 1e-3}) {
            auto f = [&](Tape& t, ParamStore& p) {
                Var out = quadratic_correct(t.param(p, "u"), free_coeffs(t.param(p, "z")), 6.0, quadratic_law(eps));
                return relative_l2_loss(out, gt);
            };
            CAPTURE(eps);
            CHECK(grad_check(f, ps, 1e-6).max_rel_error < 1e-5);
        }
    }
    SUBCASE("projections") {
        auto f = [&](Tape& t, ParamStore& p) {
            Var a = project_linear(t.param(p, "u"), 1.0);
            Var b = project_quadratic(t.param(p, "z"), 3.0);
            return add(relative_l2_loss(a, gt), relative_l2_loss(b, gt));
        };
        CHECK(grad_check(f, ps, 1e-6).max_rel_error < 1e-5);
    }
}
