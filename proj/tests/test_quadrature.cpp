#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "mismatch_lasso/quadrature.hpp"

using namespace mismatch_lasso;

namespace {

// Composite Simpson rule on [-40, 40]; slow but independent of the Gauss rules.
template <class F>
double simpson_normal(F f, int panels = 400000) {
    const double a = -40.0, b = 40.0, h = (b - a) / panels;
    auto phi = [](double x) { return std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi); };
    double acc = f(a) * phi(a) + f(b) * phi(b);
    for (int i = 1; i < panels; ++i) {
        const double x = a + i * h;
        acc += (i % 2 ? 4.0 : 2.0) * f(x) * phi(x);
    }
    return acc * h / 3.0;
}

}  // namespace

TEST(Quadrature, HermiteRuleIntegratesPolynomialMoments) {
    const auto& rule = standard_hermite_rule();
    EXPECT_NEAR(rule.expectation([](double) { return 1.0; }), 1.0, 1e-13);
    EXPECT_NEAR(rule.expectation([](double x) { return x * x; }), 1.0, 1e-12);
    EXPECT_NEAR(rule.expectation([](double x) { return std::pow(x, 4); }), 3.0, 1e-11);
    EXPECT_NEAR(rule.expectation([](double x) { return std::pow(x, 6); }), 15.0, 1e-10);
    EXPECT_EQ(rule.expectation([](double x) { return x; }), 0.0);
    EXPECT_EQ(rule.expectation([](double x) { return x * x * x; }), 0.0);
}

TEST(Quadrature, SmallHermiteRuleMatchesKnownNodes) {
    // Probabilists' H_3 = x^3 - 3x has roots 0, +-sqrt(3) with weights 2/3, 1/6.
    const auto rule = gauss_hermite_rule(3);
    ASSERT_EQ(rule.nodes.size(), 2u);
    EXPECT_NEAR(rule.nodes[0], std::sqrt(3.0), 1e-14);
    EXPECT_NEAR(rule.weights[0], 1.0 / 6.0, 1e-14);
    EXPECT_EQ(rule.nodes[1], 0.0);
    EXPECT_NEAR(2.0 * rule.weights[1], 2.0 / 3.0, 1e-14);  // the origin is counted twice
    EXPECT_NEAR(rule.expectation([](double x) { return std::pow(x, 4); }), 3.0, 1e-13);
}

TEST(Quadrature, AbsoluteMomentWithKink) {
    const double v = normal_expectation([](double x) { return std::abs(x); }, {0.0});
    EXPECT_NEAR(v, std::sqrt(2.0 / std::numbers::pi), 1e-12);
}

TEST(Quadrature, TailSecondMomentMatchesErfcClosedForm) {
    for (double tau : {0.0, 0.3, 1.0, 2.5, 5.0}) {
        const double q = normal_expectation(
            [tau](double x) {
                const double e = std::abs(x) - tau;
                return e > 0.0 ? e * e : 0.0;
            },
            {tau});
        const double closed = (1.0 + tau * tau) * std::erfc(tau / std::sqrt(2.0)) -
                              tau * std::sqrt(2.0 / std::numbers::pi) * std::exp(-0.5 * tau * tau);
        EXPECT_NEAR(q, closed, 1e-10) << "tau=" << tau;
    }
}

TEST(Quadrature, SmoothNonlinearityAgreesWithSimpson) {
    auto f = [](double x) { return std::tanh(x) * x; };
    EXPECT_NEAR(normal_expectation(f), simpson_normal(f), 1e-9);
}

TEST(Quadrature, ClippedIdentityAgreesWithSimpson) {
    const double delta = 0.7;
    auto f = [delta](double x) { return std::clamp(x, -delta, delta) * x; };
    EXPECT_NEAR(normal_expectation(f, {delta}), simpson_normal(f), 1e-9);
}

TEST(Quadrature, OddIntegrandsVanishExactly) {
    EXPECT_EQ(normal_expectation([](double x) { return std::abs(x) * x; }, {0.0}), 0.0);
    EXPECT_EQ(normal_expectation([](double x) { return std::sin(x); }), 0.0);
}
