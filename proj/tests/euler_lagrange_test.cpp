#include <gtest/gtest.h>

#include <cmath>

#include "deltavar/euler_lagrange.hpp"
#include "deltavar/oracle.hpp"
#include "test_support.hpp"

using namespace deltavar;

namespace {

std::shared_ptr<const TimeScale> three_points() {
    return std::make_shared<const TimeScale>(TimeScale::from_points({0.0, 0.5, 1.0}));
}

ProblemSpec spec_of(std::shared_ptr<const TimeScale> ts, std::string_view outer, std::vector<std::string> inner,
                    BoundarySpec bc) {
    return ProblemSpec(std::move(ts), CompositeFunctional::parse(outer, inner), bc);
}

BoundarySpec fixed(double a, double b) { return {Endpoint::fixed_at(a), Endpoint::fixed_at(b)}; }
BoundarySpec both_free() { return {Endpoint::free_end(), Endpoint::free_end()}; }

}  // namespace

TEST(EulerLagrange, QuotientExampleOneIsStationary) {
    auto ts = std::make_shared<const TimeScale>(TimeScale::from_points({0.0, 1.0, 2.0}));
    const auto spec = spec_of(ts, "u1 / u2", {"v^2", "v + v^2"}, fixed(0, 4));
    const Trajectory tr(ts, {0.0, 2.0, 4.0});
    for (double r : el_residual(spec, tr)) EXPECT_EQ(r, 0.0);
    EXPECT_LE(residual_report(spec, tr).dr_constancy_spread, 1e-10);
}

TEST(EulerLagrange, LinearIsStationaryForSquare) {
    dvtest::Rng rng(5);
    auto ts = std::make_shared<const TimeScale>(dvtest::random_scale(rng, 5, 12));
    const auto spec = spec_of(ts, "u1", {"v^2"}, both_free());
    std::vector<double> x;
    for (double t : ts->points()) x.push_back(0.5 - 2.0 * t);
    for (double r : el_residual(spec, Trajectory(ts, x))) EXPECT_NEAR(r, 0.0, 1e-12);
}

TEST(EulerLagrange, ProductOnThreePoints) {
    const auto ts = three_points();
    const auto spec = spec_of(ts, "u1 * u2", {"v^2", "t * v"}, fixed(0, 1));
    for (double w : {-2.0, 0.0, 0.5, 0.75, 3.0}) {
        const Trajectory tr(ts, {0.0, w, 1.0});
        const auto el = el_residual(spec, tr);
        ASSERT_EQ(el.size(), 1u);
        const auto Q = inner_values(spec.functional(), tr);
        const double xdd = (2 * (1 - w) - 2 * w) / 0.5;
        EXPECT_NEAR(el[0], 2 * xdd * Q[1] + Q[0], 1e-13);
        // value = (w^2 + (1 - w)^2)(1 - w)
        const auto g = functional_gradient(spec, tr);
        ASSERT_EQ(g.size(), 1u);
        EXPECT_NEAR(g[0], -6 * w * w + 8 * w - 3, 1e-12 * (1 + std::abs(g[0])));
        EXPECT_NEAR(g[0], oracle::fd_gradient(spec, tr, 1e-6)[0], 1e-6 * (1 + std::abs(g[0])));
    }
}

TEST(EulerLagrange, NaturalBoundaryExamples) {
    dvtest::Rng rng(11);
    auto ts = std::make_shared<const TimeScale>(dvtest::random_scale(rng, 4, 10));
    const auto x = dvtest::random_samples(rng, ts->size());
    const Trajectory tr(ts, x);
    {
        const auto spec = spec_of(ts, "u1", {"v^2 - y"}, both_free());
        EXPECT_NEAR(natural_bc_left(spec, tr), 2 * tr.x_delta().front(), 1e-12);
    }
    {
        const auto spec = spec_of(ts, "u1", {"v^2"}, both_free());
        EXPECT_NEAR(natural_bc_right(spec, tr), 2 * tr.x_delta().back(), 1e-12);
    }
    {
        // f independent of y: natural_bc_right is just H' f_v at rho(b).
        const auto spec = spec_of(ts, "u1 * u2", {"t * v", "v^3"}, both_free());
        const auto Q = inner_values(spec.functional(), tr);
        const std::size_t r = ts->rho(ts->last());
        const double v = tr.x_delta()[r];
        EXPECT_NEAR(natural_bc_right(spec, tr), Q[1] * (*ts)[r] + Q[0] * 3 * v * v, 1e-10 * (1 + std::abs(Q[0])));
    }
    {
        // F1 = x(b) - x(a) = 0 kills H'_2, so f2 drops out.
        std::vector<double> y = x;
        y.back() = y.front();
        const Trajectory closed(ts, y);
        const auto a = spec_of(ts, "u1 * u2", {"v", "v^2 + t"}, both_free());
        const auto b = spec_of(ts, "u1 * u2", {"v", "v^2 + 5 * v^3 + t"}, both_free());
        EXPECT_NEAR(inner_values(a.functional(), closed)[0], 0.0, 1e-12);
        EXPECT_NEAR(natural_bc_left(a, closed), inner_values(a.functional(), closed)[1], 1e-10);
        EXPECT_NEAR(natural_bc_left(b, closed), inner_values(b.functional(), closed)[1], 1e-10);
    }
    {
        const auto spec = spec_of(ts, "u1", {"v^2"}, fixed(0, 1));
        auto fixed_tr = x;
        fixed_tr.front() = 0;
        fixed_tr.back() = 1;
        EXPECT_THROW(natural_bc_left(spec, Trajectory(ts, fixed_tr)), Error);
        EXPECT_THROW(natural_bc_right(spec, Trajectory(ts, fixed_tr)), Error);
    }
}

TEST(EulerLagrange, BoundaryMismatchRejected) {
    const auto ts = three_points();
    const auto spec = spec_of(ts, "u1", {"v^2"}, fixed(0, 1));
    EXPECT_THROW(el_residual(spec, Trajectory(ts, {0.5, 0.0, 1.0})), Error);
    auto other = std::make_shared<const TimeScale>(TimeScale::from_points({0.0, 0.25, 1.0}));
    EXPECT_THROW(el_residual(spec, Trajectory(other, {0.0, 0.0, 1.0})), Error);
}

TEST(EulerLagrange, DuboisReymondExamples) {
    dvtest::Rng rng(3);
    auto ts = std::make_shared<const TimeScale>(dvtest::random_scale(rng, 6, 12));
    std::vector<double> lin;
    for (double t : ts->points()) lin.push_back(1.0 + 3.0 * t);
    // f_y = 0 and f_v depends on v alone, so E is constant along a line.
    const auto spec = spec_of(ts, "u1 * u2", {"v^2 + t", "v^3 + 1"}, both_free());
    const auto e = dubois_reymond_quantity(spec, Trajectory(ts, lin));
    EXPECT_LE(spread(e), 1e-12 * (1 + max_abs(e)));
    const auto noisy = dubois_reymond_quantity(spec, Trajectory(ts, dvtest::random_samples(rng, ts->size())));
    EXPECT_GT(spread(noisy), 1e-3);
}

TEST(EulerLagrange, IsoperimetricExampleOnGrid) {
    auto ts = std::make_shared<const TimeScale>(TimeScale::interval(0, 1, 1e-3));
    const ProblemSpec spec(ts, CompositeFunctional::parse("u1 / u2", {"v^2", "t * v"}), fixed(0, 1),
                           Constraint{CompositeFunctional::parse("u1", {"t * v"}), 1.0});
    std::vector<double> x;
    for (double t : ts->points()) x.push_back(3 * t * t - 2 * t);
    const Trajectory tr(ts, x);
    const auto r = isoperimetric_residual(spec, tr, 1.0, 8.0);
    // Constant along the grid: 2 x^DD / F2 - F1 / F2^2 - lambda with x^DD = 6.
    const double F1 = oracle::integrate(spec.functional().inner(0), *ts, x);
    const double F2 = oracle::integrate(spec.functional().inner(1), *ts, x);
    const double expected = 12.0 / F2 - F1 / (F2 * F2) - 8.0;
    for (double v : r) EXPECT_NEAR(v, expected, 1e-8);
    EXPECT_LE(std::abs(expected), 0.02);
}

TEST(EulerLagrange, IsoperimetricCombinations) {
    dvtest::Rng rng(21);
    auto ts = std::make_shared<const TimeScale>(dvtest::random_scale(rng, 4, 12));
    const ProblemSpec spec(ts, CompositeFunctional::parse("u1 * u2", {"v^2 + y", "t * v + 1"}), fixed(0, 1),
                           Constraint{CompositeFunctional::parse("u1^2", {"y * v"}), 0.5});
    auto x = dvtest::random_samples(rng, ts->size());
    x.front() = 0;
    x.back() = 1;
    const Trajectory tr(ts, x);
    const auto el = el_residual(spec.functional(), tr);
    const auto ek = el_residual(spec.constraint()->functional, tr);
    const double lambda = 1.7;
    const auto r = isoperimetric_residual(spec, tr, 1.0, lambda);
    const auto r0 = isoperimetric_residual(spec, tr, 1.0, 0.0);
    const auto ra = isoperimetric_residual(spec, tr, 0.0, lambda);
    for (std::size_t i = 0; i < r.size(); ++i) {
        EXPECT_EQ(r[i], el[i] - lambda * ek[i]);
        EXPECT_EQ(r0[i], el[i]);
        EXPECT_EQ(ra[i], -lambda * ek[i]);
    }
    try {
        isoperimetric_residual(spec, tr, 0.0, 0.0);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::BothMultipliersZero);
    }
}

TEST(EulerLagrange, ConstraintNeedsFixedEnds) {
    EXPECT_THROW(ProblemSpec(three_points(), CompositeFunctional::parse("u1", {"v^2"}),
                             {Endpoint::free_end(), Endpoint::fixed_at(1)},
                             Constraint{CompositeFunctional::parse("u1", {"v"}), 1.0}),
                 Error);
}

TEST(EulerLagrange, FitMultiplierRecoversLambda) {
    auto ts = std::make_shared<const TimeScale>(TimeScale::interval(0, 1, 1e-2));
    const ProblemSpec spec(ts, CompositeFunctional::parse("u1 / u2", {"v^2", "t * v"}), fixed(0, 1),
                           Constraint{CompositeFunctional::parse("u1", {"t * v"}), 1.0});
    std::vector<double> x;
    for (double t : ts->points()) x.push_back(3 * t * t - 2 * t);
    const Trajectory tr(ts, x);
    const double lambda = fit_multiplier(spec, tr);
    EXPECT_NEAR(lambda, 8.0, 0.2);
    const auto rep = residual_report(spec, tr, 1.0, lambda);
    EXPECT_LE(rep.el_max, 1e-9);
    EXPECT_EQ(rep.el.size(), ts->size() - 2);
    ASSERT_TRUE(rep.constraint_violation.has_value());
}

class GradientIdentity : public ::testing::TestWithParam<int> {};

TEST_P(GradientIdentity, GradientMatchesResidualsAndFiniteDifferences) {
    dvtest::Rng rng(static_cast<std::uint64_t>(GetParam()) * 977 + 13);
    const auto spec = dvtest::random_spec(rng);
    const auto tr = dvtest::random_trajectory(rng, spec);
    const auto& ts = spec.scale();
    const auto g = functional_gradient(spec, tr);
    const auto el = el_residual(spec, tr);
    const double gscale = 1.0 + max_abs(g);
    for (std::size_t j = spec.decision_begin(); j < spec.decision_end(); ++j) {
        const double gj = g[j - spec.decision_begin()];
        double expected;
        if (j == 0) {
            expected = -natural_bc_left(spec, tr);
        } else if (j == ts.last()) {
            expected = natural_bc_right(spec, tr);
        } else {
            expected = -ts.mu(j - 1) * el[j - 1];
        }
        EXPECT_NEAR(gj, expected, 1e-10 * std::max(std::abs(gj), 1e-3 * gscale)) << "index " << j;
    }
    const auto fd = oracle::fd_gradient(spec, tr, 1e-6);
    for (std::size_t k = 0; k < g.size(); ++k) EXPECT_NEAR(g[k], fd[k], 1e-6 * gscale);
}

INSTANTIATE_TEST_SUITE_P(Random, GradientIdentity, ::testing::Range(0, 40));
