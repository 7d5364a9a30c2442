#include <gtest/gtest.h>

#include <cmath>

#include "deltavar/oracle.hpp"
#include "test_support.hpp"

using namespace deltavar;

namespace {

ErrorCode error_of(auto&& f) {
    try {
        f();
    } catch (const Error& e) {
        return e.code();
    }
    ADD_FAILURE() << "no error";
    return ErrorCode::InvalidArgument;
}

}  // namespace

TEST(FdGradient, ProductAtHalf) {
    const auto spec = dvtest::fixture("product_3pt").build();
    const Trajectory tr(spec.scale_ptr(), {0.0, 0.5, 1.0});
    // d/dw [(w^2 + (1 - w)^2)(1 - w)] = -6w^2 + 8w - 3 at w = 1/2
    EXPECT_NEAR(oracle::fd_gradient(spec, tr, 1e-6)[0], -0.5, 1e-8);
}

TEST(FdGradient, ConstantFunctionalHasZeroGradient) {
    auto ts = std::make_shared<const TimeScale>(TimeScale::uniform(0, 1, 0.25));
    const ProblemSpec spec(ts, CompositeFunctional::parse("u1", {"t"}), {Endpoint::free_end(), Endpoint::free_end()});
    const Trajectory tr(ts, {1, -2, 3, 0.5, 7});
    for (double g : oracle::fd_gradient(spec, tr, 1e-6)) EXPECT_EQ(g, 0.0);
    EXPECT_THROW(oracle::fd_gradient(spec, tr, 0.0), Error);
}

TEST(Oracle, SingularOuterMapIsDomainError) {
    // F2 = (1 - w)/2 vanishes at w = 1.
    const auto iso = dvtest::fixture("iso_3pt").build();
    const Trajectory tr(iso.scale_ptr(), {0.0, 1.0, 1.0});
    EXPECT_EQ(error_of([&] { oracle::functional_value(iso.functional(), iso.scale(), tr.x()); }), ErrorCode::DomainError);
    EXPECT_EQ(error_of([&] { oracle::fd_gradient(iso, tr, 1e-6); }), ErrorCode::DomainError);
}

class FdStepRobustness : public ::testing::TestWithParam<int> {};

TEST_P(FdStepRobustness, StableAcrossSteps) {
    dvtest::Rng rng(static_cast<std::uint64_t>(GetParam()) + 500);
    const auto spec = dvtest::random_spec(rng, 3, 10);
    const auto tr = dvtest::random_trajectory(rng, spec);
    const auto exact = functional_gradient(spec, tr);
    const double scale = 1.0 + max_abs(exact);
    for (double step : {1e-5, 1e-6, 1e-7}) {
        const auto fd = oracle::fd_gradient(spec, tr, step);
        for (std::size_t k = 0; k < fd.size(); ++k) EXPECT_NEAR(fd[k], exact[k], 1e-6 * scale) << "step " << step;
    }
}

INSTANTIATE_TEST_SUITE_P(Random, FdStepRobustness, ::testing::Range(0, 50));

TEST(Scan, ProductOnThreePointsHasNoRoots) {
    const auto rep = oracle::scan_low_dim(dvtest::fixture("product_3pt").build(), {{-10, 10}}, 2001);
    EXPECT_TRUE(rep.no_roots());
    EXPECT_TRUE(rep.brackets.empty());
    ASSERT_EQ(rep.values.size(), 2001u);
    // -6w^2 + 8w - 3 < 0 everywhere
    for (const auto& s : rep.signs) EXPECT_EQ(s, "-");
}

TEST(Scan, QuotientTwoRoots) {
    const auto rep = oracle::scan_low_dim(dvtest::fixture("quotient2_3pt").build(), {{-10, 10}}, 401);
    ASSERT_EQ(rep.roots.size(), 2u);
    const double s2 = std::sqrt(2.0);
    EXPECT_NEAR(rep.roots[0][0], (2 - s2) / 2, 1e-10);
    EXPECT_NEAR(rep.roots[1][0], (2 + s2) / 2, 1e-10);
    for (std::size_t k = 0; k < rep.roots.size(); ++k) {
        EXPECT_LE(rep.brackets[k].lo[0], rep.roots[k][0]);
        EXPECT_GE(rep.brackets[k].hi[0], rep.roots[k][0]);
    }
}

TEST(Scan, IsoperimetricAlongConstraint) {
    const auto rep = oracle::scan_low_dim(dvtest::fixture("iso_3pt").build(), {{-10, 10}}, 400);
    EXPECT_TRUE(rep.constrained);
    ASSERT_EQ(rep.roots.size(), 1u);
    EXPECT_NEAR(rep.roots[0][0], -1.0, 1e-12);
}

TEST(Scan, TwoDimensional) {
    // value = x1^2 - 2 x1 + x2^2 + 4 x2 through y = x^sigma: root at (1, -2).
    auto ts = std::make_shared<const TimeScale>(TimeScale::from_points({0.0, 1.0, 2.0, 3.0}));
    const ProblemSpec spec(ts, CompositeFunctional::parse("u1", {"(1 - t) * (y^2 - 2*y) + t * (2 - t) * (y^2 + 4*y)"}),
                           {Endpoint::fixed_at(0), Endpoint::fixed_at(0)});
    const auto rep = oracle::scan_low_dim(spec, {{-5, 5}, {-5, 5}}, 41);
    ASSERT_EQ(rep.roots.size(), 1u);
    EXPECT_NEAR(rep.roots[0][0], 1.0, 1e-10);
    EXPECT_NEAR(rep.roots[0][1], -2.0, 1e-10);
}

TEST(Scan, RejectsLargeProblems) {
    EXPECT_EQ(error_of([] { oracle::scan_low_dim(dvtest::fixture("sturm_liouville").build(0.1), {}, 10); }),
              ErrorCode::TooManyDecisionVariables);
    EXPECT_THROW(oracle::scan_low_dim(dvtest::fixture("product_3pt").build(), {{1, -1}}, 10), Error);
    EXPECT_THROW(oracle::scan_low_dim(dvtest::fixture("product_3pt").build(), {}, 10), Error);
}

TEST(GeneralizedEig, IdentityPencil) {
    const auto id = [](const Eigen::VectorXd& v) { return v; };
    EXPECT_NEAR(oracle::generalized_eig_smallest(id, id, 6).value, 1.0, 1e-12);
}

TEST(GeneralizedEig, DiagonalPencil) {
    const Eigen::VectorXd a = (Eigen::VectorXd(4) << 5, -1, 3, 8).finished();
    const Eigen::VectorXd b = (Eigen::VectorXd(4) << 1, 2, 3, 4).finished();
    const auto r = oracle::generalized_eig_smallest([&](const Eigen::VectorXd& v) -> Eigen::VectorXd { return a.cwiseProduct(v); },
                                                    [&](const Eigen::VectorXd& v) -> Eigen::VectorXd { return b.cwiseProduct(v); }, 4);
    EXPECT_NEAR(r.value, -0.5, 1e-9);
}

TEST(GeneralizedEig, SingularB) {
    const auto zero = [](const Eigen::VectorXd& v) -> Eigen::VectorXd { return 0.0 * v; };
    const auto id = [](const Eigen::VectorXd& v) { return v; };
    EXPECT_EQ(error_of([&] { oracle::generalized_eig_smallest(id, zero, 3); }), ErrorCode::SingularB);
}

TEST(GeneralizedEig, SturmLiouvilleTrend) {
    // Closed form on a uniform grid with y = x^sigma: Q_h = (2 - 2 cos(pi h)) / h^2.
    double prev_err = 0.0;
    for (double h : {0.02, 0.01}) {
        const auto spec = dvtest::fixture("sturm_liouville").build(h);
        const auto p = oracle::quotient_pencil(spec);
        const auto r = oracle::generalized_eig_smallest(
            [&](const Eigen::VectorXd& v) -> Eigen::VectorXd { return p.A * v; },
            [&](const Eigen::VectorXd& v) -> Eigen::VectorXd { return p.B * v; }, p.A.rows());
        const double expected = (2 - 2 * std::cos(M_PI * h)) / (h * h);
        EXPECT_NEAR(r.value, expected, 1e-9 * expected);
        const double err = std::abs(r.value - M_PI * M_PI);
        EXPECT_LE(err, 0.02 * M_PI * M_PI);
        if (prev_err > 0) EXPECT_LT(err, prev_err);
        prev_err = err;
    }
}

TEST(Pencil, RejectsOtherProblems) {
    EXPECT_THROW(oracle::quotient_pencil(dvtest::fixture("product_3pt").build()), Error);
    EXPECT_THROW(oracle::quotient_pencil(dvtest::fixture("quotient2_3pt").build()), Error);
}
