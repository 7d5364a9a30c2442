#include <gtest/gtest.h>

#include <cmath>
#include <map>

#include "deltavar/expr.hpp"
#include "test_support.hpp"

using namespace deltavar;

namespace {

const VarSet& tyv() { return integrand_vars(); }

ErrorCode parse_error(std::string_view text, const VarSet& vars = integrand_vars()) {
    try {
        Expr::parse(text, vars);
    } catch (const Error& e) {
        return e.code();
    }
    ADD_FAILURE() << "parsed: " << text;
    return ErrorCode::InvalidArgument;
}

double at(const Expr& e, double t, double y, double v) {
    const double args[3] = {t, y, v};
    return e.eval(args);
}

}  // namespace

TEST(Expr, ParsesIntegrandsAndOuterMaps) {
    const auto sq = Expr::parse("v^2", tyv());
    EXPECT_TRUE(sq.structurally_equal(Expr::parse("(v)^2", tyv())));
    EXPECT_EQ(sq.root()->kind, Node::Kind::Power);
    EXPECT_EQ(sq.root()->exponent, 2);
    const auto prod = Expr::parse("u1 * u2", VarSet::numbered("u", 2));
    EXPECT_EQ(prod.root()->kind, Node::Kind::Mul);
}

TEST(Expr, Precedence) {
    const auto e = Expr::parse("-v^2 + 2*t - y/2/2", tyv());
    EXPECT_DOUBLE_EQ(at(e, 1.0, 4.0, 3.0), -9.0 + 2.0 - 1.0);
    // ^ is right associative
    EXPECT_DOUBLE_EQ(at(Expr::parse("v^2^3", tyv()), 0, 0, 2.0), 256.0);
    EXPECT_DOUBLE_EQ(at(Expr::parse("2 - 3 - 4", tyv()), 0, 0, 0), -5.0);
    EXPECT_DOUBLE_EQ(at(Expr::parse("(t + 1.5e1) * .5", tyv()), 1.0, 0, 0), 8.0);
    EXPECT_DOUBLE_EQ(at(Expr::parse("v^-2", tyv()), 0, 0, 2.0), 0.25);
}

TEST(Expr, ParseErrors) {
    EXPECT_EQ(parse_error("v^t"), ErrorCode::NonIntegerExponent);
    EXPECT_EQ(parse_error("v^1.5"), ErrorCode::NonIntegerExponent);
    EXPECT_EQ(parse_error("x + 1"), ErrorCode::UnknownVariable);
    EXPECT_EQ(parse_error("tan(v)"), ErrorCode::UnknownFunction);
    EXPECT_EQ(parse_error("v +"), ErrorCode::SyntaxError);
    EXPECT_EQ(parse_error("(v"), ErrorCode::SyntaxError);
    EXPECT_EQ(parse_error("v v"), ErrorCode::SyntaxError);
    EXPECT_EQ(parse_error(""), ErrorCode::SyntaxError);
    EXPECT_EQ(parse_error("u3", VarSet::numbered("u", 2)), ErrorCode::UnknownVariable);
    try {
        Expr::parse("t + * v", tyv());
        FAIL();
    } catch (const Error& e) {
        ASSERT_TRUE(e.position().has_value());
        EXPECT_EQ(*e.position(), 4u);
    }
}

TEST(Expr, Evaluation) {
    EXPECT_DOUBLE_EQ(at(Expr::parse("t*v", tyv()), 0.5, 0.0, 2.0), 1.0);
    const auto q = Expr::parse("u1/u2", VarSet::numbered("u", 2));
    try {
        q.eval(std::vector<double>{1.0, 0.0});
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::DivisionByZero);
    }
    const VarSet sl{"t", "y", "v", "q"};
    EXPECT_EQ(Expr::parse("v^2 - q*y^2", sl).eval(std::map<std::string, double>{{"y", 1}, {"v", 0}, {"q", 0}}), 0.0);
    auto domain = [&](const char* text, double y) {
        try {
            at(Expr::parse(text, tyv()), 0, y, 0);
        } catch (const Error& e) {
            return e.code();
        }
        return ErrorCode::InvalidArgument;
    };
    EXPECT_EQ(domain("log(y)", 0.0), ErrorCode::DomainError);
    EXPECT_EQ(domain("sqrt(y)", -1.0), ErrorCode::DomainError);
    EXPECT_EQ(domain("y^-1", 0.0), ErrorCode::DivisionByZero);
}

TEST(Expr, DenominatorGuard) {
    const auto q = Expr::parse("u1/u2", VarSet::numbered("u", 2));
    EvalOptions opt{1e-9};
    EXPECT_THROW(q.eval(std::vector<double>{1.0, 1e-10}, opt), Error);
    EXPECT_NO_THROW(q.eval(std::vector<double>{1.0, 1e-8}, opt));
    EXPECT_NO_THROW(q.eval(std::vector<double>{1.0, 1e-10}));
}

TEST(Expr, Derivatives) {
    EXPECT_EQ(Expr::parse("v^2", tyv()).diff("v").to_string(), "2*v");
    EXPECT_TRUE(Expr::parse("t*v", tyv()).diff("y").is_zero());
    EXPECT_EQ(Expr::parse("v + v^2", tyv()).diff("v").to_string(), "1 + 2*v");
    EXPECT_THROW(Expr::parse("v", tyv()).diff("w"), Error);
}

class ExprProperty : public ::testing::TestWithParam<int> {};

TEST_P(ExprProperty, DerivativeMatchesFiniteDifferences) {
    dvtest::Rng rng(static_cast<std::uint64_t>(GetParam()) * 7919 + 1);
    const auto e = Expr::parse(dvtest::random_expr(rng, 4), tyv());
    for (int trial = 0; trial < 5; ++trial) {
        double p[3] = {dvtest::uniform(rng, -1, 1), dvtest::uniform(rng, -1, 1), dvtest::uniform(rng, -1, 1)};
        for (std::size_t var = 0; var < 3; ++var) {
            const double sym = e.diff(var).eval(p);
            constexpr double h = 1e-6;
            double pp[3] = {p[0], p[1], p[2]}, pm[3] = {p[0], p[1], p[2]};
            pp[var] += h;
            pm[var] -= h;
            const double fd = (e.eval(pp) - e.eval(pm)) / (2 * h);
            EXPECT_NEAR(sym, fd, 1e-6 * (1.0 + std::abs(sym))) << e.to_string() << " d/" << tyv().name(var);
        }
    }
}

TEST_P(ExprProperty, PrintParseRoundTrip) {
    dvtest::Rng rng(static_cast<std::uint64_t>(GetParam()) * 104729 + 3);
    const auto e = Expr::parse(dvtest::random_expr(rng, 4), tyv());
    const auto again = Expr::parse(e.to_string(), tyv());
    EXPECT_TRUE(again.structurally_equal(e)) << e.to_string() << " vs " << again.to_string();
    EXPECT_EQ(again.to_string(), e.to_string());
}

TEST_P(ExprProperty, DerivativeLinearity) {
    dvtest::Rng rng(static_cast<std::uint64_t>(GetParam()) * 31337 + 5);
    const auto f = dvtest::random_expr(rng, 3);
    const auto g = dvtest::random_expr(rng, 3);
    const double a = dvtest::uniform(rng, 0.5, 3.0), b = dvtest::uniform(rng, 0.5, 3.0);
    const std::string sa = dvtest::num(a), sb = dvtest::num(b);
    const auto whole = Expr::parse(sa + " * (" + f + ") + " + sb + " * (" + g + ")", tyv()).diff("v");
    const auto df = Expr::parse(f, tyv()).diff("v");
    const auto dg = Expr::parse(g, tyv()).diff("v");
    // Rebuild a*df + b*dg through the same folding rules.
    const auto parts = Expr::parse(sa + " * (" + df.to_string() + ") + " + sb + " * (" + dg.to_string() + ")", tyv());
    const auto folded = Expr::parse(parts.to_string(), tyv());
    EXPECT_TRUE(whole.structurally_equal(folded)) << whole.to_string() << " vs " << folded.to_string();
    const double p[3] = {0.3, -0.7, 0.45};
    EXPECT_NEAR(whole.eval(p), a * df.eval(p) + b * dg.eval(p), 1e-12 * (1 + std::abs(whole.eval(p))));
}

INSTANTIATE_TEST_SUITE_P(Random, ExprProperty, ::testing::Range(0, 100));
