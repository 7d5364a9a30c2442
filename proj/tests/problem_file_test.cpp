#include <gtest/gtest.h>

#include <string>

#include "deltavar/problem_file.hpp"
#include "test_support.hpp"

using namespace deltavar;

namespace {

const char* kQuotient = R"(# comment line
[timescale]
kind = points
points = 0, 1, 2   # trailing comment

[functional]
H = "u1 / u2"
f1 = "v^2"
f2 = "v + v^2"

[boundary]
left = fixed 0
right = fixed 4
)";

/// Line number reported for `text`, or 0 when it parses.
std::size_t error_line(const std::string& text) {
    try {
        ProblemFile::parse(text, "t.dvp");
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::ProblemFileError);
        EXPECT_NE(std::string(e.what()).find("t.dvp:"), std::string::npos) << e.what();
        return e.position().value_or(0);
    }
    return 0;
}

std::string replace(std::string text, const std::string& from, const std::string& to) {
    const auto pos = text.find(from);
    EXPECT_NE(pos, std::string::npos) << from;
    return text.replace(pos, from.size(), to);
}

}  // namespace

TEST(ProblemFile, ParsesQuotientExample) {
    const auto pf = ProblemFile::parse(kQuotient);
    EXPECT_EQ(pf.timescale.kind, "points");
    EXPECT_EQ(pf.timescale.points, (std::vector<double>{0, 1, 2}));
    EXPECT_EQ(pf.outer, "u1 / u2");
    EXPECT_EQ(pf.inner, (std::vector<std::string>{"v^2", "v + v^2"}));
    EXPECT_EQ(*pf.boundary.left.fixed, 0.0);
    EXPECT_EQ(*pf.boundary.right.fixed, 4.0);
    EXPECT_FALSE(pf.constraint_outer.has_value());
    const auto spec = pf.build();
    EXPECT_EQ(spec.scale().size(), 3u);
    EXPECT_EQ(spec.functional().arity(), 2u);
}

TEST(ProblemFile, AllBundledFixturesParse) {
    std::size_t count = 0;
    for (const auto& [name, text] : bundled::fixtures) {
        SCOPED_TRACE(std::string(name));
        const auto pf = ProblemFile::parse(text, std::string(name));
        EXPECT_NO_THROW(pf.build());
        ++count;
    }
    EXPECT_EQ(count, 8u);
    EXPECT_EQ(dvtest::fixture("sturm_liouville").build().scale().size(), 1001u);
    EXPECT_EQ(dvtest::fixture("iso_R").build(0.01).scale().size(), 101u);
    EXPECT_TRUE(dvtest::fixture("iso_3pt").build().constraint().has_value());
}

TEST(ProblemFile, OtherTimeScaleKinds) {
    auto with_scale = [](const std::string& ts) {
        return replace(kQuotient, "kind = points\npoints = 0, 1, 2   # trailing comment\n", ts);
    };
    EXPECT_EQ(ProblemFile::parse(with_scale("kind = uniform\na = 0\nb = 2\nh = 0.5\n")).build().scale().size(), 5u);
    EXPECT_EQ(ProblemFile::parse(with_scale("kind = qscale\nq = 2\nk_min = 0\nk_max = 3\n")).build().scale().b(), 8.0);
    const auto u = ProblemFile::parse(
        with_scale("kind = union\npart = uniform 0 1 0.5\npart = points 1, 3, 4\npart = qscale 2 3 5\n"));
    EXPECT_EQ(u.build().scale().size(), 8u);
    EXPECT_THROW(u.build(0.1), Error);
}

TEST(ProblemFile, FreeEndsAndConstraint) {
    auto text = replace(kQuotient, "left = fixed 0", "left = free");
    EXPECT_TRUE(ProblemFile::parse(text).boundary.left.is_free());
    const auto iso = std::string(kQuotient) + "\n[constraint]\nP = \"u1 * u2\"\ng1 = \"t * v\"\ng2 = \"y\"\nk = 2.5\n";
    const auto pf = ProblemFile::parse(iso);
    EXPECT_EQ(*pf.constraint_outer, "u1 * u2");
    EXPECT_EQ(pf.constraint_inner.size(), 2u);
    EXPECT_EQ(pf.constraint_level, 2.5);
}

TEST(ProblemFile, ErrorsCarryLineNumbers) {
    const std::string base = kQuotient;
    EXPECT_EQ(error_line(replace(base, "f2 = \"v + v^2\"", "f2 = \"v + x\"")), 9u);
    EXPECT_EQ(error_line(replace(base, "H = \"u1 / u2\"", "H = \"u1 / u3\"")), 7u);
    EXPECT_EQ(error_line(replace(base, "H = \"u1 / u2\"", "H = \"u1 / u2")), 7u);
    EXPECT_EQ(error_line(replace(base, "H = \"u1 / u2\"", "H = \"u1\"")), 9u);
    EXPECT_EQ(error_line(replace(base, "left = fixed 0", "left = pinned 0")), 12u);
    EXPECT_EQ(error_line(replace(base, "left = fixed 0", "left = fixed zero")), 12u);
    EXPECT_EQ(error_line(replace(base, "[boundary]", "[bounds]")), 11u);
    EXPECT_EQ(error_line(replace(base, "f1 = \"v^2\"", "f1 = \"v^2\"\nf1 = \"v\"")), 9u);
    EXPECT_EQ(error_line(replace(base, "f1 = \"v^2\"", "f1 = \"v^2\"\nextra = 1")), 9u);
    EXPECT_EQ(error_line(replace(base, "points = 0, 1, 2", "points = 0, 1")), 3u);
    EXPECT_EQ(error_line(replace(base, "points = 0, 1, 2", "points = 0, one, 2")), 4u);
    EXPECT_EQ(error_line(replace(base, "kind = points", "kind = lattice")), 3u);
    EXPECT_EQ(error_line(replace(base, "f1 = \"v^2\"", "f1 \"v^2\"")), 8u);
    EXPECT_EQ(error_line("kind = points\n"), 1u);
    EXPECT_THROW(ProblemFile::parse(base + "\n[constraint]\nP = \"u1\"\ng1 = \"v\"\n"), Error);
    EXPECT_EQ(error_line(replace(base, "left = fixed 0", "left = free") + "\n[constraint]\nP = \"u1\"\ng1 = \"v\"\nk = 1\n"),
              16u);
    EXPECT_EQ(error_line(base), 0u);
}

TEST(ProblemFile, MissingFile) {
    try {
        ProblemFile::load("/nonexistent/problem.dvp");
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::ProblemFileError);
    }
}
