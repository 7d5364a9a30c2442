#pragma once

// Random problem generators shared by the unit tests and the acceptance binary.

#include <algorithm>
#include <cmath>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "deltavar/bundled_fixtures.hpp"
#include "deltavar/euler_lagrange.hpp"
#include "deltavar/problem_file.hpp"

namespace dvtest {

using Rng = std::mt19937_64;

inline double uniform(Rng& rng, double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); }
inline int uniform_int(Rng& rng, int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); }

inline std::string num(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    std::string s = buf;
    return v < 0 ? "(" + s + ")" : s;
}

/// Random polynomial of total degree <= `degree` in the given variables.
inline std::string random_poly(Rng& rng, const std::vector<std::string>& vars, int degree, int terms) {
    std::string out;
    for (int k = 0; k < terms; ++k) {
        std::string term = num(std::round(uniform(rng, -3.0, 3.0) * 100.0) / 100.0);
        const int d = uniform_int(rng, 0, degree);
        for (int p = 0; p < d; ++p) term += " * " + vars[static_cast<std::size_t>(uniform_int(rng, 0, static_cast<int>(vars.size()) - 1))];
        out += (k ? " + " : "") + term;
    }
    return out;
}

/// Random smooth expression over (t, y, v), defined everywhere.
inline std::string random_expr(Rng& rng, int depth) {
    static const char* leaves[] = {"t", "y", "v"};
    if (depth == 0 || uniform_int(rng, 0, 4) == 0) {
        if (uniform_int(rng, 0, 3) == 0) return num(std::round(uniform(rng, -2.0, 2.0) * 10.0) / 10.0);
        return leaves[uniform_int(rng, 0, 2)];
    }
    const auto a = random_expr(rng, depth - 1);
    const auto b = random_expr(rng, depth - 1);
    switch (uniform_int(rng, 0, 9)) {
        case 0: return "(" + a + " + " + b + ")";
        case 1: return "(" + a + " - " + b + ")";
        case 2: return "(" + a + " * " + b + ")";
        case 3: return "(" + a + ") / (2 + (" + b + ")^2)";
        case 4: return "(" + a + ")^" + std::to_string(uniform_int(rng, 0, 3));
        case 5: return "sin(" + a + ")";
        case 6: return "cos(" + a + ")";
        case 7: return "exp(" + a + " / 4)";
        case 8: return "log(1 + (" + a + ")^2)";
        default: return "sqrt(3 + sin(" + a + "))";
    }
}

/// 3..max_points points with gaps in [0.05, 1].
inline deltavar::TimeScale random_scale(Rng& rng, int min_points, int max_points) {
    const int n = uniform_int(rng, min_points, max_points);
    std::vector<double> pts{uniform(rng, -1.0, 1.0)};
    for (int i = 1; i < n; ++i) pts.push_back(pts.back() + uniform(rng, 0.05, 1.0));
    return deltavar::TimeScale::from_points(std::move(pts));
}

inline std::vector<double> random_samples(Rng& rng, std::size_t n) {
    std::vector<double> x(n);
    for (auto& v : x) v = uniform(rng, -1.5, 1.5);
    return x;
}

/// Random unconstrained problem: H is the identity, a product, a quotient
/// with a positive denominator, or a random polynomial in (u1, u2).
inline deltavar::ProblemSpec random_spec(Rng& rng, int min_points = 3, int max_points = 20) {
    using namespace deltavar;
    const std::vector<std::string> tyv{"t", "y", "v"};
    auto ts = std::make_shared<const TimeScale>(random_scale(rng, min_points, max_points));
    std::string outer;
    std::vector<std::string> inner{random_poly(rng, tyv, 3, 4)};
    switch (uniform_int(rng, 0, 3)) {
        case 0: outer = "u1"; break;
        case 1:
            outer = "u1 * u2";
            inner.push_back(random_poly(rng, tyv, 3, 4));
            break;
        case 2:
            outer = "u1 / u2";
            inner.push_back("2 + v^2 + y^2 + " + num(uniform(rng, 0.0, 1.0)) + " * t^2");
            break;
        default:
            outer = random_poly(rng, {"u1", "u2"}, 3, 4) + " + 0 * u1 * u2";
            inner.push_back(random_poly(rng, tyv, 3, 4));
            break;
    }
    auto end = [&]() {
        return uniform_int(rng, 0, 1) ? Endpoint::free_end() : Endpoint::fixed_at(uniform(rng, -1.0, 1.0));
    };
    BoundarySpec bc{end(), end()};
    return ProblemSpec(ts, CompositeFunctional::parse(outer, inner), bc);
}

inline deltavar::Trajectory random_trajectory(Rng& rng, const deltavar::ProblemSpec& spec) {
    auto x = random_samples(rng, spec.scale().size());
    const auto& bc = spec.boundary();
    if (bc.left.fixed) x.front() = *bc.left.fixed;
    if (bc.right.fixed) x.back() = *bc.right.fixed;
    return deltavar::Trajectory(spec.scale_ptr(), std::move(x));
}

inline deltavar::ProblemFile fixture(std::string_view name) {
    for (const auto& [n, text] : deltavar::bundled::fixtures) {
        if (n == name) return deltavar::ProblemFile::parse(text, std::string(n) + ".dvp");
    }
    throw deltavar::Error(deltavar::ErrorCode::ProblemFileError, "no fixture " + std::string(name));
}

inline double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
    double m = 0.0;
    for (std::size_t i = 0; i < std::min(a.size(), b.size()); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

}  // namespace dvtest
