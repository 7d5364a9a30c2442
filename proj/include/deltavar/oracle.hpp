#pragma once

// Independent checks of the main path: finite-difference gradients of the
// functional value, sign scans over one or two decision variables, and a
// generalized eigensolver for quotient-of-quadratic-forms problems. Nothing
// here calls into the Euler-Lagrange code; integrals are summed directly from
// expression evaluations.

#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "deltavar/error.hpp"
#include "deltavar/euler_lagrange.hpp"
#include "deltavar/functional.hpp"

namespace deltavar::oracle {

/// Delta integral of one expression over (t, y, v), summed from raw samples.
inline double integrate(const Expr& f, const TimeScale& ts, std::span<const double> x) {
    double sum = 0.0;
    for (std::size_t i = 0; i + 1 < ts.size(); ++i) {
        const double mu = ts[i + 1] - ts[i];
        const double args[3] = {ts[i], x[i + 1], (x[i + 1] - x[i]) / mu};
        sum += mu * f.eval(args);
    }
    return sum;
}

/// value() of the spec's functional at a full sample vector, through the
/// oracle's own summation.
inline double functional_value(const CompositeFunctional& F, const TimeScale& ts, std::span<const double> x) {
    std::vector<double> u(F.arity());
    for (std::size_t k = 0; k < F.arity(); ++k) u[k] = integrate(F.inner(k), ts, x);
    try {
        return F.outer().eval(u, EvalOptions{kDenominatorEpsilon});
    } catch (const Error& e) {
        if (e.code() == ErrorCode::DivisionByZero) throw Error(ErrorCode::DomainError, e.what());
        throw;
    }
}

/// Central differences of the functional value in each decision coordinate.
inline std::vector<double> fd_gradient(const ProblemSpec& spec, const Trajectory& tr, double step) {
    if (!(step > 0.0)) throw Error(ErrorCode::InvalidArgument, "finite-difference step must be positive");
    spec.check(tr);
    const TimeScale& ts = spec.scale();
    const auto& F = spec.functional();
    std::vector<double> x = tr.x();
    functional_value(F, ts, x);  // the base point itself must be in the domain
    std::vector<double> g;
    for (std::size_t j = spec.decision_begin(); j < spec.decision_end(); ++j) {
        const double x0 = x[j];
        x[j] = x0 + step;
        const double fp = functional_value(F, ts, x);
        x[j] = x0 - step;
        const double fm = functional_value(F, ts, x);
        x[j] = x0;
        g.push_back((fp - fm) / (2.0 * step));
    }
    return g;
}

struct Range {
    double lo = 0.0;
    double hi = 0.0;
};

struct ScanBracket {
    std::vector<double> lo;  // lower corner of the cell
    std::vector<double> hi;  // upper corner
};

struct ScanReport {
    std::vector<std::size_t> indices;     // time-scale indices of the scanned samples
    std::vector<std::vector<double>> grid;  // per axis
    // Scanned quantity at each grid node (row-major over axes, component-major
    // inside): the gradient, or K - k along a constraint.
    std::vector<std::vector<double>> values;
    std::vector<std::string> signs;       // one sign string per node: "+", "-", "0", "+-" ...
    std::vector<ScanBracket> brackets;
    std::vector<std::vector<double>> roots;
    bool constrained = false;

    bool no_roots() const { return roots.empty(); }
};

namespace detail {

/// Derivative of a scalar function by Richardson-extrapolated central differences.
inline double richardson(const std::function<double(double)>& f, double x, double h) {
    auto central = [&](double s) { return (f(x + s) - f(x - s)) / (2.0 * s); };
    return (4.0 * central(h / 2.0) - central(h)) / 3.0;
}

inline int sign_of(double v) { return (v > 0.0) - (v < 0.0); }

inline std::string sign_string(std::span<const double> v) {
    std::string s;
    for (double e : v) s += e > 0.0 ? '+' : (e < 0.0 ? '-' : '0');
    return s;
}

}  // namespace detail

/// Dense scan of the stationarity conditions over at most two decision
/// samples; sign changes are bracketed and refined by bisection (one
/// variable) or quadrisection (two). With an isoperimetric constraint and one
/// decision sample, the scan runs along the constraint: roots of K - k.
inline ScanReport scan_low_dim(const ProblemSpec& spec, const std::vector<Range>& ranges, std::size_t resolution,
                               const std::vector<double>& base = {}) {
    const std::size_t D = spec.decision_count();
    if (D > 2 || (spec.constraint() && D > 1)) {
        throw Error(ErrorCode::TooManyDecisionVariables,
                    "scan supports at most 2 decision variables (1 with a constraint), problem has " +
                        std::to_string(D));
    }
    if (ranges.size() != D) {
        throw Error(ErrorCode::InvalidArgument, "expected " + std::to_string(D) + " ranges, got " +
                                                    std::to_string(ranges.size()));
    }
    for (const auto& r : ranges) {
        if (!(r.lo < r.hi)) throw Error(ErrorCode::InvalidArgument, "scan range must have lo < hi");
    }
    if (resolution < 2) throw Error(ErrorCode::InvalidArgument, "scan resolution must be at least 2");

    const TimeScale& ts = spec.scale();
    std::vector<double> x = base.empty() ? std::vector<double>(ts.size(), 0.0) : base;
    if (x.size() != ts.size()) throw Error(ErrorCode::ScaleMismatch, "base trajectory length differs from scale");
    const auto& bc = spec.boundary();
    if (bc.left.fixed) x.front() = *bc.left.fixed;
    if (bc.right.fixed) x.back() = *bc.right.fixed;

    ScanReport rep;
    rep.constrained = spec.constraint().has_value();
    for (std::size_t j = spec.decision_begin(); j < spec.decision_end(); ++j) rep.indices.push_back(j);

    // Quantity whose zeros are scanned for, at decision values w.
    auto quantity = [&](std::span<const double> w) {
        std::vector<double> xs = x;
        for (std::size_t a = 0; a < w.size(); ++a) xs[rep.indices[a]] = w[a];
        std::vector<double> out;
        if (rep.constrained) {
            const auto& K = *spec.constraint();
            out.push_back(functional_value(K.functional, ts, xs) - K.level);
            return out;
        }
        for (std::size_t a = 0; a < w.size(); ++a) {
            const double h = 1e-3 * (1.0 + std::abs(w[a]));
            out.push_back(detail::richardson(
                [&](double s) {
                    std::vector<double> xx = xs;
                    xx[rep.indices[a]] = s;
                    return functional_value(spec.functional(), ts, xx);
                },
                w[a], h));
        }
        return out;
    };
    auto safe_quantity = [&](std::span<const double> w) -> std::optional<std::vector<double>> {
        try {
            return quantity(w);
        } catch (const Error&) {
            return std::nullopt;
        }
    };

    for (const auto& r : ranges) {
        std::vector<double> axis(resolution);
        for (std::size_t i = 0; i < resolution; ++i) {
            axis[i] = r.lo + (r.hi - r.lo) * static_cast<double>(i) / static_cast<double>(resolution - 1);
        }
        rep.grid.push_back(std::move(axis));
    }

    if (D == 1) {
        const auto& axis = rep.grid[0];
        std::vector<std::optional<double>> q(axis.size());
        for (std::size_t i = 0; i < axis.size(); ++i) {
            const double w[1] = {axis[i]};
            auto v = safe_quantity(w);
            if (v) q[i] = (*v)[0];
            rep.values.push_back(v ? *v : std::vector<double>{std::nan("")});
            rep.signs.push_back(v ? detail::sign_string(*v) : "?");
        }
        for (std::size_t i = 0; i + 1 < axis.size(); ++i) {
            if (!q[i] || !q[i + 1]) continue;
            const int s0 = detail::sign_of(*q[i]);
            const int s1 = detail::sign_of(*q[i + 1]);
            if (s0 == 0) {
                rep.brackets.push_back({{axis[i]}, {axis[i]}});
                rep.roots.push_back({axis[i]});
                continue;
            }
            if (s0 * s1 >= 0) continue;
            double lo = axis[i], hi = axis[i + 1];
            rep.brackets.push_back({{lo}, {hi}});
            int slo = s0;
            while (hi - lo > 1e-12 * (1.0 + std::abs(lo))) {
                const double mid = 0.5 * (lo + hi);
                if (mid <= lo || mid >= hi) break;
                const double w[1] = {mid};
                auto v = safe_quantity(w);
                if (!v) break;
                const int sm = detail::sign_of((*v)[0]);
                if (sm == 0) {
                    lo = hi = mid;
                    break;
                }
                if (sm == slo) {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            rep.roots.push_back({0.5 * (lo + hi)});
        }
        if (q.back() && detail::sign_of(*q.back()) == 0) {
            rep.brackets.push_back({{axis.back()}, {axis.back()}});
            rep.roots.push_back({axis.back()});
        }
        return rep;
    }

    // Two variables: a cell is a candidate when each gradient component takes
    // both signs (or zero) on its corners; candidates are quadrisected.
    const auto& ax = rep.grid[0];
    const auto& ay = rep.grid[1];
    std::vector<std::optional<std::vector<double>>> q(ax.size() * ay.size());
    for (std::size_t i = 0; i < ax.size(); ++i) {
        for (std::size_t j = 0; j < ay.size(); ++j) {
            const double w[2] = {ax[i], ay[j]};
            auto v = safe_quantity(w);
            q[i * ay.size() + j] = v;
            rep.values.push_back(v ? *v : std::vector<double>{std::nan(""), std::nan("")});
            rep.signs.push_back(v ? detail::sign_string(*v) : "??");
        }
    }
    auto straddles = [](const std::vector<std::vector<double>>& corners) {
        for (std::size_t c = 0; c < 2; ++c) {
            bool pos = false, neg = false;
            for (const auto& v : corners) {
                if (v[c] >= 0.0) pos = true;
                if (v[c] <= 0.0) neg = true;
            }
            if (!(pos && neg)) return false;
        }
        return true;
    };
    auto corners_at = [&](double x0, double x1, double y0, double y1) -> std::optional<std::vector<std::vector<double>>> {
        std::vector<std::vector<double>> out;
        for (double xx : {x0, x1}) {
            for (double yy : {y0, y1}) {
                const double w[2] = {xx, yy};
                auto v = safe_quantity(w);
                if (!v) return std::nullopt;
                out.push_back(*v);
            }
        }
        return out;
    };
    std::vector<std::vector<double>> found;
    std::function<void(double, double, double, double, int)> refine = [&](double x0, double x1, double y0, double y1,
                                                                         int depth) {
        const double size = std::max(x1 - x0, y1 - y0);
        if (size <= 1e-12 * (1.0 + std::max(std::abs(x0), std::abs(y0))) || depth > 60) {
            found.push_back({0.5 * (x0 + x1), 0.5 * (y0 + y1)});
            return;
        }
        const double xm = 0.5 * (x0 + x1), ym = 0.5 * (y0 + y1);
        const double cells[4][4] = {{x0, xm, y0, ym}, {xm, x1, y0, ym}, {x0, xm, ym, y1}, {xm, x1, ym, y1}};
        for (const auto& c : cells) {
            auto corners = corners_at(c[0], c[1], c[2], c[3]);
            if (corners && straddles(*corners)) {
                refine(c[0], c[1], c[2], c[3], depth + 1);
                return;  // follow one enclosure per candidate cell
            }
        }
    };
    for (std::size_t i = 0; i + 1 < ax.size(); ++i) {
        for (std::size_t j = 0; j + 1 < ay.size(); ++j) {
            const auto& a = q[i * ay.size() + j];
            const auto& b = q[i * ay.size() + j + 1];
            const auto& c = q[(i + 1) * ay.size() + j];
            const auto& d = q[(i + 1) * ay.size() + j + 1];
            if (!a || !b || !c || !d) continue;
            if (!straddles({*a, *b, *c, *d})) continue;
            rep.brackets.push_back({{ax[i], ay[j]}, {ax[i + 1], ay[j + 1]}});
            refine(ax[i], ax[i + 1], ay[j], ay[j + 1], 0);
        }
    }
    // Neighbouring cells can enclose the same root.
    for (const auto& r : found) {
        const bool dup = std::any_of(rep.roots.begin(), rep.roots.end(), [&](const std::vector<double>& s) {
            return std::abs(s[0] - r[0]) <= 1e-9 * (1.0 + std::abs(r[0])) &&
                   std::abs(s[1] - r[1]) <= 1e-9 * (1.0 + std::abs(r[1]));
        });
        if (!dup) rep.roots.push_back(r);
    }
    return rep;
}

/// Dense symmetric matrix of a quadratic form q(w) = w^T A w by polarization,
/// A_ij = (q(e_i + e_j) - q(e_i - e_j)) / 4. Entries with |i - j| > bandwidth
/// are taken as zero; a sample of them is checked.
inline Eigen::MatrixXd assemble_quadratic_form(const std::function<double(const Eigen::VectorXd&)>& q,
                                               Eigen::Index dim, Eigen::Index bandwidth) {
    Eigen::MatrixXd A = Eigen::MatrixXd::Zero(dim, dim);
    auto entry = [&](Eigen::Index i, Eigen::Index j) {
        Eigen::VectorXd e = Eigen::VectorXd::Zero(dim);
        e(i) += 1.0;
        e(j) += 1.0;
        const double plus = q(e);
        e(j) -= 2.0;
        const double minus = q(e);
        return 0.25 * (plus - minus);
    };
    for (Eigen::Index i = 0; i < dim; ++i) {
        for (Eigen::Index j = i; j < std::min(dim, i + bandwidth + 1); ++j) {
            A(i, j) = A(j, i) = entry(i, j);
        }
    }
    const double scale = std::max(A.cwiseAbs().maxCoeff(), 1.0);
    for (Eigen::Index i = 0; i + bandwidth + 1 < dim; i += std::max<Eigen::Index>(1, dim / 7)) {
        const Eigen::Index j = std::min(dim - 1, i + bandwidth + 1 + (dim - i) / 2);
        if (std::abs(entry(i, j)) > 1e-10 * scale) {
            throw Error(ErrorCode::InvalidArgument, "quadratic form is not banded with bandwidth " +
                                                        std::to_string(bandwidth));
        }
    }
    return A;
}

struct Pencil {
    Eigen::MatrixXd A;
    Eigen::MatrixXd B;
};

/// For L = F1 / F2 with both integrands quadratic forms in (y, v) and both
/// ends fixed at zero: matrices of F1 and F2 over the interior samples.
inline Pencil quotient_pencil(const ProblemSpec& spec) {
    const auto& F = spec.functional();
    if (F.arity() != 2 || spec.constraint()) {
        throw Error(ErrorCode::InvalidArgument, "pencil needs an unconstrained quotient of two integrals");
    }
    for (const auto& [a, b] : {std::pair{3.0, 2.0}, std::pair{-1.5, 0.25}}) {
        const double u[2] = {a, b};
        if (std::abs(F.outer().eval(u) - a / b) > 1e-12 * std::abs(a / b)) {
            throw Error(ErrorCode::InvalidArgument, "outer map is not u1 / u2");
        }
    }
    const auto& bc = spec.boundary();
    if (!bc.left.fixed || !bc.right.fixed || *bc.left.fixed != 0.0 || *bc.right.fixed != 0.0) {
        throw Error(ErrorCode::InvalidArgument, "pencil needs both ends fixed at zero");
    }
    const TimeScale& ts = spec.scale();
    const auto D = static_cast<Eigen::Index>(spec.decision_count());
    auto form = [&](const Expr& f) {
        return [&ts, &f](const Eigen::VectorXd& w) {
            std::vector<double> x(ts.size(), 0.0);
            for (Eigen::Index i = 0; i < w.size(); ++i) x[static_cast<std::size_t>(i) + 1] = w(i);
            return integrate(f, ts, x);
        };
    };
    return {assemble_quadratic_form(form(F.inner(0)), D, 2), assemble_quadratic_form(form(F.inner(1)), D, 2)};
}

struct EigenPair {
    double value = 0.0;
    Eigen::VectorXd vector;  // B-normalized
    int iterations = 0;
};

using Applier = std::function<Eigen::VectorXd(const Eigen::VectorXd&)>;

/// Smallest eigenvalue of A x = Q B x by inverse power iteration, with B-norm
/// normalization; stops when the Rayleigh quotient moves by at most 1e-10
/// (relative).
inline EigenPair generalized_eig_smallest(const Applier& apply_a, const Applier& apply_b, Eigen::Index dim) {
    if (dim < 1) throw Error(ErrorCode::InvalidArgument, "dimension must be positive");
    Eigen::MatrixXd A(dim, dim), B(dim, dim);
    for (Eigen::Index j = 0; j < dim; ++j) {
        const Eigen::VectorXd e = Eigen::VectorXd::Unit(dim, j);
        A.col(j) = apply_a(e);
        B.col(j) = apply_b(e);
    }
    A = 0.5 * (A + A.transpose()).eval();
    B = 0.5 * (B + B.transpose()).eval();
    Eigen::LLT<Eigen::MatrixXd> llt(B);
    if (llt.info() != Eigen::Success) throw Error(ErrorCode::SingularB, "B is not positive definite");

    // Shift below the spectrum when A is indefinite: |lambda| <= ||A|| ||B^{-1}||.
    double shift = 0.0;
    if (Eigen::LLT<Eigen::MatrixXd>(A).info() != Eigen::Success) {
        const Eigen::MatrixXd binv = llt.solve(Eigen::MatrixXd::Identity(dim, dim));
        shift = -A.cwiseAbs().rowwise().sum().maxCoeff() * binv.cwiseAbs().rowwise().sum().maxCoeff();
    }
    Eigen::PartialPivLU<Eigen::MatrixXd> lu(A - shift * B);

    Eigen::VectorXd x = Eigen::VectorXd::Ones(dim);
    for (Eigen::Index i = 0; i < dim; ++i) x(i) += 0.01 * static_cast<double>(i % 5);
    auto bnorm = [&](const Eigen::VectorXd& v) { return std::sqrt(v.dot(B * v)); };
    x /= bnorm(x);
    double rho = x.dot(A * x);
    EigenPair out;
    for (int it = 1; it <= 10000; ++it) {
        Eigen::VectorXd y = lu.solve(B * x);
        if (!y.allFinite()) throw Error(ErrorCode::SingularB, "shifted pencil is singular");
        x = y / bnorm(y);
        const double next = x.dot(A * x);
        out.iterations = it;
        if (std::abs(next - rho) <= 1e-10 * std::max(1.0, std::abs(next))) {
            rho = next;
            break;
        }
        rho = next;
    }
    out.value = rho;
    out.vector = x;
    return out;
}

}  // namespace deltavar::oracle
