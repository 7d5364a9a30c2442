#pragma once

// First-order stationarity: Euler-Lagrange residual, natural boundary
// conditions, the Dubois-Reymond constant-of-motion, and the exact gradient of
// the discrete functional with respect to the trajectory samples.
//
// On an N-point scale the gradient and the residuals are tied together by
//   d value / d x(t_j) = -mu(t_{j-1}) * el(t_{j-1})        0 < j < N-1
//   d value / d x(a)   = -natural_bc_left
//   d value / d x(b)   = +natural_bc_right

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <optional>
#include <span>
#include <vector>

#include "deltavar/error.hpp"
#include "deltavar/functional.hpp"
#include "deltavar/timescale.hpp"

namespace deltavar {

struct Constraint {
    CompositeFunctional functional;  // K = P(G_1, ..., G_m)
    double level = 0.0;              // K[x] = level
};

/// A variational problem: scale, composite functional, boundary data and an
/// optional isoperimetric constraint (which requires both ends fixed).
class ProblemSpec {
public:
    ProblemSpec(std::shared_ptr<const TimeScale> ts, CompositeFunctional functional, BoundarySpec bc,
                std::optional<Constraint> constraint = std::nullopt)
        : ts_(std::move(ts)), functional_(std::move(functional)), bc_(bc), constraint_(std::move(constraint)) {
        if (!ts_) throw Error(ErrorCode::InvalidArgument, "problem without time scale");
        if (constraint_ && (bc_.left.is_free() || bc_.right.is_free())) {
            throw Error(ErrorCode::InvalidArgument, "isoperimetric problems require both endpoints fixed");
        }
    }

    ProblemSpec(const TimeScale& ts, CompositeFunctional functional, BoundarySpec bc,
                std::optional<Constraint> constraint = std::nullopt)
        : ProblemSpec(std::make_shared<const TimeScale>(ts), std::move(functional), bc, std::move(constraint)) {}

    const TimeScale& scale() const { return *ts_; }
    const std::shared_ptr<const TimeScale>& scale_ptr() const { return ts_; }
    const CompositeFunctional& functional() const { return functional_; }
    const BoundarySpec& boundary() const { return bc_; }
    const std::optional<Constraint>& constraint() const { return constraint_; }

    ProblemSpec with_scale(std::shared_ptr<const TimeScale> ts) const {
        return ProblemSpec(std::move(ts), functional_, bc_, constraint_);
    }

    /// Decision variables are the samples [decision_begin, decision_end):
    /// interior points always, endpoints when free.
    std::size_t decision_begin() const { return bc_.left.is_free() ? 0 : 1; }
    std::size_t decision_end() const { return bc_.right.is_free() ? ts_->size() : ts_->size() - 1; }
    std::size_t decision_count() const { return decision_end() - decision_begin(); }

    std::vector<double> decision_vector(const Trajectory& tr) const {
        return {tr.x().begin() + static_cast<std::ptrdiff_t>(decision_begin()),
                tr.x().begin() + static_cast<std::ptrdiff_t>(decision_end())};
    }

    Trajectory trajectory_from(std::span<const double> decision) const {
        if (decision.size() != decision_count()) {
            throw Error(ErrorCode::InvalidArgument, "decision vector has the wrong length");
        }
        GridSamples x(ts_->size(), 0.0);
        if (bc_.left.fixed) x.front() = *bc_.left.fixed;
        if (bc_.right.fixed) x.back() = *bc_.right.fixed;
        std::copy(decision.begin(), decision.end(), x.begin() + static_cast<std::ptrdiff_t>(decision_begin()));
        return Trajectory(ts_, std::move(x));
    }

    void check(const Trajectory& tr) const {
        if (!tr.scale().same_points(*ts_)) {
            throw Error(ErrorCode::ScaleMismatch, "trajectory is not on the problem's time scale");
        }
        const auto off = [](const Endpoint& e, double v) {
            return e.fixed && std::abs(v - *e.fixed) > 1e-12 * (1.0 + std::abs(*e.fixed));
        };
        if (off(bc_.left, tr.x().front()) || off(bc_.right, tr.x().back())) {
            throw Error(ErrorCode::InvalidArgument, "trajectory does not meet the fixed boundary values");
        }
    }

private:
    std::shared_ptr<const TimeScale> ts_;
    CompositeFunctional functional_;
    BoundarySpec bc_;
    std::optional<Constraint> constraint_;
};

/// Inner values, outer partials H'_i and integrand samples at one trajectory.
struct Linearization {
    std::vector<double> inner;
    std::vector<double> outer_grad;
    std::vector<IntegrandSamples> samples;
};

inline Linearization linearize(const CompositeFunctional& F, const Trajectory& tr, bool second_order = false) {
    Linearization lin;
    lin.inner = inner_values(F, tr);
    lin.outer_grad = F.outer_gradient(lin.inner);
    for (std::size_t k = 0; k < F.arity(); ++k) {
        lin.samples.push_back(F.sample(k, tr, second_order));
    }
    return lin;
}

/// sum_i H'_i (f_iv^Delta - f_iy) at t_0 .. t_{N-3}. The last kappa point is
/// omitted: f_iv^Delta there would need x^Delta(b).
inline std::vector<double> el_residual(const CompositeFunctional& F, const Trajectory& tr) {
    const TimeScale& ts = tr.scale();
    const auto lin = linearize(F, tr);
    std::vector<double> r(ts.size() - 2, 0.0);
    for (std::size_t k = 0; k < F.arity(); ++k) {
        const auto& s = lin.samples[k];
        const double hk = lin.outer_grad[k];
        for (std::size_t i = 0; i < r.size(); ++i) {
            r[i] += hk * ((s.fv[i + 1] - s.fv[i]) / ts.mu(i) - s.fy[i]);
        }
    }
    return r;
}

inline std::vector<double> el_residual(const ProblemSpec& spec, const Trajectory& tr) {
    spec.check(tr);
    return el_residual(spec.functional(), tr);
}

inline double natural_bc_left(const CompositeFunctional& F, const Trajectory& tr) {
    const auto lin = linearize(F, tr);
    double sum = 0.0;
    for (std::size_t k = 0; k < F.arity(); ++k) {
        sum += lin.outer_grad[k] * lin.samples[k].fv.front();
    }
    return sum;
}

/// sum_i H'_i (f_iv + mu f_iy) evaluated at rho(b).
inline double natural_bc_right(const CompositeFunctional& F, const Trajectory& tr) {
    const TimeScale& ts = tr.scale();
    const std::size_t r = ts.rho(ts.last());
    const auto lin = linearize(F, tr);
    double sum = 0.0;
    for (std::size_t k = 0; k < F.arity(); ++k) {
        const auto& s = lin.samples[k];
        sum += lin.outer_grad[k] * (s.fv[r] + ts.mu(r) * s.fy[r]);
    }
    return sum;
}

inline double natural_bc_left(const ProblemSpec& spec, const Trajectory& tr) {
    spec.check(tr);
    if (!spec.boundary().left.is_free()) {
        throw Error(ErrorCode::EndpointNotFree, "x(a) is prescribed");
    }
    return natural_bc_left(spec.functional(), tr);
}

inline double natural_bc_right(const ProblemSpec& spec, const Trajectory& tr) {
    spec.check(tr);
    if (!spec.boundary().right.is_free()) {
        throw Error(ErrorCode::EndpointNotFree, "x(b) is prescribed");
    }
    return natural_bc_right(spec.functional(), tr);
}

/// Chain rule through the mu-weighted sum: term i depends on x_i through
/// x^Delta and on x_{i+1} through both x^sigma and x^Delta.
inline std::vector<double> gradient_all_points(const CompositeFunctional& F, const Trajectory& tr) {
    const TimeScale& ts = tr.scale();
    const auto lin = linearize(F, tr);
    std::vector<double> g(ts.size(), 0.0);
    for (std::size_t k = 0; k < F.arity(); ++k) {
        const auto& s = lin.samples[k];
        const double hk = lin.outer_grad[k];
        for (std::size_t i = 0; i < ts.last(); ++i) {
            const double mu = ts.mu(i);
            g[i] += hk * (mu * s.fv[i] * (-1.0 / mu));
            g[i + 1] += hk * (mu * s.fy[i] + mu * s.fv[i] * (1.0 / mu));
        }
    }
    return g;
}

/// Exact partial derivatives of value() over the spec's decision samples.
inline std::vector<double> functional_gradient(const ProblemSpec& spec, const CompositeFunctional& F,
                                               const Trajectory& tr) {
    spec.check(tr);
    const auto g = gradient_all_points(F, tr);
    return {g.begin() + static_cast<std::ptrdiff_t>(spec.decision_begin()),
            g.begin() + static_cast<std::ptrdiff_t>(spec.decision_end())};
}

inline std::vector<double> functional_gradient(const ProblemSpec& spec, const Trajectory& tr) {
    return functional_gradient(spec, spec.functional(), tr);
}

/// E(t) = sum_i H'_i (f_iv(t) - integral_a^t f_iy) on [a,b]^kappa.
inline std::vector<double> dubois_reymond_quantity(const CompositeFunctional& F, const Trajectory& tr) {
    const TimeScale& ts = tr.scale();
    const auto lin = linearize(F, tr);
    std::vector<double> e(ts.kappa_count(), 0.0);
    for (std::size_t k = 0; k < F.arity(); ++k) {
        const auto& s = lin.samples[k];
        double running = 0.0;
        for (std::size_t i = 0; i < e.size(); ++i) {
            e[i] += lin.outer_grad[k] * (s.fv[i] - running);
            running += ts.mu(i) * s.fy[i];
        }
    }
    return e;
}

inline std::vector<double> dubois_reymond_quantity(const ProblemSpec& spec, const Trajectory& tr) {
    spec.check(tr);
    return dubois_reymond_quantity(spec.functional(), tr);
}

inline double spread(std::span<const double> v) {
    if (v.empty()) return 0.0;
    const auto [lo, hi] = std::minmax_element(v.begin(), v.end());
    return *hi - *lo;
}

inline double max_abs(std::span<const double> v) {
    double m = 0.0;
    for (double x : v) m = std::max(m, std::abs(x));
    return m;
}

/// lambda0 * EL(L) - lambda * EL(K), pointwise.
inline std::vector<double> isoperimetric_residual(const ProblemSpec& spec, const Trajectory& tr, double lambda0,
                                                  double lambda) {
    if (!spec.constraint()) {
        throw Error(ErrorCode::InvalidArgument, "problem has no isoperimetric constraint");
    }
    if (lambda0 == 0.0 && lambda == 0.0) {
        throw Error(ErrorCode::BothMultipliersZero, "(lambda0, lambda) = (0, 0)");
    }
    spec.check(tr);
    std::vector<double> r(tr.size() - 2, 0.0);
    if (lambda0 != 0.0) {
        const auto el = el_residual(spec.functional(), tr);
        for (std::size_t i = 0; i < r.size(); ++i) r[i] += lambda0 * el[i];
    }
    if (lambda != 0.0) {
        const auto elk = el_residual(spec.constraint()->functional, tr);
        for (std::size_t i = 0; i < r.size(); ++i) r[i] -= lambda * elk[i];
    }
    return r;
}

struct ResidualReport {
    std::vector<double> el;          // evaluated at t_0 .. t_{N-3}
    double el_max = 0.0;
    std::optional<double> nat_left;  // present when x(a) is free
    std::optional<double> nat_right;
    double dr_constancy_spread = 0.0;
    std::optional<double> constraint_violation;  // K[x] - k

    double worst() const {
        double w = el_max;
        if (nat_left) w = std::max(w, std::abs(*nat_left));
        if (nat_right) w = std::max(w, std::abs(*nat_right));
        if (constraint_violation) w = std::max(w, std::abs(*constraint_violation));
        return w;
    }
};

/// Residuals of the stationarity conditions. With a constraint, the EL and DR
/// quantities are those of lambda0 L - lambda K.
inline ResidualReport residual_report(const ProblemSpec& spec, const Trajectory& tr, double lambda0 = 1.0,
                                      double lambda = 0.0) {
    spec.check(tr);
    ResidualReport rep;
    if (spec.constraint()) {
        rep.el = isoperimetric_residual(spec, tr, lambda0, lambda);
        auto e = dubois_reymond_quantity(spec.functional(), tr);
        const auto ek = dubois_reymond_quantity(spec.constraint()->functional, tr);
        for (std::size_t i = 0; i < e.size(); ++i) e[i] = lambda0 * e[i] - lambda * ek[i];
        rep.dr_constancy_spread = spread(e);
        rep.constraint_violation = value(spec.constraint()->functional, tr) - spec.constraint()->level;
    } else {
        rep.el = el_residual(spec, tr);
        rep.dr_constancy_spread = spread(dubois_reymond_quantity(spec, tr));
        if (spec.boundary().left.is_free()) rep.nat_left = natural_bc_left(spec, tr);
        if (spec.boundary().right.is_free()) rep.nat_right = natural_bc_right(spec, tr);
    }
    rep.el_max = max_abs(rep.el);
    return rep;
}

/// Least-squares multiplier for EL(L) - lambda EL(K) = 0.
inline double fit_multiplier(const ProblemSpec& spec, const Trajectory& tr) {
    if (!spec.constraint()) return 0.0;
    const auto el = el_residual(spec.functional(), tr);
    const auto elk = el_residual(spec.constraint()->functional, tr);
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < el.size(); ++i) {
        num += el[i] * elk[i];
        den += elk[i] * elk[i];
    }
    return den > 0.0 ? num / den : 0.0;
}

}  // namespace deltavar
