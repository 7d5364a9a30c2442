#pragma once

// Composite functionals L[x] = H(F_1[x], ..., F_n[x]) with
// F_i[x] = integral over [a,b) of f_i(t, x^sigma(t), x^Delta(t)).

#include <algorithm>
#include <array>
#include <cmath>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "deltavar/error.hpp"
#include "deltavar/expr.hpp"
#include "deltavar/timescale.hpp"

namespace deltavar {

/// Relative threshold below which a denominator in an outer map counts as vanished.
inline constexpr double kDenominatorEpsilon = 1e-9;

/// Candidate trajectory with x^sigma and x^Delta cached at construction.
class Trajectory {
public:
    Trajectory(std::shared_ptr<const TimeScale> ts, GridSamples x) : ts_(std::move(ts)), x_(std::move(x)) {
        if (!ts_) throw Error(ErrorCode::InvalidArgument, "trajectory without time scale");
        if (x_.size() != ts_->size()) {
            throw Error(ErrorCode::ScaleMismatch, "trajectory has " + std::to_string(x_.size()) +
                                                      " samples for " + std::to_string(ts_->size()) + " points");
        }
        x_sigma_.resize(x_.size());
        for (std::size_t i = 0; i < x_.size(); ++i) {
            x_sigma_[i] = x_[ts_->sigma(i)];
        }
        x_delta_ = delta_derivative(*ts_, x_);
    }

    Trajectory(const TimeScale& ts, GridSamples x) : Trajectory(std::make_shared<const TimeScale>(ts), std::move(x)) {}

    const TimeScale& scale() const { return *ts_; }
    const std::shared_ptr<const TimeScale>& scale_ptr() const { return ts_; }
    std::size_t size() const { return x_.size(); }
    const GridSamples& x() const { return x_; }
    const GridSamples& x_sigma() const { return x_sigma_; }
    /// Defined on [a,b]^kappa only.
    const GridSamples& x_delta() const { return x_delta_; }

    /// (t_i, x^sigma(t_i), x^Delta(t_i)) for i on [a,b)^kappa.
    std::array<double, 3> args(std::size_t i) const { return {(*ts_)[i], x_sigma_[i], x_delta_[i]}; }

    Trajectory with_samples(GridSamples x) const { return Trajectory(ts_, std::move(x)); }

private:
    std::shared_ptr<const TimeScale> ts_;
    GridSamples x_;
    GridSamples x_sigma_;
    GridSamples x_delta_;
};

/// Values of one integrand and its partials sampled along a trajectory on [a,b)^kappa.
struct IntegrandSamples {
    std::vector<double> f, fy, fv;
    std::vector<double> fyy, fyv, fvv;  // filled on request only
};

class CompositeFunctional {
public:
    CompositeFunctional(std::vector<Expr> inner, Expr outer) : inner_(std::move(inner)), outer_(std::move(outer)) {
        if (inner_.empty()) {
            throw Error(ErrorCode::InvalidArgument, "composite functional needs at least one integrand");
        }
        if (outer_.vars().size() != inner_.size()) {
            throw Error(ErrorCode::InvalidArgument, "outer map takes " + std::to_string(outer_.vars().size()) +
                                                        " arguments but " + std::to_string(inner_.size()) +
                                                        " integrands are given");
        }
        for (const auto& f : inner_) {
            if (!(f.vars() == integrand_vars())) {
                throw Error(ErrorCode::InvalidArgument, "integrands must be expressions over (t, y, v)");
            }
            auto fy = f.diff("y");
            auto fv = f.diff("v");
            partials_.push_back({fy, fv, fy.diff("y"), fy.diff("v"), fv.diff("v")});
        }
        const std::size_t n = inner_.size();
        for (std::size_t i = 0; i < n; ++i) {
            outer_grad_.push_back(outer_.diff(i));
        }
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = 0; j < n; ++j) {
                outer_hess_.push_back(outer_grad_[i].diff(j));
            }
        }
    }

    /// H over u1..un, integrands over (t, y, v).
    static CompositeFunctional parse(std::string_view outer, const std::vector<std::string>& inner) {
        std::vector<Expr> fs;
        for (const auto& s : inner) {
            fs.push_back(Expr::parse(s, integrand_vars()));
        }
        return CompositeFunctional(std::move(fs), Expr::parse(outer, VarSet::numbered("u", inner.size())));
    }

    std::size_t arity() const { return inner_.size(); }
    const Expr& inner(std::size_t i) const { return inner_[i]; }
    const Expr& outer() const { return outer_; }
    const Expr& f_y(std::size_t i) const { return partials_[i].fy; }
    const Expr& f_v(std::size_t i) const { return partials_[i].fv; }
    const Expr& f_yy(std::size_t i) const { return partials_[i].fyy; }
    const Expr& f_yv(std::size_t i) const { return partials_[i].fyv; }
    const Expr& f_vv(std::size_t i) const { return partials_[i].fvv; }
    const Expr& outer_partial(std::size_t i) const { return outer_grad_[i]; }
    const Expr& outer_second(std::size_t i, std::size_t j) const { return outer_hess_[i * arity() + j]; }

    double outer_value(std::span<const double> u) const { return guarded(outer_, u); }

    std::vector<double> outer_gradient(std::span<const double> u) const {
        std::vector<double> g(arity());
        for (std::size_t i = 0; i < arity(); ++i) g[i] = guarded(outer_grad_[i], u);
        return g;
    }

    /// Row-major n x n.
    std::vector<double> outer_hessian(std::span<const double> u) const {
        std::vector<double> h(arity() * arity());
        for (std::size_t i = 0; i < h.size(); ++i) h[i] = guarded(outer_hess_[i], u);
        return h;
    }

    IntegrandSamples sample(std::size_t k, const Trajectory& tr, bool second_order = false) const {
        const std::size_t m = tr.scale().kappa_count();
        IntegrandSamples s;
        s.f.resize(m);
        s.fy.resize(m);
        s.fv.resize(m);
        if (second_order) {
            s.fyy.resize(m);
            s.fyv.resize(m);
            s.fvv.resize(m);
        }
        const auto& p = partials_[k];
        for (std::size_t i = 0; i < m; ++i) {
            const auto a = tr.args(i);
            s.f[i] = inner_[k].eval(a);
            s.fy[i] = p.fy.eval(a);
            s.fv[i] = p.fv.eval(a);
            if (second_order) {
                s.fyy[i] = p.fyy.eval(a);
                s.fyv[i] = p.fyv.eval(a);
                s.fvv[i] = p.fvv.eval(a);
            }
        }
        return s;
    }

private:
    struct Partials {
        Expr fy, fv, fyy, fyv, fvv;
    };

    static double guarded(const Expr& e, std::span<const double> u) {
        try {
            return e.eval(u, EvalOptions{kDenominatorEpsilon});
        } catch (const Error& err) {
            if (err.code() == ErrorCode::DivisionByZero) {
                throw Error(ErrorCode::DenominatorVanished, err.what());
            }
            throw;
        }
    }

    std::vector<Expr> inner_;
    Expr outer_;
    std::vector<Partials> partials_;
    std::vector<Expr> outer_grad_;
    std::vector<Expr> outer_hess_;
};

/// F_k = sum over [a,b) of mu(t) f_k(t, x^sigma, x^Delta), summed left to right.
inline std::vector<double> inner_values(const CompositeFunctional& F, const Trajectory& tr) {
    const TimeScale& ts = tr.scale();
    std::vector<double> out(F.arity(), 0.0);
    for (std::size_t k = 0; k < F.arity(); ++k) {
        double sum = 0.0;
        for (std::size_t i = 0; i < ts.last(); ++i) {
            sum += ts.mu(i) * F.inner(k).eval(tr.args(i));
        }
        out[k] = sum;
    }
    return out;
}

inline double value(const CompositeFunctional& F, const Trajectory& tr) {
    return F.outer_value(inner_values(F, tr));
}

/// sup |x1^sigma - x2^sigma| + sup over [a,b]^kappa of |x1^Delta - x2^Delta|.
inline double c1rd_distance(const Trajectory& a, const Trajectory& b) {
    if (!a.scale().same_points(b.scale())) {
        throw Error(ErrorCode::ScaleMismatch, "trajectories live on different time scales");
    }
    double sup_sigma = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        sup_sigma = std::max(sup_sigma, std::abs(a.x_sigma()[i] - b.x_sigma()[i]));
    }
    double sup_delta = 0.0;
    for (std::size_t i = 0; i < a.x_delta().size(); ++i) {
        sup_delta = std::max(sup_delta, std::abs(a.x_delta()[i] - b.x_delta()[i]));
    }
    return sup_sigma + sup_delta;
}

struct Endpoint {
    std::optional<double> fixed;  // nullopt: free

    static Endpoint free_end() { return {}; }
    static Endpoint fixed_at(double v) {
        if (!std::isfinite(v)) throw Error(ErrorCode::InvalidArgument, "fixed endpoint value must be finite");
        return {v};
    }
    bool is_free() const { return !fixed.has_value(); }
};

struct BoundarySpec {
    Endpoint left;
    Endpoint right;
};

}  // namespace deltavar
