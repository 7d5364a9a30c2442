#pragma once

// Exact Hessian of a composite functional with respect to the trajectory
// samples, kept in factored form:
//
//   d^2 L / dx dx = T + U C U^T
//
// T is tridiagonal (sum_i H'_i times the Hessians of the mu-weighted sums,
// each term coupling only x_j and x_{j+1}), U holds the gradients of the
// inner integrals F_i as columns and C = H''. Newton systems built on it are
// solved through a sparse augmented system in (step, U^T step), which never
// forms the dense matrix.

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <Eigen/SparseLU>
#include <algorithm>
#include <cmath>
#include <functional>
#include <memory>
#include <limits>
#include <optional>
#include <vector>

#include "deltavar/euler_lagrange.hpp"
#include "deltavar/functional.hpp"

namespace deltavar::detail {

struct SecondVariation {
    double value = 0.0;
    std::vector<double> inner;  // F_i
    Eigen::VectorXd gradient;   // restricted to the decision range
    Eigen::VectorXd diag;       // T, restricted
    Eigen::VectorXd off;        // T super-diagonal, restricted
    Eigen::MatrixXd U;          // decision x arity
    Eigen::MatrixXd C;          // arity x arity
    Eigen::VectorXd outer_grad; // H'
};

inline SecondVariation second_variation(const CompositeFunctional& F, const Trajectory& tr, std::size_t lo,
                                        std::size_t hi) {
    const TimeScale& ts = tr.scale();
    const std::size_t N = ts.size();
    const std::size_t n = F.arity();
    const auto lin = linearize(F, tr, true);

    SecondVariation sv;
    sv.inner = lin.inner;
    sv.value = F.outer_value(lin.inner);
    const auto hess = F.outer_hessian(lin.inner);

    Eigen::VectorXd diag = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(N));
    Eigen::VectorXd off = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(N - 1));
    Eigen::MatrixXd grads = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(N), static_cast<Eigen::Index>(n));
    for (std::size_t k = 0; k < n; ++k) {
        const auto& s = lin.samples[k];
        const double hk = lin.outer_grad[k];
        const auto col = static_cast<Eigen::Index>(k);
        for (std::size_t i = 0; i < ts.last(); ++i) {
            const auto r = static_cast<Eigen::Index>(i);
            const double mu = ts.mu(i);
            grads(r, col) -= s.fv[i];
            grads(r + 1, col) += mu * s.fy[i] + s.fv[i];
            diag(r) += hk * s.fvv[i] / mu;
            off(r) -= hk * (s.fyv[i] + s.fvv[i] / mu);
            diag(r + 1) += hk * (mu * s.fyy[i] + 2.0 * s.fyv[i] + s.fvv[i] / mu);
        }
    }

    const auto b = static_cast<Eigen::Index>(lo);
    const auto d = static_cast<Eigen::Index>(hi - lo);
    Eigen::VectorXd outer_grad = Eigen::Map<const Eigen::VectorXd>(lin.outer_grad.data(), static_cast<Eigen::Index>(n));
    sv.gradient = (grads * outer_grad).segment(b, d);
    sv.diag = diag.segment(b, d);
    sv.off = d > 1 ? Eigen::VectorXd(off.segment(b, d - 1)) : Eigen::VectorXd();
    sv.U = grads.middleRows(b, d);
    sv.outer_grad = outer_grad;
    sv.C = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
        hess.data(), static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
    return sv;
}

/// Low-rank block U C V^T in the x-rows; V defaults to U.
struct LowRankTerm {
    const Eigen::MatrixXd* U;
    Eigen::MatrixXd C;
    const Eigen::MatrixXd* V = nullptr;
};

/// Extra unknown nu: adds `column * nu` to the x-rows and the row `row^T s`.
struct BorderTerm {
    Eigen::VectorXd column;
    Eigen::VectorXd row;
};

struct LinearSolve {
    Eigen::VectorXd step;
    Eigen::VectorXd border;  // solved border unknowns
    bool damped = false;
};

/// LU with partial pivoting of a symmetric tridiagonal matrix (diag, off).
class TridiagonalLU {
public:
    TridiagonalLU(const Eigen::VectorXd& diag, const Eigen::VectorXd& off) {
        const Eigen::Index n = diag.size();
        d_ = diag;
        du_ = Eigen::VectorXd::Zero(std::max<Eigen::Index>(n - 1, 0));
        dl_ = du_;
        du2_ = Eigen::VectorXd::Zero(std::max<Eigen::Index>(n - 2, 0));
        swap_.assign(static_cast<std::size_t>(n), false);
        if (n > 1) {
            du_ = off;
            dl_ = off;
        }
        for (Eigen::Index i = 0; i + 1 < n; ++i) {
            if (std::abs(d_(i)) >= std::abs(dl_(i))) {
                if (d_(i) == 0.0) return;
                const double f = dl_(i) / d_(i);
                dl_(i) = f;
                d_(i + 1) -= f * du_(i);
            } else {
                const double f = d_(i) / dl_(i);
                d_(i) = dl_(i);
                dl_(i) = f;
                const double t = du_(i);
                du_(i) = d_(i + 1);
                d_(i + 1) = t - f * d_(i + 1);
                if (i + 2 < n) {
                    du2_(i) = du_(i + 1);
                    du_(i + 1) = -f * du2_(i);
                }
                swap_[static_cast<std::size_t>(i)] = true;
            }
        }
        ok_ = n > 0 && d_(n - 1) != 0.0 && d_.allFinite();
    }

    bool ok() const { return ok_; }

    template <typename Derived>
    void solve_in_place(Eigen::MatrixBase<Derived>& b) const {
        const Eigen::Index n = d_.size();
        for (Eigen::Index i = 0; i + 1 < n; ++i) {
            if (swap_[static_cast<std::size_t>(i)]) b.row(i).swap(b.row(i + 1));
            b.row(i + 1) -= dl_(i) * b.row(i);
        }
        for (Eigen::Index i = n - 1; i >= 0; --i) {
            if (i + 1 < n) b.row(i) -= du_(i) * b.row(i + 1);
            if (i + 2 < n) b.row(i) -= du2_(i) * b.row(i + 2);
            b.row(i) /= d_(i);
        }
    }

private:
    Eigen::VectorXd d_, du_, dl_, du2_;
    std::vector<bool> swap_;
    bool ok_ = false;
};

/// Solves the bordered system
///
///   (T + sum U C V^T) s + sum column nu = rhs_x,   row^T s = rhs_border
///
/// in the augmented unknowns (s, V^T s, nu). The fast path eliminates the
/// tridiagonal block and solves a small Schur complement; it is checked by its
/// residual and otherwise replaced by a sparse LU of the whole system. Falls
/// back to T + delta I when both fail or the estimated condition number
/// exceeds 1e12.
class AugmentedSystem {
public:
    static constexpr double kConditionLimit = 1e12;
    static constexpr double kDamping = 1e-3;

    AugmentedSystem(Eigen::VectorXd diag, Eigen::VectorXd off, std::vector<LowRankTerm> low_rank,
                    std::vector<BorderTerm> borders)
        : diag_(std::move(diag)), off_(std::move(off)) {
        const Eigen::Index D = diag_.size();
        Eigen::Index m = static_cast<Eigen::Index>(borders.size());
        for (const auto& l : low_rank) m += l.C.rows();
        W_ = Eigen::MatrixXd::Zero(D, m);
        M_ = Eigen::MatrixXd::Zero(D, m);
        E_ = Eigen::VectorXd::Zero(m);
        Eigen::Index at = 0;
        for (const auto& l : low_rank) {
            const Eigen::Index r = l.C.rows();
            W_.middleCols(at, r) = (*l.U) * l.C;
            M_.middleCols(at, r) = l.V ? *l.V : *l.U;
            E_.segment(at, r).setConstant(-1.0);
            at += r;
        }
        borders_ = static_cast<Eigen::Index>(borders.size());
        for (const auto& b : borders) {
            W_.col(at) = b.column;
            M_.col(at) = b.row;
            ++at;
        }
    }

    std::optional<LinearSolve> solve(const Eigen::VectorXd& rhs_x, const Eigen::VectorXd& rhs_border) const {
        if (auto s = attempt(rhs_x, rhs_border, 0.0, true)) return s;
        const double scale = std::max(diag_.cwiseAbs().maxCoeff(), 1.0);
        auto s = attempt(rhs_x, rhs_border, kDamping * scale, false);
        if (s) s->damped = true;
        return s;
    }

private:
    using Solver = std::function<Eigen::VectorXd(const Eigen::VectorXd&)>;

    Eigen::Index extra() const { return E_.size(); }

    Eigen::VectorXd apply(const Eigen::VectorXd& v, double delta) const {
        const Eigen::Index D = diag_.size();
        const auto s = v.head(D);
        const auto y = v.tail(extra());
        Eigen::VectorXd out(v.size());
        Eigen::VectorXd ts = (diag_.array() + delta).matrix().cwiseProduct(s);
        if (D > 1) {
            ts.head(D - 1) += off_.cwiseProduct(s.tail(D - 1));
            ts.tail(D - 1) += off_.cwiseProduct(s.head(D - 1));
        }
        out.head(D) = ts + W_ * y;
        out.tail(extra()) = M_.transpose() * s + E_.cwiseProduct(y);
        return out;
    }

    double norm1(double delta) const {
        const Eigen::Index D = diag_.size();
        double best = 0.0;
        for (Eigen::Index j = 0; j < D; ++j) {
            double c = std::abs(diag_(j) + delta) + M_.row(j).cwiseAbs().sum();
            if (j > 0) c += std::abs(off_(j - 1));
            if (j + 1 < D) c += std::abs(off_(j));
            best = std::max(best, c);
        }
        for (Eigen::Index c = 0; c < extra(); ++c) best = std::max(best, W_.col(c).cwiseAbs().sum() + std::abs(E_(c)));
        return best;
    }

    std::optional<Solver> fast_solver(double delta) const {
        auto lu = std::make_shared<TridiagonalLU>((diag_.array() + delta).matrix(), off_);
        if (!lu->ok()) return std::nullopt;
        const Eigen::Index D = diag_.size();
        auto tw = std::make_shared<Eigen::MatrixXd>(W_);
        lu->solve_in_place(*tw);
        if (!tw->allFinite()) return std::nullopt;
        Eigen::MatrixXd S = E_.asDiagonal();
        S -= M_.transpose() * (*tw);
        auto schur = std::make_shared<Eigen::FullPivLU<Eigen::MatrixXd>>(S);
        if (extra() > 0 && !schur->isInvertible()) return std::nullopt;
        return Solver([=, this](const Eigen::VectorXd& b) {
            Eigen::VectorXd s = b.head(D);
            lu->solve_in_place(s);
            Eigen::VectorXd out(b.size());
            if (extra() > 0) {
                const Eigen::VectorXd y = schur->solve(b.tail(extra()) - M_.transpose() * s);
                out.head(D) = s - (*tw) * y;
                out.tail(extra()) = y;
            } else {
                out = s;
            }
            return out;
        });
    }

    std::optional<Solver> sparse_solver(double delta) const {
        const Eigen::Index D = diag_.size();
        const Eigen::Index total = D + extra();
        std::vector<Eigen::Triplet<double>> trip;
        for (Eigen::Index i = 0; i < D; ++i) {
            trip.emplace_back(i, i, diag_(i) + delta);
            if (i + 1 < D) {
                trip.emplace_back(i, i + 1, off_(i));
                trip.emplace_back(i + 1, i, off_(i));
            }
        }
        for (Eigen::Index c = 0; c < extra(); ++c) {
            for (Eigen::Index i = 0; i < D; ++i) {
                if (W_(i, c) != 0.0) trip.emplace_back(i, D + c, W_(i, c));
                if (M_(i, c) != 0.0) trip.emplace_back(D + c, i, M_(i, c));
            }
            if (E_(c) != 0.0) trip.emplace_back(D + c, D + c, E_(c));
        }
        Eigen::SparseMatrix<double> A(total, total);
        A.setFromTriplets(trip.begin(), trip.end());
        A.makeCompressed();
        auto lu = std::make_shared<Eigen::SparseLU<Eigen::SparseMatrix<double>>>();
        lu->analyzePattern(A);
        lu->factorize(A);
        if (lu->info() != Eigen::Success) return std::nullopt;
        return Solver([lu](const Eigen::VectorXd& b) -> Eigen::VectorXd { return lu->solve(b); });
    }

    /// One step of iterative refinement, then a normwise backward-error check.
    std::optional<Eigen::VectorXd> checked(const Solver& inv, const Eigen::VectorXd& rhs, double delta,
                                           double anorm) const {
        Eigen::VectorXd sol = inv(rhs);
        if (!sol.allFinite()) return std::nullopt;
        sol -= inv(apply(sol, delta) - rhs);
        if (!sol.allFinite()) return std::nullopt;
        const double r = (apply(sol, delta) - rhs).lpNorm<Eigen::Infinity>();
        const double scale = anorm * sol.lpNorm<Eigen::Infinity>() + rhs.lpNorm<Eigen::Infinity>();
        if (r > 1e-10 * scale) return std::nullopt;
        return sol;
    }

    std::optional<LinearSolve> attempt(const Eigen::VectorXd& rhs_x, const Eigen::VectorXd& rhs_border, double delta,
                                       bool check_condition) const {
        const Eigen::Index D = diag_.size();
        Eigen::VectorXd rhs = Eigen::VectorXd::Zero(D + extra());
        rhs.head(D) = rhs_x;
        if (borders_ > 0) rhs.tail(borders_) = rhs_border;
        const double anorm = norm1(delta);

        std::optional<Eigen::VectorXd> sol;
        std::optional<Solver> inv = fast_solver(delta);
        if (inv) sol = checked(*inv, rhs, delta, anorm);
        if (!sol) {
            inv = sparse_solver(delta);
            if (inv) sol = checked(*inv, rhs, delta, anorm);
        }
        if (!sol) return std::nullopt;
        if (check_condition && anorm * inverse_norm_estimate(*inv, D + extra()) > kConditionLimit) {
            return std::nullopt;
        }

        LinearSolve out;
        out.step = sol->head(D);
        out.border = sol->tail(borders_);
        return out;
    }

    /// Power-iteration estimate of ||A^{-1}||_2.
    static double inverse_norm_estimate(const Solver& inv, Eigen::Index n) {
        Eigen::VectorXd v(n);
        for (Eigen::Index i = 0; i < n; ++i) v(i) = 1.0 + 0.1 * static_cast<double>(i % 7);
        v.normalize();
        double best = 0.0;
        for (int it = 0; it < 4; ++it) {
            Eigen::VectorXd w = inv(v);
            const double nw = w.norm();
            if (!std::isfinite(nw)) return std::numeric_limits<double>::infinity();
            best = std::max(best, nw);
            if (nw == 0.0) break;
            v = w / nw;
        }
        return best;
    }

    Eigen::VectorXd diag_;
    Eigen::VectorXd off_;
    Eigen::MatrixXd W_;  // columns entering the x-rows
    Eigen::MatrixXd M_;  // rows coupling s into the extra equations
    Eigen::VectorXd E_;  // -1 for low-rank unknowns, 0 for borders
    Eigen::Index borders_ = 0;
};

}  // namespace deltavar::detail
