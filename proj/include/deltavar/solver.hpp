#pragma once

// Stationary trajectories of composite functionals: multi-start Newton on the
// exact gradient (fixed or free ends), Newton on the multiplier system for
// isoperimetric problems, normal/abnormal labelling, and an advisory
// min/max/saddle classification from a finite-difference Hessian.

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <functional>
#include <numbers>
#include <optional>
#include <random>
#include <string>
#include <thread>
#include <vector>

#include "deltavar/error.hpp"
#include "deltavar/euler_lagrange.hpp"
#include "deltavar/functional.hpp"
#include "deltavar/second_variation.hpp"

namespace deltavar {

struct SolveOptions {
    int restarts = 64;
    std::uint64_t seed = 0;
    double tol_residual = 1e-9;
    double tol_step = 1e-12;
    int max_iters = 100;
    double init_spread = 1.0;
    double dedup_distance = 1e-6;
    double tol_abnormal = 1e-8;
    unsigned threads = 1;
    bool classify = true;

    void validate() const {
        if (restarts < 1 || max_iters < 1 || threads < 1) {
            throw Error(ErrorCode::InvalidArgument, "restarts, max_iters and threads must be positive");
        }
        if (!(tol_residual > 0) || !(tol_step > 0) || !(dedup_distance > 0) || !(tol_abnormal > 0) ||
            !(init_spread >= 0)) {
            throw Error(ErrorCode::InvalidArgument, "tolerances must be positive");
        }
    }
};

enum class Classification { LocalMin, LocalMax, Saddle, Degenerate, Unclassified };

inline std::string to_string(Classification c) {
    switch (c) {
        case Classification::LocalMin: return "local_min";
        case Classification::LocalMax: return "local_max";
        case Classification::Saddle: return "saddle";
        case Classification::Degenerate: return "degenerate";
        case Classification::Unclassified: return "unclassified";
    }
    return "unclassified";
}

struct StationaryPoint {
    Trajectory trajectory;
    double value = 0.0;
    std::vector<double> inner;             // F_i (the Q's)
    std::vector<double> constraint_inner;  // G_j, constrained problems only
    double lambda = 0.0;
    int lambda0 = 1;
    double residual = 0.0;  // max-norm of the stationarity conditions
    ResidualReport report;
    Classification classification = Classification::Unclassified;
    int basin_count = 0;
    bool scale_invariant = false;  // solved modulo x -> c x

    bool normal() const { return lambda0 == 1; }
};

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

/// Linear interpolation of the boundary data plus a smooth Gaussian
/// perturbation: random low sine modes, and random linear ramps at free ends.
inline std::vector<double> initial_decision(const ProblemSpec& spec, const SolveOptions& opts, int restart) {
    const TimeScale& ts = spec.scale();
    const auto& bc = spec.boundary();
    const double xa = bc.left.fixed.value_or(bc.right.fixed.value_or(0.0));
    const double xb = bc.right.fixed.value_or(xa);
    const double scale = opts.init_spread * (1.0 + std::abs(xa) + std::abs(xb));

    std::mt19937_64 rng(splitmix64(opts.seed ^ splitmix64(static_cast<std::uint64_t>(restart) + 1)));
    std::normal_distribution<double> normal(0.0, 1.0);
    constexpr int kModes = 4;
    double coeff[kModes];
    for (double& c : coeff) c = normal(rng);
    const double ramp_a = bc.left.is_free() ? normal(rng) : 0.0;
    const double ramp_b = bc.right.is_free() ? normal(rng) : 0.0;

    std::vector<double> out;
    for (std::size_t i = spec.decision_begin(); i < spec.decision_end(); ++i) {
        const double s = (ts[i] - ts.a()) / (ts.b() - ts.a());
        double p = ramp_a * (1.0 - s) + ramp_b * s;
        for (int k = 0; k < kModes; ++k) {
            p += coeff[k] / (k + 1) * std::sin((k + 1) * std::numbers::pi * s);
        }
        out.push_back(xa + (xb - xa) * s + scale * p);
    }
    return out;
}

/// Interior rows of a gradient are mu(t_{j-1}) times an EL residual; endpoint
/// rows are natural boundary residuals.
inline std::vector<double> residual_weights(const ProblemSpec& spec) {
    const TimeScale& ts = spec.scale();
    std::vector<double> w;
    for (std::size_t j = spec.decision_begin(); j < spec.decision_end(); ++j) {
        w.push_back(j == 0 || j == ts.last() ? 1.0 : ts.mu(j - 1));
    }
    return w;
}

/// Stationary set is invariant under x -> c x: both ends pinned at zero and
/// the functional is homogeneous of degree zero.
inline bool is_scale_invariant(const ProblemSpec& spec) {
    const auto& bc = spec.boundary();
    if (spec.constraint() || !bc.left.fixed || !bc.right.fixed || *bc.left.fixed != 0.0 || *bc.right.fixed != 0.0) {
        return false;
    }
    SolveOptions probe;
    try {
        for (int r = 0; r < 2; ++r) {
            auto d = initial_decision(spec, probe, 1000 + r);
            const double v = value(spec.functional(), spec.trajectory_from(d));
            for (double c : {2.5, -0.75}) {
                std::vector<double> scaled(d);
                for (double& e : scaled) e *= c;
                const double vc = value(spec.functional(), spec.trajectory_from(scaled));
                if (std::abs(vc - v) > 1e-10 * (1.0 + std::abs(v))) return false;
            }
        }
    } catch (const Error&) {
        return false;
    }
    return true;
}

/// sqrt(integral of (x^sigma)^2) for a decision vector with both ends at zero.
inline double gauge_norm(const ProblemSpec& spec, const std::vector<double>& d) {
    const TimeScale& ts = spec.scale();
    double s = 0.0;
    for (std::size_t j = 0; j < d.size(); ++j) {
        s += ts.mu(j) * d[j] * d[j];  // decision j is sample j + 1 = sigma(t_j)
    }
    return std::sqrt(s);
}

inline void gauge_normalize(const ProblemSpec& spec, std::vector<double>& d) {
    const double n = gauge_norm(spec, d);
    if (n > 0.0 && std::isfinite(n)) {
        std::size_t big = 0;
        for (std::size_t j = 0; j < d.size(); ++j) {
            if (std::abs(d[j]) > std::abs(d[big])) big = j;
        }
        const double sign = d[big] < 0.0 ? -1.0 : 1.0;
        for (double& e : d) e *= sign / n;
    }
}

enum class Failure { None, Diverged, DenominatorVanished, Infeasible };

struct RestartOutcome {
    std::optional<std::vector<double>> decision;
    double lambda = 0.0;
    int lambda0 = 1;
    double residual = std::numeric_limits<double>::infinity();  // last residual reached
    Failure failure = Failure::None;
    double best_violation = std::numeric_limits<double>::infinity();
};

/// Residual of the Newton system at an iterate; `scaled` is in EL units.
/// Unconstrained problems run Newton on w(F) G with w = sqrt(1 + |F|^2) / |H'(F)|.
/// Same roots as G, but the weighted system grows at large amplitude where G
/// itself decays (quotients of integrals), so Newton contracts instead of
/// running off to infinity.
struct SystemEval {
    Eigen::VectorXd G;
    Eigen::VectorXd inner;       // F
    Eigen::VectorXd outer_grad;  // H'(F)
    double weight = 1.0;
    double merit = 0.0;
    double scaled = 0.0;
};

class NewtonDriver {
public:
    NewtonDriver(const ProblemSpec& spec, const SolveOptions& opts)
        : spec_(spec), opts_(opts), weights_(residual_weights(spec)), gauge_(is_scale_invariant(spec)) {}

    bool gauge() const { return gauge_; }

    RestartOutcome run(int restart) const {
        RestartOutcome out;
        auto d = initial_decision(spec_, opts_, restart);
        if (gauge_) gauge_normalize(spec_, d);
        if (spec_.constraint()) {
            run_isoperimetric(d, out);
        } else {
            run_unconstrained(d, out);
        }
        return out;
    }

private:
    using Iterate = Eigen::VectorXd;  // decision samples, then lambda when constrained

    std::vector<double> decision_of(const Iterate& u) const {
        const auto D = static_cast<Eigen::Index>(spec_.decision_count());
        return {u.data(), u.data() + D};
    }

    SystemEval evaluate(const Iterate& u) const {
        const auto d = decision_of(u);
        const Trajectory tr = spec_.trajectory_from(d);
        SystemEval ev;
        const auto g = functional_gradient(spec_, tr);
        const auto D = static_cast<Eigen::Index>(d.size());
        const auto& F = spec_.functional();
        const auto f = inner_values(F, tr);
        const auto hp = F.outer_gradient(f);
        ev.inner = Eigen::Map<const Eigen::VectorXd>(f.data(), static_cast<Eigen::Index>(f.size()));
        ev.outer_grad = Eigen::Map<const Eigen::VectorXd>(hp.data(), static_cast<Eigen::Index>(hp.size()));
        const double hn = ev.outer_grad.norm();
        ev.weight = hn > 0.0 ? std::sqrt(1.0 + ev.inner.squaredNorm()) / hn : 1.0;

        ev.G.resize(spec_.constraint() ? D + 1 : D);
        ev.G.head(D) = Eigen::Map<const Eigen::VectorXd>(g.data(), D);
        if (spec_.constraint()) {
            const auto& K = *spec_.constraint();
            const auto gk = functional_gradient(spec_, K.functional, tr);
            const double lambda = u(D);
            for (Eigen::Index j = 0; j < D; ++j) ev.G(j) -= lambda * gk[static_cast<std::size_t>(j)];
            ev.G(D) = value(K.functional, tr) - K.level;
        }
        if (!ev.G.allFinite() || !std::isfinite(ev.weight)) throw Error(ErrorCode::DomainError, "non-finite residual");
        ev.merit = 0.5 * ev.G.head(D).squaredNorm() * ev.weight * ev.weight;
        for (Eigen::Index j = 0; j < D; ++j) {
            ev.scaled = std::max(ev.scaled, std::abs(ev.G(j)) / weights_[static_cast<std::size_t>(j)]);
        }
        // G decays like |H'| far out; convergence is judged relative to it as well.
        if (hn > 0.0) ev.scaled *= std::max(1.0, 1.0 / hn);
        if (spec_.constraint()) {
            ev.merit += 0.5 * ev.G(D) * ev.G(D);
            ev.scaled = std::max(ev.scaled, std::abs(ev.G(D)));
        }
        return ev;
    }

    std::optional<Eigen::VectorXd> newton_step(const Iterate& u, const SystemEval& ev) const {
        const auto d = decision_of(u);
        const Trajectory tr = spec_.trajectory_from(d);
        const std::size_t lo = spec_.decision_begin(), hi = spec_.decision_end();
        const auto sv = second_variation(spec_.functional(), tr, lo, hi);
        const auto D = static_cast<Eigen::Index>(d.size());

        // Rows of w G_x: (J + G_x grad(w)^T / w) s = -G_x after dividing by w, with
        // grad(w) / w = U (F / (1 + |F|^2) - C H' / |H'|^2).
        const Eigen::MatrixXd left = ev.G.head(D);
        const double hn2 = ev.outer_grad.squaredNorm();
        Eigen::VectorXd dlogw = ev.inner / (1.0 + ev.inner.squaredNorm());
        if (hn2 > 0.0) dlogw -= sv.C * ev.outer_grad / hn2;
        const Eigen::MatrixXd right = sv.U * dlogw;
        std::vector<LowRankTerm> terms{{&sv.U, sv.C}};
        if (right.allFinite() && right.norm() > 0.0) terms.push_back({&left, Eigen::MatrixXd::Identity(1, 1), &right});

        if (!spec_.constraint()) {
            std::vector<BorderTerm> borders;
            if (gauge_) borders.push_back({u.head(D), u.head(D)});
            AugmentedSystem sys(sv.diag, sv.off, std::move(terms), std::move(borders));
            auto sol = sys.solve(-ev.G, Eigen::VectorXd::Zero(gauge_ ? 1 : 0));
            if (!sol) return std::nullopt;
            return sol->step;
        }
        const auto& K = *spec_.constraint();
        const auto svk = second_variation(K.functional, tr, lo, hi);
        const double lambda = u(D);
        Eigen::VectorXd diag = sv.diag - lambda * svk.diag;
        Eigen::VectorXd off = sv.off - lambda * svk.off;
        terms.push_back({&svk.U, -lambda * svk.C});
        BorderTerm border{-svk.gradient, svk.gradient};
        AugmentedSystem sys(std::move(diag), std::move(off), std::move(terms), {border});
        Eigen::VectorXd rhs_border(1);
        rhs_border(0) = -ev.G(D);
        auto sol = sys.solve(-ev.G.head(D), rhs_border);
        if (!sol) return std::nullopt;
        Eigen::VectorXd step(D + 1);
        step.head(D) = sol->step;
        step(D) = sol->border(0);
        return step;
    }

    void normalize(Iterate& u) const {
        if (!gauge_) return;
        auto d = decision_of(u);
        gauge_normalize(spec_, d);
        u.head(static_cast<Eigen::Index>(d.size())) =
            Eigen::Map<const Eigen::VectorXd>(d.data(), static_cast<Eigen::Index>(d.size()));
    }

    /// Damped Newton with backtracking on 0.5 ||G||^2. Returns the final
    /// iterate and whether it met tol_residual.
    bool iterate(Iterate& u, SystemEval& ev, Failure& failure) const {
        try {
            ev = evaluate(u);
        } catch (const Error& e) {
            failure = e.code() == ErrorCode::DenominatorVanished ? Failure::DenominatorVanished : Failure::Diverged;
            return false;
        }
        constexpr int kStallWindow = 10;
        std::vector<double> history;
        for (int it = 0; it < opts_.max_iters; ++it) {
            if (ev.scaled <= opts_.tol_residual) {
                polish(u, ev);
                return true;
            }
            history.push_back(ev.merit);
            if (it >= kStallWindow && ev.merit > 0.9 * history[history.size() - 1 - kStallWindow]) {
                failure = Failure::Diverged;
                return false;
            }
            std::optional<Eigen::VectorXd> step;
            try {
                step = newton_step(u, ev);
            } catch (const Error& e) {
                failure = e.code() == ErrorCode::DenominatorVanished ? Failure::DenominatorVanished : Failure::Diverged;
                return false;
            }
            if (!step) {
                failure = Failure::Diverged;
                return false;
            }
            double alpha = 1.0;
            bool accepted = false;
            while (alpha >= 1e-10) {
                Iterate trial = u + alpha * *step;
                normalize(trial);
                try {
                    SystemEval tev = evaluate(trial);
                    if (tev.merit <= (1.0 - 2e-4 * alpha) * ev.merit) {
                        const double moved = (trial - u).lpNorm<Eigen::Infinity>();
                        u = std::move(trial);
                        ev = std::move(tev);
                        accepted = true;
                        if (moved <= opts_.tol_step * (1.0 + u.lpNorm<Eigen::Infinity>()) &&
                            ev.scaled > opts_.tol_residual) {
                            failure = Failure::Diverged;
                            return false;
                        }
                        break;
                    }
                } catch (const Error&) {
                    // outside the domain of H or an integrand: shorten the step
                }
                alpha *= 0.5;
            }
            if (!accepted) {
                failure = Failure::Diverged;
                return false;
            }
        }
        if (ev.scaled <= opts_.tol_residual) {
            polish(u, ev);
            return true;
        }
        failure = Failure::Diverged;
        return false;
    }

    /// A few extra full Newton steps, kept only while they reduce the residual.
    void polish(Iterate& u, SystemEval& ev) const {
        for (int k = 0; k < 3; ++k) {
            try {
                auto step = newton_step(u, ev);
                if (!step) return;
                Iterate trial = u + *step;
                normalize(trial);
                SystemEval tev = evaluate(trial);
                if (!(tev.scaled < ev.scaled)) return;
                u = std::move(trial);
                ev = std::move(tev);
            } catch (const Error&) {
                return;
            }
        }
    }

    void run_unconstrained(const std::vector<double>& d0, RestartOutcome& out) const {
        Iterate u = Eigen::Map<const Eigen::VectorXd>(d0.data(), static_cast<Eigen::Index>(d0.size()));
        SystemEval ev;
        Failure failure = Failure::None;
        const bool ok = iterate(u, ev, failure);
        if (ev.G.size() > 0) out.residual = ev.scaled;
        if (ok) {
            out.decision = decision_of(u);
        } else {
            out.failure = failure;
        }
    }

    void run_isoperimetric(const std::vector<double>& d0, RestartOutcome& out) const {
        const auto D = static_cast<Eigen::Index>(d0.size());
        const auto& K = *spec_.constraint();
        Iterate u(D + 1);
        u.head(D) = Eigen::Map<const Eigen::VectorXd>(d0.data(), D);
        try {
            const Trajectory tr = spec_.trajectory_from(d0);
            const auto g = functional_gradient(spec_, tr);
            const auto gk = functional_gradient(spec_, K.functional, tr);
            double num = 0.0, den = 0.0;
            for (std::size_t j = 0; j < g.size(); ++j) {
                num += g[j] * gk[j];
                den += gk[j] * gk[j];
            }
            u(D) = den > 0.0 ? num / den : 0.0;
        } catch (const Error& e) {
            out.failure = e.code() == ErrorCode::DenominatorVanished ? Failure::DenominatorVanished : Failure::Diverged;
            return;
        }

        SystemEval ev;
        Failure failure = Failure::None;
        const bool ok = iterate(u, ev, failure);
        if (ev.G.size() == D + 1) {
            out.best_violation = std::abs(ev.G(D));
            out.residual = ev.scaled;
        }
        if (ok) {
            out.decision = decision_of(u);
            out.lambda = u(D);
        } else {
            out.failure = failure;
        }

        // Abnormal branch: the candidate is (nearly) an extremal of K.
        try {
            const Trajectory tr = spec_.trajectory_from(decision_of(u));
            const auto gk = functional_gradient(spec_, K.functional, tr);
            if (max_abs(gk) < opts_.tol_abnormal) {
                RestartOutcome abnormal = run_abnormal(decision_of(u));
                if (abnormal.decision) {
                    out = std::move(abnormal);
                }
            }
        } catch (const Error&) {
        }
    }

    /// Gauss-Newton on [grad K = 0; K - k = 0].
    RestartOutcome run_abnormal(std::vector<double> d) const {
        RestartOutcome out;
        out.lambda0 = 0;
        out.lambda = 1.0;
        const auto& K = *spec_.constraint();
        const std::size_t lo = spec_.decision_begin(), hi = spec_.decision_end();
        const auto D = static_cast<Eigen::Index>(d.size());
        for (int it = 0; it < opts_.max_iters; ++it) {
            const Trajectory tr = spec_.trajectory_from(d);
            const auto sv = second_variation(K.functional, tr, lo, hi);
            Eigen::VectorXd r(D + 1);
            r.head(D) = sv.gradient;
            r(D) = sv.value - K.level;
            double scaled = std::abs(r(D));
            for (Eigen::Index j = 0; j < D; ++j) {
                scaled = std::max(scaled, std::abs(r(j)) / weights_[static_cast<std::size_t>(j)]);
            }
            if (scaled <= opts_.tol_residual) {
                out.decision = d;
                out.residual = scaled;
                return out;
            }
            Eigen::MatrixXd J = Eigen::MatrixXd::Zero(D + 1, D);
            for (Eigen::Index j = 0; j < D; ++j) {
                J(j, j) = sv.diag(j);
                if (j + 1 < D) {
                    J(j, j + 1) = sv.off(j);
                    J(j + 1, j) = sv.off(j);
                }
            }
            J.topRows(D) += sv.U * sv.C * sv.U.transpose();
            J.row(D) = sv.gradient.transpose();
            const Eigen::VectorXd step = J.colPivHouseholderQr().solve(-r);
            if (!step.allFinite() || step.lpNorm<Eigen::Infinity>() <= opts_.tol_step) break;
            for (Eigen::Index j = 0; j < D; ++j) d[static_cast<std::size_t>(j)] += step(j);
        }
        out.failure = Failure::Diverged;
        return out;
    }

    const ProblemSpec& spec_;
    const SolveOptions& opts_;
    std::vector<double> weights_;
    bool gauge_;
};

inline bool lexicographic_less(const std::vector<double>& a, const std::vector<double>& b) {
    return std::lexicographical_compare(a.begin(), a.end(), b.begin(), b.end());
}

}  // namespace detail

/// Eigenvalue-sign classification of the finite-difference Hessian of the
/// functional (of the Lagrangian L - lambda K when constrained), restricted
/// to directions that keep the constraint, and the normalization for
/// scale-invariant problems, to first order.
inline Classification classify(const ProblemSpec& spec, const StationaryPoint& point) {
    const auto d0 = spec.decision_vector(point.trajectory);
    const auto D = static_cast<Eigen::Index>(d0.size());
    if (D == 0) return Classification::Degenerate;

    auto lagrangian_gradient = [&](const std::vector<double>& d) {
        const Trajectory tr = spec.trajectory_from(d);
        auto g = functional_gradient(spec, tr);
        if (spec.constraint() && point.lambda != 0.0) {
            const auto gk = functional_gradient(spec, spec.constraint()->functional, tr);
            for (std::size_t j = 0; j < g.size(); ++j) g[j] = point.lambda0 * g[j] - point.lambda * gk[j];
        }
        return Eigen::VectorXd(Eigen::Map<const Eigen::VectorXd>(g.data(), D));
    };

    Eigen::MatrixXd H(D, D);
    try {
        for (Eigen::Index j = 0; j < D; ++j) {
            const double eps = 1e-5 * (1.0 + std::abs(d0[static_cast<std::size_t>(j)]));
            auto plus = d0, minus = d0;
            plus[static_cast<std::size_t>(j)] += eps;
            minus[static_cast<std::size_t>(j)] -= eps;
            H.col(j) = (lagrangian_gradient(plus) - lagrangian_gradient(minus)) / (2.0 * eps);
        }
    } catch (const Error&) {
        return Classification::Unclassified;
    }
    H = 0.5 * (H + H.transpose()).eval();

    // Directions to project out: the constraint normal, or the scaling direction.
    std::optional<Eigen::VectorXd> normal;
    if (spec.constraint()) {
        const auto gk = functional_gradient(spec, spec.constraint()->functional, point.trajectory);
        normal = Eigen::Map<const Eigen::VectorXd>(gk.data(), D);
    } else if (point.scale_invariant) {
        normal = Eigen::Map<const Eigen::VectorXd>(d0.data(), D);
    }
    if (normal && normal->norm() > 0.0) {
        if (D == 1) return Classification::Degenerate;
        Eigen::HouseholderQR<Eigen::MatrixXd> qr(*normal);
        const Eigen::MatrixXd Q = qr.householderQ();
        const Eigen::MatrixXd Z = Q.rightCols(D - 1);
        H = (Z.transpose() * H * Z).eval();
    }

    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(H, Eigen::EigenvaluesOnly);
    if (es.info() != Eigen::Success) return Classification::Unclassified;
    const auto& ev = es.eigenvalues();
    const double norm = ev.cwiseAbs().maxCoeff();
    const double threshold = 1e-6 * norm;
    bool pos = false, neg = false;
    for (Eigen::Index i = 0; i < ev.size(); ++i) {
        if (std::abs(ev(i)) <= threshold) return Classification::Degenerate;
        (ev(i) > 0 ? pos : neg) = true;
    }
    if (pos && neg) return Classification::Saddle;
    return pos ? Classification::LocalMin : Classification::LocalMax;
}

/// Runs every restart, certifies, deduplicates and classifies. Output order
/// depends only on (spec, opts), never on the thread count.
inline std::vector<StationaryPoint> solve(const ProblemSpec& spec, const SolveOptions& opts = {}) {
    opts.validate();
    if (spec.decision_count() == 0) {
        throw Error(ErrorCode::InvalidArgument, "problem has no free samples");
    }
    const detail::NewtonDriver driver(spec, opts);

    std::vector<detail::RestartOutcome> outcomes(static_cast<std::size_t>(opts.restarts));
    const unsigned threads = std::min<unsigned>(opts.threads, static_cast<unsigned>(opts.restarts));
    if (threads <= 1) {
        for (int r = 0; r < opts.restarts; ++r) outcomes[static_cast<std::size_t>(r)] = driver.run(r);
    } else {
        std::vector<std::thread> pool;
        for (unsigned w = 0; w < threads; ++w) {
            pool.emplace_back([&, w] {
                for (int r = static_cast<int>(w); r < opts.restarts; r += static_cast<int>(threads)) {
                    outcomes[static_cast<std::size_t>(r)] = driver.run(r);
                }
            });
        }
        for (auto& t : pool) t.join();
    }

    struct Candidate {
        detail::RestartOutcome outcome;
        Trajectory trajectory;
    };
    std::vector<Candidate> candidates;
    bool any_feasible = false;
    bool all_singular = true;
    double closest = std::numeric_limits<double>::infinity();
    for (auto& o : outcomes) {
        closest = std::min(closest, o.residual);
        if (o.failure != detail::Failure::DenominatorVanished) all_singular = false;
        if (o.best_violation <= opts.tol_residual) any_feasible = true;
        if (!o.decision) continue;
        any_feasible = true;
        Trajectory tr = spec.trajectory_from(*o.decision);
        // Certificate: re-verify through the residual formulas, not the gradient.
        try {
            const auto rep = residual_report(spec, tr, o.lambda0, o.lambda);
            if (rep.worst() > 10.0 * opts.tol_residual) continue;
        } catch (const Error&) {
            continue;
        }
        candidates.push_back({std::move(o), std::move(tr)});
    }

    std::stable_sort(candidates.begin(), candidates.end(), [](const Candidate& a, const Candidate& b) {
        if (a.outcome.residual != b.outcome.residual) return a.outcome.residual < b.outcome.residual;
        return detail::lexicographic_less(a.trajectory.x(), b.trajectory.x());
    });
    std::vector<Candidate> kept;
    std::vector<int> basins;
    for (auto& c : candidates) {
        bool merged = false;
        for (std::size_t k = 0; k < kept.size(); ++k) {
            if (kept[k].outcome.lambda0 == c.outcome.lambda0 &&
                c1rd_distance(kept[k].trajectory, c.trajectory) < opts.dedup_distance) {
                ++basins[k];
                merged = true;
                break;
            }
        }
        if (!merged) {
            kept.push_back(std::move(c));
            basins.push_back(1);
        }
    }

    if (kept.empty()) {
        if (all_singular) {
            throw Error(ErrorCode::DenominatorVanished, "a denominator of the outer map vanished at every restart");
        }
        if (spec.constraint() && !any_feasible) {
            throw Error(ErrorCode::ConstraintInfeasible, "no restart reached K[x] = " +
                                                             std::to_string(spec.constraint()->level));
        }
        std::string msg = "none of " + std::to_string(opts.restarts) + " restarts converged to a stationary point";
        if (std::isfinite(closest)) {
            char buf[32];
            std::snprintf(buf, sizeof buf, "%.3g", closest);
            msg += " (smallest residual reached " + std::string(buf) + ")";
        }
        throw Error(ErrorCode::NoStationaryPointFound, msg);
    }

    std::vector<StationaryPoint> points;
    for (std::size_t k = 0; k < kept.size(); ++k) {
        auto& c = kept[k];
        StationaryPoint p{c.trajectory};
        p.inner = inner_values(spec.functional(), c.trajectory);
        p.value = spec.functional().outer_value(p.inner);
        if (spec.constraint()) p.constraint_inner = inner_values(spec.constraint()->functional, c.trajectory);
        p.lambda = c.outcome.lambda;
        p.lambda0 = c.outcome.lambda0;
        p.residual = c.outcome.residual;
        p.report = residual_report(spec, c.trajectory, p.lambda0, p.lambda);
        p.basin_count = basins[k];
        p.scale_invariant = driver.gauge();
        points.push_back(std::move(p));
    }
    std::sort(points.begin(), points.end(), [](const StationaryPoint& a, const StationaryPoint& b) {
        if (a.lambda0 != b.lambda0) return a.lambda0 > b.lambda0;
        return detail::lexicographic_less(a.trajectory.x(), b.trajectory.x());
    });
    if (opts.classify) {
        for (auto& p : points) p.classification = classify(spec, p);
    }
    return points;
}

inline std::vector<StationaryPoint> solve_unconstrained(const ProblemSpec& spec, const SolveOptions& opts = {}) {
    if (spec.constraint()) throw Error(ErrorCode::InvalidArgument, "problem has an isoperimetric constraint");
    return solve(spec, opts);
}

inline std::vector<StationaryPoint> solve_isoperimetric(const ProblemSpec& spec, const SolveOptions& opts = {}) {
    if (!spec.constraint()) throw Error(ErrorCode::InvalidArgument, "problem has no isoperimetric constraint");
    return solve(spec, opts);
}

struct RefinePoint {
    std::vector<double> inner;
    double value = 0.0;
    std::optional<double> reference_distance;  // max |x(t) - reference(t)|
    std::optional<double> value_error;         // |value - target|
    std::optional<double> order;               // observed convergence order of value
};

struct RefineRow {
    double h = 0.0;
    std::optional<std::string> failure;
    std::vector<RefinePoint> points;  // sorted by value
};

struct RefineTargets {
    std::function<double(double)> reference;  // compared against every point
    std::vector<double> values;               // expected values, ascending, matched by position
};

/// Solves a family of problems over decreasing h and reports how the
/// stationary values approach their limits. Orders come from errors against
/// `targets.values` when given, otherwise from successive differences.
inline std::vector<RefineRow> refine_study(const std::function<ProblemSpec(double)>& family,
                                           const std::vector<double>& h_list, const SolveOptions& opts,
                                           const RefineTargets& targets = {}) {
    for (std::size_t i = 1; i < h_list.size(); ++i) {
        if (!(h_list[i] < h_list[i - 1])) throw Error(ErrorCode::InvalidArgument, "h list must be decreasing");
    }
    std::vector<RefineRow> rows;
    for (double h : h_list) {
        RefineRow row;
        row.h = h;
        try {
            const ProblemSpec spec = family(h);
            auto pts = solve(spec, opts);
            std::sort(pts.begin(), pts.end(),
                      [](const StationaryPoint& a, const StationaryPoint& b) { return a.value < b.value; });
            for (std::size_t k = 0; k < pts.size(); ++k) {
                RefinePoint rp;
                rp.inner = pts[k].inner;
                rp.value = pts[k].value;
                if (targets.reference) {
                    double dist = 0.0;
                    const auto& ts = pts[k].trajectory.scale();
                    for (std::size_t i = 0; i < ts.size(); ++i) {
                        dist = std::max(dist, std::abs(pts[k].trajectory.x()[i] - targets.reference(ts[i])));
                    }
                    rp.reference_distance = dist;
                }
                if (k < targets.values.size()) rp.value_error = std::abs(rp.value - targets.values[k]);
                row.points.push_back(std::move(rp));
            }
        } catch (const Error& e) {
            row.failure = e.what();
        }
        rows.push_back(std::move(row));
    }

    auto order = [](double e_prev, double e_cur, double h_prev, double h_cur) -> std::optional<double> {
        if (!(e_prev > 0.0) || !(e_cur > 0.0)) return std::nullopt;
        return std::log(e_prev / e_cur) / std::log(h_prev / h_cur);
    };
    for (std::size_t r = 1; r < rows.size(); ++r) {
        auto& cur = rows[r];
        const auto& prev = rows[r - 1];
        for (std::size_t k = 0; k < cur.points.size() && k < prev.points.size(); ++k) {
            auto& p = cur.points[k];
            if (p.value_error && prev.points[k].value_error) {
                p.order = order(*prev.points[k].value_error, *p.value_error, prev.h, cur.h);
            } else if (r >= 2 && k < rows[r - 2].points.size()) {
                const double d_prev = std::abs(prev.points[k].value - rows[r - 2].points[k].value);
                const double d_cur = std::abs(p.value - prev.points[k].value);
                p.order = order(d_prev, d_cur, rows[r - 2].h, prev.h);
            }
        }
    }
    return rows;
}

}  // namespace deltavar
