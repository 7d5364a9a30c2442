#pragma once

// Bounded time scales realized as finite, strictly increasing point sets,
// with the jump operators, graininess, delta derivative and delta integral.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "deltavar/error.hpp"

namespace deltavar {

enum class Provenance { Finite, Uniform, QScale, Union, DiscretizedInterval };

inline std::string to_string(Provenance p) {
    switch (p) {
        case Provenance::Finite: return "finite";
        case Provenance::Uniform: return "uniform";
        case Provenance::QScale: return "qscale";
        case Provenance::Union: return "union";
        case Provenance::DiscretizedInterval: return "discretized_interval";
    }
    return "unknown";
}

/// Sampled function on a time scale, index-aligned with its points.
using GridSamples = std::vector<double>;

struct RegularityReport {
    bool sigma_of_rho = false;  // sigma(rho(t)) == t
    bool rho_of_sigma = false;  // rho(sigma(t)) == t
    bool regular() const { return sigma_of_rho && rho_of_sigma; }
};

/// Immutable finite time scale. Points are addressed by index; real-valued
/// lookup goes through `index_of` with a relative tolerance.
class TimeScale {
public:
    /// Relative tolerance (times b - a) for dedup and point lookup.
    static constexpr double kLookupTolerance = 1e-12;

    static TimeScale from_points(std::vector<double> points) {
        return TimeScale(std::move(points), Provenance::Finite, 0.0);
    }

    /// a, a+h, ..., b. (b - a)/h must be an integer up to rounding.
    static TimeScale uniform(double a, double b, double h) {
        check_step(a, b, h);
        const double steps = (b - a) / h;
        const double rounded = std::round(steps);
        if (std::abs(steps - rounded) > 1e-9 * std::max(1.0, rounded)) {
            throw Error(ErrorCode::InvalidArgument, "uniform scale: (b - a)/h = " + std::to_string(steps) +
                                                        " is not an integer");
        }
        const auto n = static_cast<std::size_t>(rounded);
        std::vector<double> pts(n + 1);
        for (std::size_t i = 0; i <= n; ++i) {
            pts[i] = a + static_cast<double>(i) * h;
        }
        pts.back() = b;
        return TimeScale(std::move(pts), Provenance::Uniform, h);
    }

    /// Fine grid standing in for the real interval [a, b]; the last step is
    /// shortened when h does not divide b - a.
    static TimeScale interval(double a, double b, double h) {
        check_step(a, b, h);
        const auto n = static_cast<std::size_t>(std::ceil((b - a) / h - 1e-9));
        std::vector<double> pts;
        pts.reserve(n + 1);
        for (std::size_t i = 0; i < n; ++i) {
            pts.push_back(a + static_cast<double>(i) * h);
        }
        pts.push_back(b);
        return TimeScale(std::move(pts), Provenance::DiscretizedInterval, h);
    }

    /// q^k for k = k_min..k_max.
    static TimeScale qscale(double q, int k_min, int k_max) {
        if (!(q > 1.0)) {
            throw Error(ErrorCode::QNotGreaterThanOne, "q = " + std::to_string(q));
        }
        if (k_min > k_max) {
            throw Error(ErrorCode::InvalidArgument, "qscale: empty exponent range");
        }
        std::vector<double> pts;
        for (int k = k_min; k <= k_max; ++k) {
            pts.push_back(std::pow(q, k));
        }
        return TimeScale(std::move(pts), Provenance::QScale, q);
    }

    static TimeScale merge(std::span<const TimeScale> parts) {
        std::vector<double> pts;
        for (const auto& p : parts) {
            pts.insert(pts.end(), p.points_.begin(), p.points_.end());
        }
        return TimeScale(std::move(pts), Provenance::Union, 0.0);
    }

    std::size_t size() const { return points_.size(); }
    std::size_t last() const { return points_.size() - 1; }
    double operator[](std::size_t i) const { return points_[i]; }
    std::span<const double> points() const { return points_; }
    double a() const { return points_.front(); }
    double b() const { return points_.back(); }
    Provenance provenance() const { return provenance_; }
    /// h for uniform / discretized scales, q for q-scales, 0 otherwise.
    double parameter() const { return parameter_; }

    std::size_t sigma(std::size_t i) const { return i < last() ? i + 1 : i; }
    std::size_t rho(std::size_t i) const { return i > 0 ? i - 1 : 0; }
    double mu(std::size_t i) const { return points_[sigma(i)] - points_[i]; }

    /// Number of points of [a,b]^kappa: the maximum is left-scattered on a
    /// finite scale, so it is dropped.
    std::size_t kappa_count() const { return size() - 1; }

    RegularityReport regularity(std::size_t i) const {
        return {sigma(rho(i)) == i, rho(sigma(i)) == i};
    }

    std::vector<RegularityReport> regularity() const {
        std::vector<RegularityReport> out(size());
        for (std::size_t i = 0; i < size(); ++i) {
            out[i] = regularity(i);
        }
        return out;
    }

    std::optional<std::size_t> index_of(double t) const {
        const double tol = kLookupTolerance * (b() - a());
        auto it = std::lower_bound(points_.begin(), points_.end(), t - tol);
        if (it != points_.end() && std::abs(*it - t) <= tol) {
            return static_cast<std::size_t>(it - points_.begin());
        }
        return std::nullopt;
    }

    bool same_points(const TimeScale& other) const { return points_ == other.points_; }

private:
    TimeScale(std::vector<double> points, Provenance provenance, double parameter)
        : points_(std::move(points)), provenance_(provenance), parameter_(parameter) {
        canonicalize();
    }

    static void check_step(double a, double b, double h) {
        if (!(h > 0.0) || !std::isfinite(h)) {
            throw Error(ErrorCode::NonPositiveStep, "h = " + std::to_string(h));
        }
        if (!(a < b)) {
            throw Error(ErrorCode::InvalidArgument, "interval requires a < b");
        }
    }

    void canonicalize() {
        for (double p : points_) {
            if (!std::isfinite(p)) {
                throw Error(ErrorCode::InvalidArgument, "time scale points must be finite");
            }
        }
        std::sort(points_.begin(), points_.end());
        if (points_.empty()) {
            throw Error(ErrorCode::FewerThanThreePoints, "empty point set");
        }
        const double tol = kLookupTolerance * (points_.back() - points_.front());
        std::vector<double> kept;
        kept.reserve(points_.size());
        for (double p : points_) {
            if (kept.empty() || p - kept.back() > tol) {
                kept.push_back(p);
            }
        }
        // Merged near-duplicates must not move the right endpoint.
        kept.back() = points_.back();
        points_ = std::move(kept);
        if (points_.size() < 3) {
            throw Error(ErrorCode::FewerThanThreePoints,
                        "time scale has " + std::to_string(points_.size()) + " distinct points");
        }
    }

    std::vector<double> points_;
    Provenance provenance_;
    double parameter_;
};

/// (x(sigma(t)) - x(t)) / mu(t) on [a,b]^kappa; one value fewer than points.
inline GridSamples delta_derivative(const TimeScale& ts, std::span<const double> x) {
    if (x.size() != ts.size()) {
        throw Error(ErrorCode::ScaleMismatch, "samples are not aligned with the time scale");
    }
    GridSamples out(ts.kappa_count());
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = (x[i + 1] - x[i]) / ts.mu(i);
    }
    return out;
}

/// Sum of mu(t) f(t) over [t_from, t_to), left to right. `f` holds values on
/// at least the points of [a, b); a trailing value at b is ignored.
inline double delta_integral(const TimeScale& ts, std::span<const double> f, std::size_t from, std::size_t to) {
    if (f.size() < ts.kappa_count() || to > ts.last() || from > to) {
        throw Error(ErrorCode::ScaleMismatch, "integrand samples do not cover [a, b)");
    }
    double sum = 0.0;
    for (std::size_t i = from; i < to; ++i) {
        sum += ts.mu(i) * f[i];
    }
    return sum;
}

inline double delta_integral(const TimeScale& ts, std::span<const double> f) {
    return delta_integral(ts, f, 0, ts.last());
}

}  // namespace deltavar
