#pragma once

#include <cassert>
#include <cmath>
#include <cstddef>
#include <vector>

#include "microracer/geometry.hpp"

namespace microracer {

/// Periodic (closed) cubic spline through n values at uniform knots
/// t_i = i/n on [0, 1]. C2-continuous, value(1) == value(0).
class PeriodicCubicSpline {
public:
    PeriodicCubicSpline() = default;

    explicit PeriodicCubicSpline(std::vector<double> values) : y_(std::move(values)) {
        assert(y_.size() >= 3);
        solve_moments();
    }

    double operator()(double t) const {
        const std::size_t n = y_.size();
        const double h = 1.0 / static_cast<double>(n);
        t = wrap01(t);
        std::size_t i = static_cast<std::size_t>(t * n);
        if (i >= n) i = n - 1;
        const std::size_t ip = (i + 1) % n;
        const double a = ((i + 1) * h - t) / h;
        const double b = (t - i * h) / h;
        return a * y_[i] + b * y_[ip] +
               ((a * a * a - a) * m_[i] + (b * b * b - b) * m_[ip]) * h * h / 6.0;
    }

    double derivative(double t) const {
        const std::size_t n = y_.size();
        const double h = 1.0 / static_cast<double>(n);
        t = wrap01(t);
        std::size_t i = static_cast<std::size_t>(t * n);
        if (i >= n) i = n - 1;
        const std::size_t ip = (i + 1) % n;
        const double a = ((i + 1) * h - t) / h;
        const double b = (t - i * h) / h;
        return (y_[ip] - y_[i]) / h +
               ((3.0 * b * b - 1.0) * m_[ip] - (3.0 * a * a - 1.0) * m_[i]) * h / 6.0;
    }

    double second_derivative(double t) const {
        const std::size_t n = y_.size();
        t = wrap01(t);
        std::size_t i = static_cast<std::size_t>(t * n);
        if (i >= n) i = n - 1;
        const std::size_t ip = (i + 1) % n;
        const double h = 1.0 / static_cast<double>(n);
        const double a = ((i + 1) * h - t) / h;
        const double b = (t - i * h) / h;
        return a * m_[i] + b * m_[ip];
    }

    std::size_t size() const { return y_.size(); }

private:
    static double wrap01(double t) {
        t -= std::floor(t);
        return t;
    }

    // Cyclic tridiagonal system for the second-derivative moments,
    // solved by dense Gaussian elimination (n is small).
    void solve_moments() {
        const std::size_t n = y_.size();
        const double h = 1.0 / static_cast<double>(n);
        std::vector<std::vector<double>> A(n, std::vector<double>(n, 0.0));
        std::vector<double> rhs(n, 0.0);
        for (std::size_t i = 0; i < n; ++i) {
            const std::size_t im = (i + n - 1) % n;
            const std::size_t ip = (i + 1) % n;
            A[i][im] += 1.0;
            A[i][i] += 4.0;
            A[i][ip] += 1.0;
            rhs[i] = 6.0 / (h * h) * (y_[im] - 2.0 * y_[i] + y_[ip]);
        }
        // partial-pivot elimination
        for (std::size_t col = 0; col < n; ++col) {
            std::size_t piv = col;
            for (std::size_t r = col + 1; r < n; ++r)
                if (std::abs(A[r][col]) > std::abs(A[piv][col])) piv = r;
            std::swap(A[col], A[piv]);
            std::swap(rhs[col], rhs[piv]);
            for (std::size_t r = col + 1; r < n; ++r) {
                const double f = A[r][col] / A[col][col];
                if (f == 0.0) continue;
                for (std::size_t c = col; c < n; ++c) A[r][c] -= f * A[col][c];
                rhs[r] -= f * rhs[col];
            }
        }
        m_.assign(n, 0.0);
        for (std::size_t ri = n; ri-- > 0;) {
            double s = rhs[ri];
            for (std::size_t c = ri + 1; c < n; ++c) s -= A[ri][c] * m_[c];
            m_[ri] = s / A[ri][ri];
        }
    }

    std::vector<double> y_;
    std::vector<double> m_;  // second derivatives at knots
};

/// Closed parametric curve (x(t), y(t)) through 2D control points.
class ClosedSpline2D {
public:
    ClosedSpline2D() = default;

    explicit ClosedSpline2D(const std::vector<Vec2>& points) {
        std::vector<double> xs(points.size()), ys(points.size());
        for (std::size_t i = 0; i < points.size(); ++i) {
            xs[i] = points[i].x;
            ys[i] = points[i].y;
        }
        x_ = PeriodicCubicSpline(std::move(xs));
        y_ = PeriodicCubicSpline(std::move(ys));
    }

    Vec2 operator()(double t) const { return {x_(t), y_(t)}; }
    Vec2 derivative(double t) const { return {x_.derivative(t), y_.derivative(t)}; }
    Vec2 second_derivative(double t) const {
        return {x_.second_derivative(t), y_.second_derivative(t)};
    }

    Vec2 tangent(double t) const { return derivative(t).normalized(); }
    /// Unit normal, 90 degrees CCW of the tangent.
    Vec2 normal(double t) const { return tangent(t).perp(); }

    /// Signed curvature of the parametric curve at t.
    double curvature(double t) const {
        const Vec2 d = derivative(t);
        const Vec2 dd = second_derivative(t);
        const double speed = d.norm();
        if (speed < 1e-12) return 0.0;
        return poly_cross(d, dd) / (speed * speed * speed);
    }

private:
    PeriodicCubicSpline x_;
    PeriodicCubicSpline y_;
};

}  // namespace microracer
