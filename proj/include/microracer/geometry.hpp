#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

namespace microracer {

struct Vec2 {
    double x = 0.0;
    double y = 0.0;

    Vec2 operator+(Vec2 o) const { return {x + o.x, y + o.y}; }
    Vec2 operator-(Vec2 o) const { return {x - o.x, y - o.y}; }
    Vec2 operator*(double s) const { return {x * s, y * s}; }
    Vec2& operator+=(Vec2 o) { x += o.x; y += o.y; return *this; }

    double dot(Vec2 o) const { return x * o.x + y * o.y; }
    double norm() const { return std::hypot(x, y); }
    Vec2 normalized() const {
        const double n = norm();
        return n > 0.0 ? Vec2{x / n, y / n} : Vec2{0.0, 0.0};
    }
    /// 90-degree counter-clockwise rotation.
    Vec2 perp() const { return {-y, x}; }
};

inline Vec2 heading_dir(double heading) { return {std::cos(heading), std::sin(heading)}; }

inline double wrap_angle(double a) {
    while (a > M_PI) a -= 2.0 * M_PI;
    while (a < -M_PI) a += 2.0 * M_PI;
    return a;
}

/// Even-odd (crossing number) test against a closed polyline. The last
/// vertex is implicitly connected back to the first.
inline bool point_in_polygon(Vec2 p, const std::vector<Vec2>& poly) {
    bool inside = false;
    const std::size_t n = poly.size();
    for (std::size_t i = 0, j = n - 1; i < n; j = i++) {
        const Vec2 a = poly[j];
        const Vec2 b = poly[i];
        if ((b.y > p.y) != (a.y > p.y)) {
            const double x_cross = b.x + (p.y - b.y) * (a.x - b.x) / (a.y - b.y);
            if (p.x < x_cross) inside = !inside;
        }
    }
    return inside;
}

inline double polyline_length(const std::vector<Vec2>& pts, bool closed) {
    double len = 0.0;
    for (std::size_t i = 1; i < pts.size(); ++i) len += (pts[i] - pts[i - 1]).norm();
    if (closed && pts.size() > 1) len += (pts.front() - pts.back()).norm();
    return len;
}

inline double poly_cross(Vec2 a, Vec2 b) { return a.x * b.y - a.y * b.x; }

inline double dot(Vec2 a, Vec2 b) { return a.dot(b); }

/// Shoelace area of a closed polyline (absolute value).
inline double polygon_area(const std::vector<Vec2>& pts) {
    double a = 0.0;
    const std::size_t n = pts.size();
    for (std::size_t i = 0, j = n - 1; i < n; j = i++) {
        a += poly_cross(pts[j], pts[i]);
    }
    return std::abs(a) * 0.5;
}

}  // namespace microracer
