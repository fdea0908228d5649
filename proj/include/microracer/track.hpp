#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <stdexcept>
#include <vector>

#include "microracer/geometry.hpp"
#include "microracer/rng.hpp"
#include "microracer/spline.hpp"

namespace microracer {

struct TrackConfig {
    int n_control_points = 12;
    double track_width = 0.2;
    int map_resolution = 1300;
    double world_extent = 2.0;
    bool enable_obstacles = true;
    bool enable_chicanes = true;
    std::uint64_t rng_seed = 0;

    // generation tuning (fractions of world_extent/2 where noted)
    double radius_min_frac = 0.50;
    double radius_max_frac = 0.75;
    double angle_jitter = 0.25;  // fraction of one angular slot
    int max_retries = 20;

    // obstacles
    int obstacles_min = 2;
    int obstacles_max = 4;
    double obstacle_min_width_frac = 0.4;
    double obstacle_max_width_frac = 0.6;
    double obstacle_half_length = 0.02;
    double start_grace_arc = 0.08;  // arc fraction around the start kept clear
    double car_clearance = 0.02;

    // chicanes
    int chicanes_min = 1;
    int chicanes_max = 2;
    double chicane_max_amp_frac = 0.4;  // of track_width
    double chicane_arc_min = 0.05;
    double chicane_arc_max = 0.10;

    void validate() const {
        if (n_control_points < 4)
            throw std::invalid_argument("n_control_points must be >= 4");
        if (track_width <= 0.0) throw std::invalid_argument("track_width must be > 0");
        if (map_resolution < 100) throw std::invalid_argument("map_resolution must be >= 100");
        if (world_extent <= 0.0) throw std::invalid_argument("world_extent must be > 0");
    }
};

/// One S-shaped lateral displacement of the track over [t0, t0+length].
struct Chicane {
    double t0 = 0.0;
    double length = 0.0;
    double amplitude = 0.0;

    double displacement(double t) const {
        const double u = (t - t0) / length;
        if (u < 0.0 || u > 1.0) return 0.0;
        const double env = std::sin(M_PI * u);
        return amplitude * std::sin(2.0 * M_PI * u) * env * env;
    }
};

/// Closed track geometry: a centerline spline plus a constant width and a
/// set of chicane displacements. Inner/outer borders are the centerline
/// offset by half the width along the (pre-chicane) normal, which keeps
/// the inner/outer distance at exactly track_width for every t.
class SplineBorders {
public:
    SplineBorders() = default;

    SplineBorders(ClosedSpline2D centerline, double width, std::vector<Chicane> chicanes = {})
        : spline_(std::move(centerline)), width_(width), chicanes_(std::move(chicanes)) {}

    Vec2 center(double t) const {
        t = wrap01(t);
        Vec2 p = spline_(t);
        const double d = chicane_displacement(t);
        if (d != 0.0) p += spline_.normal(t) * d;
        return p;
    }

    Vec2 inner(double t) const { return center(t) + spline_.normal(wrap01(t)) * (0.5 * width_); }
    Vec2 outer(double t) const { return center(t) - spline_.normal(wrap01(t)) * (0.5 * width_); }

    /// Tangent of the displaced centerline (finite difference; the raw
    /// spline tangent would ignore chicanes).
    Vec2 tangent(double t) const {
        const double eps = 1e-5;
        return (center(t + eps) - center(t - eps)).normalized();
    }

    Vec2 normal(double t) const { return spline_.normal(wrap01(t)); }

    Vec2 start_point() const { return center(0.0); }
    double start_heading() const {
        const Vec2 d = tangent(0.0);
        return std::atan2(d.y, d.x);
    }

    double width() const { return width_; }
    const ClosedSpline2D& centerline_spline() const { return spline_; }
    const std::vector<Chicane>& chicanes() const { return chicanes_; }

    double chicane_displacement(double t) const {
        t = wrap01(t);
        double d = 0.0;
        for (const Chicane& c : chicanes_) {
            if (t >= c.t0 && t <= c.t0 + c.length) d += c.displacement(t);
        }
        return d;
    }

    /// Finite-difference curvature of the displaced centerline.
    double curvature(double t) const {
        const double eps = 1e-4;
        const Vec2 pm = center(t - eps);
        const Vec2 p0 = center(t);
        const Vec2 pp = center(t + eps);
        const Vec2 d1 = (pp - pm) * (0.5 / eps);
        const Vec2 d2 = (pp - p0 * 2.0 + pm) * (1.0 / (eps * eps));
        const double s = d1.norm();
        if (s < 1e-12) return 0.0;
        return poly_cross(d1, d2) / (s * s * s);
    }

    std::vector<Vec2> sample_center(std::size_t n) const {
        std::vector<Vec2> pts(n);
        for (std::size_t i = 0; i < n; ++i) pts[i] = center(static_cast<double>(i) / n);
        return pts;
    }
    std::vector<Vec2> sample_inner(std::size_t n) const {
        std::vector<Vec2> pts(n);
        for (std::size_t i = 0; i < n; ++i) pts[i] = inner(static_cast<double>(i) / n);
        return pts;
    }
    std::vector<Vec2> sample_outer(std::size_t n) const {
        std::vector<Vec2> pts(n);
        for (std::size_t i = 0; i < n; ++i) pts[i] = outer(static_cast<double>(i) / n);
        return pts;
    }

private:
    static double wrap01(double t) { return t - std::floor(t); }

    ClosedSpline2D spline_;
    double width_ = 0.0;
    std::vector<Chicane> chicanes_;
};

/// Axis-aligned-in-track-frame blocked rectangle.
struct Obstacle {
    Vec2 center;       // world center of the blocked region
    Vec2 axis;         // unit tangent of the track at the obstacle
    double half_len = 0.0;  // along axis
    double half_lat = 0.0;  // across the track
    double arc = 0.0;       // centerline parameter where it sits

    bool contains(Vec2 p) const {
        const Vec2 d = p - center;
        return std::abs(d.dot(axis)) <= half_len && std::abs(d.dot(axis.perp())) <= half_lat;
    }
};

/// Boolean occupancy grid: true cells are drivable track interior.
class TrackMap {
public:
    TrackMap() = default;

    TrackMap(int resolution, double world_extent)
        : res_(resolution),
          cell_(world_extent / resolution),
          origin_{-world_extent / 2.0, -world_extent / 2.0},
          grid_(static_cast<std::size_t>(resolution) * resolution, 0) {}

    int resolution() const { return res_; }
    double cell_size() const { return cell_; }
    Vec2 origin() const { return origin_; }

    bool cell(int ix, int iy) const {
        if (ix < 0 || iy < 0 || ix >= res_ || iy >= res_) return false;
        return grid_[static_cast<std::size_t>(iy) * res_ + ix] != 0;
    }
    void set_cell(int ix, int iy, bool v) {
        if (ix < 0 || iy < 0 || ix >= res_ || iy >= res_) return;
        grid_[static_cast<std::size_t>(iy) * res_ + ix] = v ? 1 : 0;
    }

    /// Membership of a world point (false outside map bounds).
    bool inside(Vec2 p) const {
        const int ix = static_cast<int>(std::floor((p.x - origin_.x) / cell_));
        const int iy = static_cast<int>(std::floor((p.y - origin_.y) / cell_));
        return cell(ix, iy);
    }

    Vec2 cell_center(int ix, int iy) const {
        return {origin_.x + (ix + 0.5) * cell_, origin_.y + (iy + 0.5) * cell_};
    }

    std::size_t count_true() const {
        std::size_t n = 0;
        for (auto v : grid_) n += v;
        return n;
    }

    const std::vector<std::uint8_t>& raw() const { return grid_; }
    std::vector<Obstacle> obstacles;

private:
    int res_ = 0;
    double cell_ = 0.0;
    Vec2 origin_;
    std::vector<std::uint8_t> grid_;
};

namespace detail {

/// Scanline even-odd fill of a closed polygon into a cell mask.
inline std::vector<std::uint8_t> fill_polygon(const std::vector<Vec2>& poly, int res,
                                              double cell, Vec2 origin) {
    std::vector<std::vector<double>> crossings(res);
    const std::size_t n = poly.size();
    for (std::size_t i = 0, j = n - 1; i < n; j = i++) {
        Vec2 a = poly[j];
        Vec2 b = poly[i];
        if (a.y == b.y) continue;
        const double ylo = std::min(a.y, b.y);
        const double yhi = std::max(a.y, b.y);
        int r0 = static_cast<int>(std::ceil((ylo - origin.y) / cell - 0.5));
        int r1 = static_cast<int>(std::floor((yhi - origin.y) / cell - 0.5));
        r0 = std::max(r0, 0);
        r1 = std::min(r1, res - 1);
        for (int r = r0; r <= r1; ++r) {
            const double y = origin.y + (r + 0.5) * cell;
            // half-open rule [ylo, yhi) matches the point-in-polygon test
            const bool strad = (b.y > y) != (a.y > y);
            if (!strad) continue;
            const double x = b.x + (y - b.y) * (a.x - b.x) / (a.y - b.y);
            crossings[r].push_back(x);
        }
    }
    std::vector<std::uint8_t> mask(static_cast<std::size_t>(res) * res, 0);
    for (int r = 0; r < res; ++r) {
        auto& xs = crossings[r];
        std::sort(xs.begin(), xs.end());
        for (std::size_t k = 0; k + 1 < xs.size(); k += 2) {
            int c0 = static_cast<int>(std::ceil((xs[k] - origin.x) / cell - 0.5));
            int c1 = static_cast<int>(std::floor((xs[k + 1] - origin.x) / cell - 0.5));
            c0 = std::max(c0, 0);
            c1 = std::min(c1, res - 1);
            for (int c = c0; c <= c1; ++c)
                mask[static_cast<std::size_t>(r) * res + c] = 1;
        }
    }
    return mask;
}

}  // namespace detail

/// Rasterize borders into an occupancy grid: a cell is true iff its center
/// lies inside the outer border and outside the inner border.
inline TrackMap rasterize(const SplineBorders& borders, const TrackConfig& config) {
    const std::size_t samples = std::max<std::size_t>(2000, 2 * config.map_resolution);
    const auto inner_poly = borders.sample_inner(samples);
    const auto outer_poly = borders.sample_outer(samples);
    TrackMap map(config.map_resolution, config.world_extent);
    const auto out_mask =
        detail::fill_polygon(outer_poly, map.resolution(), map.cell_size(), map.origin());
    const auto in_mask =
        detail::fill_polygon(inner_poly, map.resolution(), map.cell_size(), map.origin());
    for (int iy = 0; iy < map.resolution(); ++iy)
        for (int ix = 0; ix < map.resolution(); ++ix) {
            const std::size_t k = static_cast<std::size_t>(iy) * map.resolution() + ix;
            map.set_cell(ix, iy, out_mask[k] && !in_mask[k]);
        }
    return map;
}

/// Curvature the car can still negotiate at crawling speed; chicane
/// amplitudes are budgeted against it.
inline constexpr double kMaxDrivableCurvature = 22.0;

/// Add chicanes to existing borders; re-rasterization is required afterwards.
inline SplineBorders add_chicanes(const SplineBorders& borders, const TrackConfig& config,
                                  Rng& rng) {
    if (!config.enable_chicanes) return borders;
    std::vector<Chicane> chicanes = borders.chicanes();
    const double total_len = polyline_length(borders.sample_center(512), true);
    const int count = rng.uniform_int(config.chicanes_min, config.chicanes_max);
    for (int i = 0; i < count; ++i) {
        for (int attempt = 0; attempt < 10; ++attempt) {
            Chicane c;
            c.length = rng.uniform(config.chicane_arc_min, config.chicane_arc_max);
            c.t0 = rng.uniform(config.start_grace_arc, 1.0 - config.start_grace_arc - c.length);
            // curvature of the S-displacement scales with A/(arc length)^2;
            // keep its peak within the drivable budget
            const double arc_world = c.length * total_len;
            const double amp_geom = 0.6 * kMaxDrivableCurvature * arc_world * arc_world /
                                    (4.0 * M_PI * M_PI * 1.5);
            const double amp_cap =
                std::min(config.chicane_max_amp_frac * config.track_width, amp_geom);
            const double amp = rng.uniform(0.5, 1.0) * amp_cap;
            c.amplitude = rng.uniform() < 0.5 ? amp : -amp;
            bool overlaps = false;
            for (const Chicane& o : chicanes) {
                if (c.t0 < o.t0 + o.length + 0.02 && o.t0 < c.t0 + c.length + 0.02)
                    overlaps = true;
            }
            if (!overlaps) {
                chicanes.push_back(c);
                break;
            }
            if (attempt == 9)
                std::fprintf(stderr, "microracer: chicane placement skipped after retries\n");
        }
    }
    return SplineBorders(borders.centerline_spline(), borders.width(), std::move(chicanes));
}

/// Mark obstacle rectangles as blocked cells. Each obstacle is anchored at
/// one border and spans at most obstacle_max_width_frac of the width, so a
/// passable gap remains on the other side.
inline void add_obstacles(TrackMap& map, const SplineBorders& borders, const TrackConfig& config,
                          Rng& rng) {
    if (!config.enable_obstacles) return;
    const int count = rng.uniform_int(config.obstacles_min, config.obstacles_max);
    std::vector<double> placed_arcs;
    for (int i = 0; i < count; ++i) {
        bool done = false;
        for (int attempt = 0; attempt < 10 && !done; ++attempt) {
            const double t =
                rng.uniform(config.start_grace_arc, 1.0 - config.start_grace_arc);
            bool too_close = false;
            for (double a : placed_arcs)
                if (std::abs(a - t) < 0.06) too_close = true;
            if (too_close) continue;
            const double span_frac =
                rng.uniform(config.obstacle_min_width_frac, config.obstacle_max_width_frac);
            const double span = span_frac * config.track_width;
            const double gap = config.track_width - span;
            if (gap < 1.5 * config.car_clearance) continue;
            // avoid chicane arcs: the lateral frame there is distorted
            bool in_chicane = false;
            for (const Chicane& c : borders.chicanes())
                if (t > c.t0 - 0.02 && t < c.t0 + c.length + 0.02) in_chicane = true;
            if (in_chicane) continue;

            const double side = rng.uniform() < 0.5 ? 1.0 : -1.0;
            Obstacle ob;
            ob.arc = t;
            ob.axis = borders.tangent(t);
            ob.half_len = config.obstacle_half_length;
            ob.half_lat = span / 2.0;
            ob.center = borders.center(t) + borders.normal(t) * (side * (config.track_width - span) / 2.0);

            // stamp blocked cells over the obstacle's bounding box
            const double reach = std::hypot(ob.half_len, ob.half_lat) + map.cell_size();
            const int ix0 = static_cast<int>((ob.center.x - reach - map.origin().x) / map.cell_size());
            const int ix1 = static_cast<int>((ob.center.x + reach - map.origin().x) / map.cell_size());
            const int iy0 = static_cast<int>((ob.center.y - reach - map.origin().y) / map.cell_size());
            const int iy1 = static_cast<int>((ob.center.y + reach - map.origin().y) / map.cell_size());
            for (int iy = iy0; iy <= iy1; ++iy)
                for (int ix = ix0; ix <= ix1; ++ix)
                    if (map.cell(ix, iy) && ob.contains(map.cell_center(ix, iy)))
                        map.set_cell(ix, iy, false);
            map.obstacles.push_back(ob);
            placed_arcs.push_back(t);
            done = true;
        }
        if (!done)
            std::fprintf(stderr, "microracer: obstacle placement skipped after retries\n");
    }
}

struct GeneratedTrack {
    SplineBorders borders;
    TrackMap map;
};

namespace detail {

/// Rejects geometry whose offset borders would pinch or self-intersect.
inline bool borders_valid(const SplineBorders& borders, const TrackConfig& config) {
    const std::size_t m = 512;
    const double w = borders.width();
    // borders are offsets of the raw spline by up to half width plus the
    // chicane amplitude; a cusp appears when the raw curvature radius
    // drops below that offset
    const double max_offset = 0.5 * w + config.chicane_max_amp_frac * w;
    std::vector<Vec2> center(m);
    for (std::size_t i = 0; i < m; ++i) {
        const double t = static_cast<double>(i) / m;
        center[i] = borders.center(t);
        if (std::abs(borders.centerline_spline().curvature(t)) > 0.9 / max_offset) return false;
        if (std::abs(borders.curvature(t)) > kMaxDrivableCurvature * 1.2) return false;
        if ((borders.inner(t) - borders.outer(t)).norm() < 0.5 * w) return false;
    }
    // distant arcs must not come closer than the track width; nearby arcs
    // (within 10% of the loop) may legitimately be close on tight turns
    const std::size_t window = m / 10;
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = i + window; j < m; ++j) {
            const std::size_t wrap_gap = m - (j - i);
            if (wrap_gap < window) continue;
            if ((center[i] - center[j]).norm() < 1.1 * w) return false;
        }
    }
    // track must fit inside the map
    const double half = config.world_extent / 2.0;
    for (std::size_t i = 0; i < m; ++i) {
        if (std::abs(center[i].x) > half - w || std::abs(center[i].y) > half - w) return false;
    }
    return true;
}

}  // namespace detail

/// Generate a random closed track: control points in polar form, a periodic
/// cubic spline through them, optional chicanes, rasterization, optional
/// obstacles. Deterministic in (config, rng_seed). Self-intersecting
/// geometry is resampled with a derived sub-seed, up to max_retries.
inline GeneratedTrack generate_track(const TrackConfig& config) {
    config.validate();
    const double scale = config.world_extent / 2.0;
    for (int attempt = 0; attempt < config.max_retries; ++attempt) {
        Rng rng(derive_seed(config.rng_seed, static_cast<std::uint64_t>(attempt)));
        const int n = config.n_control_points;
        std::vector<double> radii(n);
        for (int i = 0; i < n; ++i)
            radii[i] = scale * rng.uniform(config.radius_min_frac, config.radius_max_frac);
        // smooth the radius sequence so adjacent control points do not jump
        // across the whole band (raw jumps give undrivable curvature)
        for (int pass = 0; pass < 2; ++pass) {
            std::vector<double> s(n);
            for (int i = 0; i < n; ++i)
                s[i] = 0.25 * radii[(i + n - 1) % n] + 0.5 * radii[i] +
                       0.25 * radii[(i + 1) % n];
            radii = std::move(s);
        }
        std::vector<Vec2> pts(n);
        const double slot = 2.0 * M_PI / n;
        for (int i = 0; i < n; ++i) {
            const double theta =
                slot * (i + config.angle_jitter * rng.uniform(-1.0, 1.0));
            pts[i] = {radii[i] * std::cos(theta), radii[i] * std::sin(theta)};
        }
        SplineBorders borders(ClosedSpline2D(pts), config.track_width);
        borders = add_chicanes(borders, config, rng);
        if (!detail::borders_valid(borders, config)) continue;

        TrackMap map = rasterize(borders, config);
        add_obstacles(map, borders, config, rng);
        if (!map.inside(borders.start_point())) continue;
        return {std::move(borders), std::move(map)};
    }
    throw std::runtime_error(
        "generate_track: no valid track after retries (degenerate config?)");
}

}  // namespace microracer
