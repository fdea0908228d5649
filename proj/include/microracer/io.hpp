#pragma once

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "microracer/track.hpp"

namespace microracer::io {

inline void write_file(const std::string& path, const std::string& content) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot write file: " + path);
    f << content;
}

inline std::string read_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot read file: " + path);
    std::ostringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

/// Binary PGM dump of the occupancy grid (white = drivable).
inline void write_pgm(const TrackMap& map, const std::string& path) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot write file: " + path);
    const int res = map.resolution();
    f << "P5\n" << res << " " << res << "\n255\n";
    for (int iy = res - 1; iy >= 0; --iy)
        for (int ix = 0; ix < res; ++ix)
            f.put(map.cell(ix, iy) ? static_cast<char>(255) : static_cast<char>(0));
}

struct SvgTrajectory {
    std::string label;
    std::string color;
    std::vector<Vec2> points;
};

/// SVG of the track borders, obstacles, and optional overlaid trajectories.
inline std::string track_svg(const SplineBorders& borders, const TrackMap& map,
                             const std::vector<SvgTrajectory>& trajectories = {}) {
    const double extent = map.resolution() * map.cell_size();
    const double view = 1000.0;
    const double s = view / extent;
    auto px = [&](Vec2 p) {
        return std::pair<double, double>{(p.x - map.origin().x) * s,
                                         view - (p.y - map.origin().y) * s};
    };
    auto polyline = [&](const std::vector<Vec2>& pts, const std::string& stroke,
                        bool closed) {
        std::ostringstream ss;
        ss << "<" << (closed ? "polygon" : "polyline") << " points=\"";
        for (Vec2 p : pts) {
            auto [x, y] = px(p);
            ss << x << "," << y << " ";
        }
        ss << "\" fill=\"none\" stroke=\"" << stroke << "\" stroke-width=\"2\"/>\n";
        return ss.str();
    };

    std::ostringstream svg;
    svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << view << "\" height=\""
        << view << "\" viewBox=\"0 0 " << view << " " << view << "\">\n";
    svg << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    svg << polyline(borders.sample_outer(600), "black", true);
    svg << polyline(borders.sample_inner(600), "black", true);
    for (const Obstacle& ob : map.obstacles) {
        const Vec2 t = ob.axis;
        const Vec2 n = ob.axis.perp();
        std::vector<Vec2> corners = {
            ob.center + t * ob.half_len + n * ob.half_lat,
            ob.center + t * ob.half_len - n * ob.half_lat,
            ob.center - t * ob.half_len - n * ob.half_lat,
            ob.center - t * ob.half_len + n * ob.half_lat,
        };
        std::ostringstream ss;
        ss << "<polygon points=\"";
        for (Vec2 p : corners) {
            auto [x, y] = px(p);
            ss << x << "," << y << " ";
        }
        ss << "\" fill=\"red\"/>\n";
        svg << ss.str();
    }
    {
        auto [sx, sy] = px(borders.start_point());
        svg << "<circle cx=\"" << sx << "\" cy=\"" << sy << "\" r=\"5\" fill=\"green\"/>\n";
    }
    double ly = 30.0;
    for (const SvgTrajectory& tr : trajectories) {
        svg << polyline(tr.points, tr.color, false);
        svg << "<text x=\"20\" y=\"" << ly << "\" fill=\"" << tr.color
            << "\" font-size=\"20\">" << tr.label << "</text>\n";
        ly += 24.0;
    }
    svg << "</svg>\n";
    return svg.str();
}

/// Simple line+band chart for training curves.
struct CurveSeries {
    std::string label;
    std::string color;
    std::vector<double> mean;
    std::vector<double> lo;
    std::vector<double> hi;
};

inline std::string curves_svg(const std::vector<CurveSeries>& series) {
    const double w = 1000.0, h = 600.0, ml = 70.0, mb = 50.0, mt = 20.0, mr = 20.0;
    double ymin = 0.0, ymax = 1.0;
    std::size_t xmax = 1;
    for (const auto& s : series) {
        xmax = std::max(xmax, s.mean.size());
        for (std::size_t i = 0; i < s.mean.size(); ++i) {
            ymin = std::min({ymin, s.lo.empty() ? s.mean[i] : s.lo[i]});
            ymax = std::max({ymax, s.hi.empty() ? s.mean[i] : s.hi[i]});
        }
    }
    if (ymax <= ymin) ymax = ymin + 1.0;
    auto X = [&](double i) { return ml + i / static_cast<double>(xmax - 1 ? xmax - 1 : 1) * (w - ml - mr); };
    auto Y = [&](double v) { return h - mb - (v - ymin) / (ymax - ymin) * (h - mb - mt); };

    std::ostringstream svg;
    svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\"" << h
        << "\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    svg << "<line x1=\"" << ml << "\" y1=\"" << h - mb << "\" x2=\"" << w - mr << "\" y2=\""
        << h - mb << "\" stroke=\"black\"/>\n";
    svg << "<line x1=\"" << ml << "\" y1=\"" << mt << "\" x2=\"" << ml << "\" y2=\"" << h - mb
        << "\" stroke=\"black\"/>\n";
    for (int k = 0; k <= 4; ++k) {
        const double v = ymin + (ymax - ymin) * k / 4.0;
        svg << "<text x=\"5\" y=\"" << Y(v) + 5 << "\" font-size=\"14\">" << v << "</text>\n";
        const double xe = static_cast<double>(xmax - 1) * k / 4.0;
        svg << "<text x=\"" << X(xe) - 10 << "\" y=\"" << h - mb + 25
            << "\" font-size=\"14\">" << static_cast<long>(xe) << "</text>\n";
    }
    double ly = mt + 20.0;
    for (const auto& s : series) {
        if (!s.lo.empty()) {
            std::ostringstream band;
            band << "<polygon points=\"";
            for (std::size_t i = 0; i < s.lo.size(); ++i)
                band << X(static_cast<double>(i)) << "," << Y(s.hi[i]) << " ";
            for (std::size_t i = s.lo.size(); i-- > 0;)
                band << X(static_cast<double>(i)) << "," << Y(s.lo[i]) << " ";
            band << "\" fill=\"" << s.color << "\" fill-opacity=\"0.2\" stroke=\"none\"/>\n";
            svg << band.str();
        }
        svg << "<polyline points=\"";
        for (std::size_t i = 0; i < s.mean.size(); ++i)
            svg << X(static_cast<double>(i)) << "," << Y(s.mean[i]) << " ";
        svg << "\" fill=\"none\" stroke=\"" << s.color << "\" stroke-width=\"2\"/>\n";
        svg << "<text x=\"" << w - 180 << "\" y=\"" << ly << "\" fill=\"" << s.color
            << "\" font-size=\"18\">" << s.label << "</text>\n";
        ly += 22.0;
    }
    svg << "</svg>\n";
    return svg.str();
}

}  // namespace microracer::io
