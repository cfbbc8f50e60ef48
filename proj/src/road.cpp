#include "enkmp/road.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <Eigen/Geometry>

#include "enkmp/errors.hpp"

namespace enkmp {

namespace {

double cross(const Eigen::Vector2d& a, const Eigen::Vector2d& b)
{
    return a.x() * b.y() - a.y() * b.x();
}

} // namespace

RoadGeometry::RoadGeometry(std::vector<Eigen::Vector2d> centerline, double half_width)
    : points_(std::move(centerline)), half_width_(half_width)
{
    if (points_.size() < 2)
        throw ConfigError("road: centerline needs at least two points");
    if (!(half_width_ > 0.0))
        throw ConfigError("road: half width must be positive");

    cumulative_.assign(1, 0.0);
    for (std::size_t i = 1; i < points_.size(); ++i) {
        const Eigen::Vector2d d = points_[i] - points_[i - 1];
        const double len = d.norm();
        if (!(len > 0.0) || !std::isfinite(len))
            throw ConfigError("road: arclength must be strictly increasing");
        cumulative_.push_back(cumulative_.back() + len);
        headings_.push_back(std::atan2(d.y(), d.x()));
    }

    cell_size_ = std::max(10.0, 4.0 * half_width_);
    const double r = cell_size_;
    for (std::size_t s = 0; s + 1 < points_.size(); ++s) {
        const Eigen::Vector2d lo = points_[s].cwiseMin(points_[s + 1]).array() - r;
        const Eigen::Vector2d hi = points_[s].cwiseMax(points_[s + 1]).array() + r;
        const auto x0 = static_cast<std::int64_t>(std::floor(lo.x() / cell_size_));
        const auto x1 = static_cast<std::int64_t>(std::floor(hi.x() / cell_size_));
        const auto y0 = static_cast<std::int64_t>(std::floor(lo.y() / cell_size_));
        const auto y1 = static_cast<std::int64_t>(std::floor(hi.y() / cell_size_));
        for (auto cx = x0; cx <= x1; ++cx)
            for (auto cy = y0; cy <= y1; ++cy)
                grid_[cell_key(cx, cy)].push_back(static_cast<std::uint32_t>(s));
    }
}

std::int64_t RoadGeometry::cell_key(std::int64_t cx, std::int64_t cy) const
{
    return (cx << 32) ^ (cy & 0xffffffffLL);
}

double RoadGeometry::segment_distance2(std::size_t seg, const Eigen::Vector2d& p, double& t) const
{
    const Eigen::Vector2d a = points_[seg];
    const Eigen::Vector2d d = points_[seg + 1] - a;
    t = std::clamp((p - a).dot(d) / d.squaredNorm(), 0.0, 1.0);
    return (a + t * d - p).squaredNorm();
}

RoadGeometry::Projection RoadGeometry::project(const Eigen::Vector2d& point) const
{
    std::size_t best_seg = 0;
    double best_t = 0.0;
    double best_d2 = std::numeric_limits<double>::infinity();
    auto consider = [&](std::size_t seg) {
        double t = 0.0;
        const double d2 = segment_distance2(seg, point, t);
        if (d2 < best_d2 || (d2 == best_d2 && seg < best_seg)) {
            best_d2 = d2;
            best_seg = seg;
            best_t = t;
        }
    };

    const auto cx = static_cast<std::int64_t>(std::floor(point.x() / cell_size_));
    const auto cy = static_cast<std::int64_t>(std::floor(point.y() / cell_size_));
    if (auto it = grid_.find(cell_key(cx, cy)); it != grid_.end())
        for (auto seg : it->second)
            consider(seg);
    // The grid is exact for points within cell_size_ of the centerline.
    if (!(best_d2 <= cell_size_ * cell_size_))
        for (std::size_t s = 0; s + 1 < points_.size(); ++s)
            consider(s);

    const Eigen::Vector2d a = points_[best_seg];
    const Eigen::Vector2d d = points_[best_seg + 1] - a;
    const double seg_len = d.norm();
    const Eigen::Vector2d tangent = d / seg_len;

    Projection proj;
    proj.heading = headings_[best_seg];
    const bool before_start = best_seg == 0 && best_t == 0.0;
    const bool after_end = best_seg + 2 == points_.size() && best_t == 1.0;
    if (before_start || after_end) {
        const Eigen::Vector2d end = before_start ? a : points_[best_seg + 1];
        proj.foot = end;
        proj.arclength = before_start ? 0.0 : length();
        proj.lateral = cross(tangent, point - end);
    } else {
        proj.foot = a + best_t * d;
        proj.arclength = cumulative_[best_seg] + best_t * seg_len;
        const Eigen::Vector2d offset = point - proj.foot;
        const double side = cross(tangent, offset);
        proj.lateral = std::copysign(offset.norm(), side);
    }
    return proj;
}

std::size_t RoadGeometry::segment_at(double arclength) const
{
    auto it = std::upper_bound(cumulative_.begin(), cumulative_.end(), arclength);
    std::size_t seg = it == cumulative_.begin() ? 0 : static_cast<std::size_t>(it - cumulative_.begin()) - 1;
    return std::min(seg, points_.size() - 2);
}

Eigen::Vector2d RoadGeometry::point_at(double arclength, double lateral) const
{
    const double s = std::clamp(arclength, 0.0, length());
    const std::size_t seg = segment_at(s);
    const Eigen::Vector2d a = points_[seg];
    const Eigen::Vector2d d = points_[seg + 1] - a;
    const double seg_len = cumulative_[seg + 1] - cumulative_[seg];
    const Eigen::Vector2d tangent = d / seg_len;
    const Eigen::Vector2d normal{-tangent.y(), tangent.x()};
    return a + (s - cumulative_[seg]) * tangent + lateral * normal;
}

double RoadGeometry::heading_at(double arclength) const
{
    return headings_[segment_at(std::clamp(arclength, 0.0, length()))];
}

RoadGeometry RoadGeometry::transformed(double rotation, const Eigen::Vector2d& translation) const
{
    const Eigen::Rotation2Dd rot(rotation);
    std::vector<Eigen::Vector2d> pts;
    pts.reserve(points_.size());
    for (const auto& p : points_)
        pts.push_back(rot * p + translation);
    return RoadGeometry(std::move(pts), half_width_);
}

RoadGeometry make_straight_road(double length, double half_width, double heading,
                                const Eigen::Vector2d& origin, double spacing)
{
    if (!(length > 0.0) || !(spacing > 0.0))
        throw ConfigError("road: straight length and spacing must be positive");
    const auto n = static_cast<int>(std::ceil(length / spacing));
    const Eigen::Vector2d dir{std::cos(heading), std::sin(heading)};
    std::vector<Eigen::Vector2d> pts;
    for (int i = 0; i <= n; ++i)
        pts.push_back(origin + (length * i / n) * dir);
    return RoadGeometry(std::move(pts), half_width);
}

namespace {

void append_arc(std::vector<Eigen::Vector2d>& pts, double& heading, double radius, double sweep,
                double spacing)
{
    const double arc_len = std::abs(radius * sweep);
    const auto n = std::max(1, static_cast<int>(std::ceil(arc_len / spacing)));
    const Eigen::Vector2d start = pts.back();
    const Eigen::Vector2d normal{-std::sin(heading), std::cos(heading)};
    const Eigen::Vector2d center = start + radius * normal;
    const double h0 = heading;
    const double sign = radius > 0.0 ? 1.0 : -1.0;
    for (int i = 1; i <= n; ++i) {
        const double h = h0 + sign * std::abs(sweep) * i / n;
        pts.push_back(center + radius * Eigen::Vector2d{std::sin(h), -std::cos(h)});
    }
    heading = h0 + sign * std::abs(sweep);
}

} // namespace

RoadGeometry make_arc_road(double radius, double sweep, double half_width, double heading,
                           const Eigen::Vector2d& origin, double spacing)
{
    if (radius == 0.0 || !(std::abs(sweep) > 0.0) || !(spacing > 0.0))
        throw ConfigError("road: arc radius, sweep and spacing must be non-zero");
    std::vector<Eigen::Vector2d> pts{origin};
    double h = heading;
    append_arc(pts, h, radius, sweep, spacing);
    return RoadGeometry(std::move(pts), half_width);
}

RoadGeometry make_s_curve_road(double total_length, double radius, double half_width,
                               double spacing)
{
    if (!(total_length > 0.0) || !(radius > 0.0))
        throw ConfigError("road: s-curve length and radius must be positive");
    const double sweep = 0.5 * total_length / radius;
    std::vector<Eigen::Vector2d> pts{Eigen::Vector2d::Zero()};
    double h = 0.0;
    append_arc(pts, h, radius, sweep, spacing);
    append_arc(pts, h, -radius, sweep, spacing);
    return RoadGeometry(std::move(pts), half_width);
}

} // namespace enkmp
