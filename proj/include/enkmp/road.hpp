#pragma once

#include <cstdint>
#include <unordered_map>
#include <vector>

#include <Eigen/Core>

namespace enkmp {

/// Road described by a centerline polyline and a half width. Lateral
/// offsets are positive to the left of the direction of travel.
class RoadGeometry
{
public:
    struct Projection
    {
        double arclength = 0.0; // clamped to [0, length]
        double lateral = 0.0;   // signed offset from the centerline
        Eigen::Vector2d foot{0.0, 0.0};
        double heading = 0.0; // centerline tangent at the foot point
    };

    RoadGeometry(std::vector<Eigen::Vector2d> centerline, double half_width);

    /// Closest centerline point. Beyond either end the lateral offset is
    /// measured against the extension of the end segment.
    Projection project(const Eigen::Vector2d& point) const;

    Eigen::Vector2d point_at(double arclength, double lateral = 0.0) const;
    double heading_at(double arclength) const;

    double length() const { return cumulative_.back(); }
    double half_width() const { return half_width_; }
    const std::vector<Eigen::Vector2d>& centerline() const { return points_; }

    RoadGeometry transformed(double rotation, const Eigen::Vector2d& translation) const;

private:
    std::size_t segment_at(double arclength) const;
    double segment_distance2(std::size_t seg, const Eigen::Vector2d& p, double& t) const;
    std::int64_t cell_key(std::int64_t cx, std::int64_t cy) const;

    std::vector<Eigen::Vector2d> points_;
    std::vector<double> cumulative_;
    std::vector<double> headings_;
    double half_width_;

    // Uniform grid over segments for fast nearest-segment queries.
    double cell_size_ = 10.0;
    std::unordered_map<std::int64_t, std::vector<std::uint32_t>> grid_;
};

RoadGeometry make_straight_road(double length, double half_width, double heading = 0.0,
                                const Eigen::Vector2d& origin = Eigen::Vector2d::Zero(),
                                double spacing = 1.0);

/// Circular arc starting at `origin` with initial heading `heading`.
/// Positive radius turns left.
RoadGeometry make_arc_road(double radius, double sweep, double half_width, double heading = 0.0,
                           const Eigen::Vector2d& origin = Eigen::Vector2d::Zero(),
                           double spacing = 1.0);

/// Two opposite arcs of equal radius and equal length (left, then right).
RoadGeometry make_s_curve_road(double total_length, double radius, double half_width,
                               double spacing = 1.0);

} // namespace enkmp
