#include "enkmp/constraints.hpp"

#include <cmath>
#include <limits>

#include "enkmp/errors.hpp"

namespace enkmp {

Footprint Footprint::discs(int count, double spacing, double radius)
{
    if (count <= 0)
        throw ConfigError("footprint: need at least one disc");
    if (!(radius > 0.0))
        throw ConfigError("footprint: disc radius must be positive");
    Footprint fp;
    fp.radius = radius;
    for (int i = 0; i < count; ++i)
        fp.centers.emplace_back((i - 0.5 * (count - 1)) * spacing, 0.0);
    return fp;
}

void ConstraintConfig::validate() const
{
    if (!(d_min > 0.0))
        throw ConfigError("constraints: d_min must be positive");
    if (!(road_half_width > 0.0))
        throw ConfigError("constraints: road_half_width must be positive");
    if (!(u_min.array() < u_max.array()).all())
        throw ConfigError("constraints: u_min must be below u_max componentwise");
    if (!(vehicle_disc_radius > 0.0))
        throw ConfigError("constraints: vehicle_disc_radius must be positive");
    if (discs_per_vehicle <= 0)
        throw ConfigError("constraints: discs_per_vehicle must be positive");
    if (!(disc_spacing >= 0.0))
        throw ConfigError("constraints: disc_spacing must be non-negative");
}

void BarrierConfig::validate() const
{
    if (!(alpha > 0.0) || !(beta > 0.0))
        throw ConfigError("barrier: alpha and beta must be positive");
    if (!(noise_var > 0.0))
        throw ConfigError("barrier: noise_var must be positive");
}

std::vector<Eigen::Vector2d> world_discs(const Eigen::Vector2d& position, double heading,
                                         const Footprint& footprint)
{
    const double c = std::cos(heading);
    const double s = std::sin(heading);
    std::vector<Eigen::Vector2d> out;
    out.reserve(footprint.centers.size());
    for (const auto& b : footprint.centers)
        out.emplace_back(position.x() + c * b.x() - s * b.y(), position.y() + s * b.x() + c * b.y());
    return out;
}

double vehicle_distance(const VehicleState& ev, const Footprint& ev_footprint,
                        const ObstacleState& obstacle)
{
    const auto a = world_discs({ev.x_pos, ev.y_pos}, ev.heading, ev_footprint);
    const auto b = world_discs(obstacle.position, obstacle.heading, obstacle.footprint);
    double best = std::numeric_limits<double>::infinity();
    for (const auto& pa : a)
        for (const auto& pb : b)
            best = std::min(best, (pa - pb).norm());
    return best - ev_footprint.radius - obstacle.footprint.radius;
}

double boundary_violation(const VehicleState& ev, const RoadGeometry& road)
{
    return std::abs(road.project({ev.x_pos, ev.y_pos}).lateral) - road.half_width();
}

Eigen::VectorXd stack_constraints(const VehicleState& ev, const ControlInput& control,
                                  const ObstacleSnapshot& obstacles, const RoadGeometry& road,
                                  const ConstraintConfig& config)
{
    const auto m = static_cast<Eigen::Index>(obstacles.size());
    Eigen::VectorXd g(constraint_count(obstacles.size()));
    const Footprint ev_fp = config.footprint();
    for (Eigen::Index i = 0; i < m; ++i)
        g[i] = config.d_min - vehicle_distance(ev, ev_fp, obstacles[static_cast<std::size_t>(i)]);
    g[m] = boundary_violation(ev, road);
    const ControlVector u = control.vector();
    g.segment<2>(m + 1) = config.u_min - u;
    g.segment<2>(m + 3) = u - config.u_max;
    return g;
}

double softplus(double s, double alpha, double beta)
{
    const double x = beta * s;
    return (std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x)))) / alpha;
}

Eigen::VectorXd softplus_barrier(const Eigen::VectorXd& g, const BarrierConfig& barrier)
{
    Eigen::VectorXd out(g.size());
    for (Eigen::Index i = 0; i < g.size(); ++i)
        out[i] = softplus(g[i], barrier.alpha, barrier.beta);
    return out;
}

} // namespace enkmp
