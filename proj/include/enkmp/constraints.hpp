#pragma once

#include <vector>

#include <Eigen/Core>

#include "enkmp/dynamics.hpp"
#include "enkmp/road.hpp"

namespace enkmp {

/// Vehicle shape as a row of equal discs along the body x axis.
struct Footprint
{
    std::vector<Eigen::Vector2d> centers; // body frame
    double radius = 1.0;

    /// Centers at (i - (n-1)/2) * spacing, i = 0..n-1.
    static Footprint discs(int count, double spacing, double radius);
};

struct ConstraintConfig
{
    double d_min = 1.0;           // m, required clearance between footprints
    double road_half_width = 3.0; // m, allowed lateral offset of the EV reference point
    ControlVector u_min{-4.0, -0.5};
    ControlVector u_max{2.0, 0.5};
    double vehicle_disc_radius = 1.0; // m
    int discs_per_vehicle = 2;
    double disc_spacing = 2.4; // m, between adjacent disc centers

    Footprint footprint() const
    {
        return Footprint::discs(discs_per_vehicle, disc_spacing, vehicle_disc_radius);
    }
    void validate() const;
};

struct BarrierConfig
{
    double alpha = 1.0;
    double beta = 5.0;
    double noise_var = 1e-4; // variance of the barrier measurement noise

    void validate() const;
};

struct ObstacleState
{
    Eigen::Vector2d position{0.0, 0.0};
    double heading = 0.0;
    double speed = 0.0;
    Footprint footprint;
};

using ObstacleSnapshot = std::vector<ObstacleState>;

std::vector<Eigen::Vector2d> world_discs(const Eigen::Vector2d& position, double heading,
                                         const Footprint& footprint);

/// Minimum over disc pairs of (center distance - r_a - r_b). Negative on overlap.
double vehicle_distance(const VehicleState& ev, const Footprint& ev_footprint,
                        const ObstacleState& obstacle);

/// |lateral offset| - half width of the road. Positive means outside.
double boundary_violation(const VehicleState& ev, const RoadGeometry& road);

/// Number of entries produced by stack_constraints.
inline int constraint_count(std::size_t n_obstacles)
{
    return static_cast<int>(n_obstacles) + 5;
}

/// g(x, u) <= 0 componentwise when satisfied:
///   [d_min - distance_i..., boundary, u_min - u, u - u_max]
Eigen::VectorXd stack_constraints(const VehicleState& ev, const ControlInput& control,
                                  const ObstacleSnapshot& obstacles, const RoadGeometry& road,
                                  const ConstraintConfig& config);

/// (1/alpha) ln(1 + exp(beta s)), overflow-safe.
double softplus(double s, double alpha, double beta);

Eigen::VectorXd softplus_barrier(const Eigen::VectorXd& g, const BarrierConfig& barrier);

} // namespace enkmp
