#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include <Eigen/Core>

#include "enkmp/constraints.hpp"
#include "enkmp/dynamics.hpp"
#include "enkmp/enks.hpp"
#include "enkmp/road.hpp"
#include "enkmp/virtual_system.hpp"

namespace enkmp {

struct PlannerConfig
{
    int horizon = 40;
    double dt = kDefaultDt;
    SmootherConfig smoother;
    Eigen::Matrix2d control_weight = Eigen::Vector2d(1.0, 10.0).asDiagonal();        // Q
    Eigen::Matrix4d reference_weight = Eigen::Vector4d(1.0, 1.0, 1.0, 1.0).asDiagonal(); // R
    BarrierConfig barrier;
    ConstraintConfig constraint;
    /// Off for unconstrained problems: the measurement is then the reference only.
    bool use_barrier = true;

    NoiseModel noise() const;
    void validate() const;
};

/// Inputs the planner may see at time k: the road, obstacles as observed
/// at k, and the reference waypoints r_k..r_{k+H}.
struct Scene
{
    const RoadGeometry* road = nullptr;
    ObstacleSnapshot obstacles;
    std::vector<StateVector> reference;
};

struct PlanDiagnostics
{
    double max_innovation_rms = 0.0;
    double min_rcond = 1.0;
    int observations_used = 0;
};

struct PlanResult
{
    ControlInput applied_control;             // saturated to [u_min, u_max]
    ControlInput raw_control;                 // before saturation
    std::vector<AugmentedState> mean_trajectory; // k..k+H
    double plan_time = 0.0;                   // wall clock, seconds
    PlanDiagnostics diagnostics;
};

struct PlanOutput
{
    PlanResult result;
    TrajectoryEnsemble ensemble; // final smoothed ensemble, reused for warmstart
};

/// Waypoints r_k..r_{k+H}: the EV's arclength projection advanced at the
/// target speed along the centerline (shifted by lane_offset). Headings
/// are unwrapped to lie within pi of the current heading.
std::vector<StateVector> build_reference(const RoadGeometry& road, const VehicleState& state,
                                         int horizon, double dt, double target_speed,
                                         double lane_offset = 0.0);

/// (x - r)^T R (x - r) + u^T Q u
double stage_cost(const StateVector& x, const ControlVector& u, const StateVector& r,
                  const Eigen::Matrix2d& q, const Eigen::Matrix4d& r_weight);

/// Cold-start initial slice: vehicle part equal to x_k, control ~ N(0, Q^-1).
Eigen::MatrixXd initial_slice(const VehicleState& state, const NoiseModel& noise, int n_members,
                              std::uint64_t seed);

/// New initial slice from the previous horizon: each member's slice 1 with
/// its vehicle part replaced by the measured state.
Eigen::MatrixXd warmstart(const TrajectoryEnsemble& previous, const VehicleState& state);

/// One receding-horizon solve. `seed` keys every noise stream of this solve.
PlanOutput plan_step(const VehicleState& state, const TrajectoryEnsemble* previous,
                     const Scene& scene, const DynamicsModel& dynamics,
                     const PlannerConfig& config, std::uint64_t seed);

/// Keeps the warmstart ensemble between calls.
class EnsemblePlanner
{
public:
    EnsemblePlanner(PlannerConfig config, const DynamicsModel& dynamics, bool warmstart = true);

    PlanResult plan(const VehicleState& state, const Scene& scene);
    void reset();

    const PlannerConfig& config() const { return config_; }
    PlannerConfig& mutable_config() { return config_; }

private:
    PlannerConfig config_;
    const DynamicsModel* dynamics_;
    bool use_warmstart_;
    std::optional<TrajectoryEnsemble> previous_;
    std::uint64_t step_ = 0;
};

} // namespace enkmp
