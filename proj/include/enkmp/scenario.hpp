#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "enkmp/baselines.hpp"
#include "enkmp/constraints.hpp"
#include "enkmp/dynamics.hpp"
#include "enkmp/planner.hpp"
#include "enkmp/road.hpp"

namespace enkmp {

enum class PlannerMethod
{
    enks,
    penalty,
};

std::string method_name(PlannerMethod m);
PlannerMethod method_from_name(const std::string& name);

struct RoadSpec
{
    std::string type = "s_curve"; // straight | arc | s_curve | polyline
    double length = 400.0;        // straight, s_curve
    double radius = 120.0;        // arc, s_curve
    double sweep = 1.0;           // arc, radians
    double heading = 0.0;         // straight, arc
    double spacing = 1.0;         // polyline sampling of analytic roads
    std::vector<Eigen::Vector2d> points; // polyline
    std::filesystem::path file;          // polyline read from a two-column CSV
};

RoadGeometry build_road(const RoadSpec& spec, double half_width);

/// Obstacle vehicle driving its lane at constant speed.
struct ObstacleSpec
{
    double arclength = 0.0;   // m, along the centerline at k = 0
    double lane_offset = 0.0; // m
    double speed = 0.0;       // m/s
};

struct ScenarioConfig
{
    RoadSpec road;
    double ev_arclength = 10.0;
    double ev_lane_offset = 0.0;
    double ev_speed = 7.0;
    double reference_lane_offset = 0.0;
    double target_speed = 7.0;
    std::vector<ObstacleSpec> obstacles;
    int steps = 500;

    PlannerMethod method = PlannerMethod::enks;
    PlannerConfig planner;
    PenaltyConfig penalty;
    bool warmstart = true;
    BicycleParams vehicle;

    std::filesystem::path model_path;
    bool bicycle_fallback = false;
    std::uint64_t seed = 1;
    std::filesystem::path csv_path;
    std::filesystem::path summary_path;

    void validate() const;
};

struct StepRecord
{
    int k = 0;
    VehicleState state;
    ControlInput control;
    std::vector<double> obstacle_distance;
    double boundary_margin = 0.0; // boundary_violation, <= 0 inside
    double stage_cost = 0.0;
    double plan_time = 0.0;
    double innovation_rms = 0.0;
    double min_rcond = 1.0;
};

struct ScenarioSummary
{
    std::string method;
    int n_members = 0;
    int horizon = 0;
    std::uint64_t seed = 0;
    int steps_completed = 0;
    bool completed = false;
    std::string failure;
    double total_cost = 0.0;
    double min_distance = 0.0;
    double mean_plan_time = 0.0;
    double max_plan_time = 0.0;
    int collision_violations = 0; // steps with distance below d_min
    int boundary_violations = 0;  // steps outside the road
};

struct ScenarioResult
{
    std::vector<StepRecord> records;
    ScenarioSummary summary;
};

VehicleState initial_ev_state(const ScenarioConfig& config, const RoadGeometry& road);

/// Obstacles at step k. Depends only on the config, never on the EV.
ObstacleSnapshot obstacles_at(const ScenarioConfig& config, const RoadGeometry& road, int k);

/// Closed loop: reference -> plan -> true plant step -> obstacles advance ->
/// log. A planner failure is retried with a larger jitter, then aborts with
/// the partial record stream.
ScenarioResult run_scenario(const ScenarioConfig& config, const DynamicsModel& planner_model);

/// Loads the surrogate from config.model_path, or uses the Euler bicycle
/// model when bicycle_fallback is set.
ScenarioResult run_scenario(const ScenarioConfig& config);

struct SummaryRow
{
    std::string method;
    int n_members = 0;
    int horizon = 0;
    double total_cost = 0.0;
    double avg_plan_time = 0.0;
    std::optional<double> relative_cost_change; // percent vs baseline row
    std::optional<double> relative_time_change; // percent vs baseline row
};

SummaryRow summarize(const std::vector<StepRecord>& records, const std::string& method,
                     int n_members, int horizon);

/// 100 * (value - baseline) / baseline
double relative_change_percent(double value, double baseline);

/// Fills the relative columns of `row` against `baseline`.
void apply_relative(SummaryRow& row, const SummaryRow& baseline);

inline constexpr int kStepCsvVersion = 1;

/// Deterministic columns only; identical runs give identical bytes.
void write_step_csv(const std::vector<StepRecord>& records, std::size_t n_obstacles,
                    const std::filesystem::path& path);
/// Wall-clock planning time per step (k, plan_time_s).
void write_timing_csv(const std::vector<StepRecord>& records, const std::filesystem::path& path);

} // namespace enkmp
