#include "enkmp/scenario.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>

#include "enkmp/errors.hpp"
#include "enkmp/mlp.hpp"

namespace enkmp {

std::string method_name(PlannerMethod m)
{
    return m == PlannerMethod::enks ? "enks" : "penalty";
}

PlannerMethod method_from_name(const std::string& name)
{
    if (name == "enks")
        return PlannerMethod::enks;
    if (name == "penalty")
        return PlannerMethod::penalty;
    throw ConfigError("unknown planner method '" + name + "' (expected enks or penalty)");
}

RoadGeometry build_road(const RoadSpec& spec, double half_width)
{
    if (spec.type == "straight")
        return make_straight_road(spec.length, half_width, spec.heading, Eigen::Vector2d::Zero(),
                                  spec.spacing);
    if (spec.type == "arc")
        return make_arc_road(spec.radius, spec.sweep, half_width, spec.heading,
                             Eigen::Vector2d::Zero(), spec.spacing);
    if (spec.type == "s_curve")
        return make_s_curve_road(spec.length, spec.radius, half_width, spec.spacing);
    if (spec.type == "polyline") {
        if (!spec.points.empty())
            return RoadGeometry(spec.points, half_width);
        std::ifstream in(spec.file);
        if (!in)
            throw ConfigError("road: cannot open polyline file '" + spec.file.string() + "'");
        std::vector<Eigen::Vector2d> pts;
        std::string line;
        int line_no = 0;
        while (std::getline(in, line)) {
            ++line_no;
            if (line.empty() || line[0] == '#')
                continue;
            std::replace(line.begin(), line.end(), ',', ' ');
            std::istringstream ss(line);
            double x = 0.0, y = 0.0;
            if (!(ss >> x >> y)) {
                if (pts.empty())
                    continue; // header row
                throw ConfigError("road: bad polyline row at line " + std::to_string(line_no));
            }
            pts.emplace_back(x, y);
        }
        return RoadGeometry(std::move(pts), half_width);
    }
    throw ConfigError("road: unknown type '" + spec.type + "'");
}

void ScenarioConfig::validate() const
{
    if (steps < 1)
        throw ConfigError("scenario: steps must be at least 1");
    for (const auto& ov : obstacles)
        if (!(ov.speed >= 0.0))
            throw ConfigError("scenario: obstacle speeds must be non-negative");
    if (!(target_speed >= 0.0))
        throw ConfigError("scenario: target_speed must be non-negative");
    planner.validate();
    penalty.validate();
    vehicle.validate();
}

VehicleState initial_ev_state(const ScenarioConfig& config, const RoadGeometry& road)
{
    const Eigen::Vector2d p = road.point_at(config.ev_arclength, config.ev_lane_offset);
    return {p.x(), p.y(), road.heading_at(config.ev_arclength), config.ev_speed};
}

ObstacleSnapshot obstacles_at(const ScenarioConfig& config, const RoadGeometry& road, int k)
{
    const Footprint fp = config.planner.constraint.footprint();
    ObstacleSnapshot out;
    out.reserve(config.obstacles.size());
    for (const auto& spec : config.obstacles) {
        const double s = spec.arclength + spec.speed * config.planner.dt * k;
        ObstacleState ov;
        ov.position = road.point_at(s, spec.lane_offset);
        ov.heading = road.heading_at(s);
        ov.speed = s < road.length() ? spec.speed : 0.0;
        ov.footprint = fp;
        out.push_back(std::move(ov));
    }
    return out;
}

namespace {

void fill_safety(StepRecord& rec, const ScenarioConfig& config, const RoadGeometry& road,
                 const ObstacleSnapshot& obstacles)
{
    const Footprint ev_fp = config.planner.constraint.footprint();
    rec.obstacle_distance.clear();
    for (const auto& ov : obstacles)
        rec.obstacle_distance.push_back(vehicle_distance(rec.state, ev_fp, ov));
    rec.boundary_margin = boundary_violation(rec.state, road);
}

} // namespace

ScenarioResult run_scenario(const ScenarioConfig& config, const DynamicsModel& planner_model)
{
    config.validate();
    const RoadGeometry road = build_road(config.road, config.planner.constraint.road_half_width);
    const PlannerConfig& pcfg = config.planner;

    ScenarioResult result;
    ScenarioSummary& summary = result.summary;
    summary.method = method_name(config.method);
    summary.n_members = config.method == PlannerMethod::enks ? pcfg.smoother.n_members : 0;
    summary.horizon = pcfg.horizon;
    summary.seed = config.seed;

    PlannerConfig seeded = pcfg;
    seeded.smoother.rng_seed = config.seed;
    EnsemblePlanner planner(seeded, planner_model, config.warmstart);
    std::vector<ControlVector> penalty_guess;

    VehicleState state = initial_ev_state(config, road);
    result.records.reserve(static_cast<std::size_t>(config.steps));

    for (int k = 0; k < config.steps; ++k) {
        const ObstacleSnapshot obstacles = obstacles_at(config, road, k);
        Scene scene{&road, obstacles,
                    build_reference(road, state, pcfg.horizon, pcfg.dt, config.target_speed,
                                    config.reference_lane_offset)};

        StepRecord rec;
        rec.k = k;
        rec.state = state;
        try {
            if (config.method == PlannerMethod::enks) {
                PlanResult plan;
                int attempt = 0;
                for (;;) {
                    try {
                        plan = planner.plan(state, scene);
                        break;
                    } catch (const NumericalError&) {
                        if (++attempt > 2)
                            throw;
                        planner.mutable_config().smoother.jitter =
                            std::max(planner.config().smoother.jitter, 1e-12) * 1e4;
                    }
                }
                planner.mutable_config().smoother.jitter = seeded.smoother.jitter;
                rec.control = plan.applied_control;
                rec.plan_time = plan.plan_time;
                rec.innovation_rms = plan.diagnostics.max_innovation_rms;
                rec.min_rcond = plan.diagnostics.min_rcond;
            } else {
                PenaltyResult sol = penalty_nmpc_solve(planner_model, scene, state, pcfg,
                                                       config.penalty, penalty_guess);
                const ControlVector u =
                    sol.controls.front().cwiseMax(pcfg.constraint.u_min).cwiseMin(pcfg.constraint.u_max);
                rec.control = ControlInput::from_vector(u);
                rec.plan_time = sol.wall_time;
                penalty_guess.assign(sol.controls.begin() + 1, sol.controls.end());
                penalty_guess.push_back(sol.controls.back());
            }
        } catch (const Error& e) {
            summary.failure = "step " + std::to_string(k) + ": " + e.what();
            break;
        }

        rec.stage_cost = stage_cost(state.vector(), rec.control.vector(), scene.reference.front(),
                                    pcfg.control_weight, pcfg.reference_weight);
        fill_safety(rec, config, road, obstacles);
        result.records.push_back(rec);

        state = true_step(state, rec.control, config.vehicle, pcfg.dt);
    }

    summary.steps_completed = static_cast<int>(result.records.size());
    summary.completed = summary.steps_completed == config.steps && summary.failure.empty();

    summary.min_distance = std::numeric_limits<double>::infinity();
    double plan_time_sum = 0.0;
    for (const auto& rec : result.records) {
        summary.total_cost += rec.stage_cost;
        plan_time_sum += rec.plan_time;
        summary.max_plan_time = std::max(summary.max_plan_time, rec.plan_time);
        for (double d : rec.obstacle_distance) {
            summary.min_distance = std::min(summary.min_distance, d);
            if (d < pcfg.constraint.d_min)
                ++summary.collision_violations;
        }
        if (rec.boundary_margin > 0.0)
            ++summary.boundary_violations;
    }
    if (summary.completed) {
        // The state reached after the last applied control is checked too.
        StepRecord last;
        last.state = state;
        fill_safety(last, config, road, obstacles_at(config, road, config.steps));
        for (double d : last.obstacle_distance) {
            summary.min_distance = std::min(summary.min_distance, d);
            if (d < pcfg.constraint.d_min)
                ++summary.collision_violations;
        }
        if (last.boundary_margin > 0.0)
            ++summary.boundary_violations;
    }
    if (!result.records.empty())
        summary.mean_plan_time = plan_time_sum / static_cast<double>(result.records.size());
    return result;
}

ScenarioResult run_scenario(const ScenarioConfig& config)
{
    if (config.bicycle_fallback)
        return run_scenario(config, EulerBicycleDynamics(config.vehicle));
    if (config.model_path.empty())
        throw ConfigError("scenario: no model path given and bicycle_fallback is off");
    const SurrogateDynamics dynamics(load_model(config.model_path));
    return run_scenario(config, dynamics);
}

SummaryRow summarize(const std::vector<StepRecord>& records, const std::string& method,
                     int n_members, int horizon)
{
    if (records.empty())
        throw ConfigError("summarize: no records");
    SummaryRow row;
    row.method = method;
    row.n_members = n_members;
    row.horizon = horizon;
    for (const auto& rec : records) {
        row.total_cost += rec.stage_cost;
        row.avg_plan_time += rec.plan_time;
    }
    row.avg_plan_time /= static_cast<double>(records.size());
    return row;
}

double relative_change_percent(double value, double baseline)
{
    return 100.0 * (value - baseline) / baseline;
}

void apply_relative(SummaryRow& row, const SummaryRow& baseline)
{
    row.relative_cost_change = relative_change_percent(row.total_cost, baseline.total_cost);
    row.relative_time_change = relative_change_percent(row.avg_plan_time, baseline.avg_plan_time);
}

namespace {

std::string fmt(double v)
{
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

} // namespace

void write_step_csv(const std::vector<StepRecord>& records, std::size_t n_obstacles,
                    const std::filesystem::path& path)
{
    std::ofstream out(path);
    if (!out)
        throw Error("cannot open '" + path.string() + "' for writing");
    out << "# enkmp step log v" << kStepCsvVersion << '\n';
    out << "k,x,y,heading,speed,accel,steer";
    for (std::size_t i = 0; i < n_obstacles; ++i)
        out << ",dist_ov" << (i + 1);
    out << ",boundary_margin,stage_cost,innovation_rms,min_rcond\n";
    for (const auto& r : records) {
        out << r.k << ',' << fmt(r.state.x_pos) << ',' << fmt(r.state.y_pos) << ','
            << fmt(r.state.heading) << ',' << fmt(r.state.speed) << ',' << fmt(r.control.accel)
            << ',' << fmt(r.control.steer);
        for (double d : r.obstacle_distance)
            out << ',' << fmt(d);
        out << ',' << fmt(r.boundary_margin) << ',' << fmt(r.stage_cost) << ','
            << fmt(r.innovation_rms) << ',' << fmt(r.min_rcond) << '\n';
    }
    out.flush();
}

void write_timing_csv(const std::vector<StepRecord>& records, const std::filesystem::path& path)
{
    std::ofstream out(path);
    if (!out)
        throw Error("cannot open '" + path.string() + "' for writing");
    out << "k,plan_time_s\n";
    for (const auto& r : records)
        out << r.k << ',' << fmt(r.plan_time) << '\n';
}

} // namespace enkmp
