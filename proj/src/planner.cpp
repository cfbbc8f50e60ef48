#include "enkmp/planner.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>

#include "enkmp/errors.hpp"
#include "enkmp/rng.hpp"

namespace enkmp {

NoiseModel PlannerConfig::noise() const
{
    return NoiseModel::from_weights(control_weight, reference_weight, barrier.noise_var);
}

void PlannerConfig::validate() const
{
    if (horizon < 1)
        throw ConfigError("planner: horizon must be at least 1");
    if (!(dt > 0.0))
        throw ConfigError("planner: dt must be positive");
    smoother.validate();
    barrier.validate();
    constraint.validate();
    (void)noise(); // checks Q and R
}

std::vector<StateVector> build_reference(const RoadGeometry& road, const VehicleState& state,
                                         int horizon, double dt, double target_speed,
                                         double lane_offset)
{
    if (horizon < 0)
        throw ConfigError("build_reference: negative horizon");
    if (!(target_speed >= 0.0))
        throw ConfigError("build_reference: target speed must be non-negative");
    const double s0 = road.project({state.x_pos, state.y_pos}).arclength;
    std::vector<StateVector> ref;
    ref.reserve(static_cast<std::size_t>(horizon) + 1);
    for (int t = 0; t <= horizon; ++t) {
        const double s = std::min(s0 + target_speed * dt * t, road.length());
        const Eigen::Vector2d p = road.point_at(s, lane_offset);
        const double heading = state.heading + wrap_angle(road.heading_at(s) - state.heading);
        ref.emplace_back(p.x(), p.y(), heading, target_speed);
    }
    return ref;
}

double stage_cost(const StateVector& x, const ControlVector& u, const StateVector& r,
                  const Eigen::Matrix2d& q, const Eigen::Matrix4d& r_weight)
{
    const StateVector e = x - r;
    return e.dot(r_weight * e) + u.dot(q * u);
}

Eigen::MatrixXd initial_slice(const VehicleState& state, const NoiseModel& noise, int n_members,
                              std::uint64_t seed)
{
    Eigen::MatrixXd slice(kAugmentedDim, n_members);
    const StateVector x = state.vector();
    for (int i = 0; i < n_members; ++i) {
        auto rng = make_stream(seed, static_cast<std::uint64_t>(i), 0, NoiseRole::initial);
        slice.col(i).head<4>() = x;
        slice.col(i).tail<2>() = noise.control_factor() * standard_normal(rng, 2);
    }
    return slice;
}

Eigen::MatrixXd warmstart(const TrajectoryEnsemble& previous, const VehicleState& state)
{
    if (previous.state_dim() != kAugmentedDim)
        throw ConfigError("warmstart: ensemble is not over augmented states");
    if (previous.length() < 2)
        throw ConfigError("warmstart: previous ensemble must span at least two slices");
    Eigen::MatrixXd slice = previous.slice(1);
    slice.topRows<4>().colwise() = state.vector();
    return slice;
}

PlanOutput plan_step(const VehicleState& state, const TrajectoryEnsemble* previous,
                     const Scene& scene, const DynamicsModel& dynamics,
                     const PlannerConfig& config, std::uint64_t seed)
{
    const auto start = std::chrono::steady_clock::now();
    if (!state.finite())
        throw InvalidStateError("plan_step: non-finite vehicle state");
    const int horizon = config.horizon;
    const int n = config.smoother.n_members;
    if (static_cast<int>(scene.reference.size()) != horizon + 1)
        throw ConfigError("plan_step: reference must hold horizon + 1 waypoints");
    if (config.use_barrier && scene.road == nullptr)
        throw ConfigError("plan_step: constrained planning needs a road");

    const NoiseModel noise = config.noise();

    Eigen::MatrixXd init;
    if (previous != nullptr && previous->n_members() == n && previous->length() >= 2)
        init = warmstart(*previous, state);
    else
        init = initial_slice(state, noise, n, seed);

    // Obstacles are known only at time k; later times use the prediction model.
    std::vector<ObstacleSnapshot> predicted;
    predicted.reserve(static_cast<std::size_t>(horizon) + 1);
    for (int t = 0; t <= horizon; ++t)
        predicted.push_back(predicted_obstacles(scene.obstacles, t, config.dt));

    ConstraintContext context;
    context.road = scene.road;
    context.constraint = config.constraint;
    context.barrier = config.barrier;
    context.enabled = config.use_barrier;

    const int barrier_dim = config.use_barrier ? constraint_count(scene.obstacles.size()) : 0;
    int observations_used = 0;

    auto transition = [&](const Eigen::MatrixXd& prev, int t) {
        return transition_ensemble(prev, noise, dynamics, config.dt, seed, t);
    };
    auto measurement = [&](const Eigen::MatrixXd& current, int t) {
        ConstraintContext ctx = context;
        ctx.obstacles = &predicted[static_cast<std::size_t>(t)];
        return measurement_ensemble(current, noise, ctx, seed, t);
    };
    // The observed virtual measurement is always (r_t, 0).
    auto observation = [&](int t) {
        ++observations_used;
        Eigen::VectorXd y = Eigen::VectorXd::Zero(4 + barrier_dim);
        y.head<4>() = scene.reference[static_cast<std::size_t>(t)];
        return y;
    };

    SmootherConfig smoother = config.smoother;
    smoother.rng_seed = seed;
    SmoothResult smoothed =
        smooth_horizon(TrajectoryEnsemble::from_initial(init, horizon + 1), horizon, transition,
                       measurement, observation, smoother);

    PlanResult result;
    result.mean_trajectory.reserve(static_cast<std::size_t>(horizon) + 1);
    for (int t = 0; t <= horizon; ++t)
        result.mean_trajectory.push_back(
            AugmentedState::from_vector(smoothed.mean.segment<kAugmentedDim>(t * kAugmentedDim)));
    result.raw_control = result.mean_trajectory.front().control;
    const ControlVector clamped = result.raw_control.vector()
                                      .cwiseMax(config.constraint.u_min)
                                      .cwiseMin(config.constraint.u_max);
    result.applied_control = ControlInput::from_vector(clamped);
    if (!result.applied_control.finite())
        throw NumericalError("plan_step: smoother produced a non-finite control", 0.0);

    for (const auto& d : smoothed.diagnostics) {
        result.diagnostics.max_innovation_rms = std::max(result.diagnostics.max_innovation_rms, d.innovation_rms);
        result.diagnostics.min_rcond = std::min(result.diagnostics.min_rcond, d.rcond);
    }
    result.diagnostics.observations_used = observations_used;
    result.plan_time =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return {std::move(result), std::move(smoothed.ensemble)};
}

EnsemblePlanner::EnsemblePlanner(PlannerConfig config, const DynamicsModel& dynamics, bool warmstart)
    : config_(std::move(config)), dynamics_(&dynamics), use_warmstart_(warmstart)
{
    config_.validate();
}

PlanResult EnsemblePlanner::plan(const VehicleState& state, const Scene& scene)
{
    const std::uint64_t seed = splitmix64(config_.smoother.rng_seed + 0x9e3779b97f4a7c15ULL * (step_ + 1));
    ++step_;
    const TrajectoryEnsemble* prev = (use_warmstart_ && previous_) ? &*previous_ : nullptr;
    PlanOutput out = plan_step(state, prev, scene, *dynamics_, config_, seed);
    previous_ = std::move(out.ensemble);
    return std::move(out.result);
}

void EnsemblePlanner::reset()
{
    previous_.reset();
    step_ = 0;
}

} // namespace enkmp
