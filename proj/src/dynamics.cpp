#include "enkmp/dynamics.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "enkmp/errors.hpp"

namespace enkmp {

bool VehicleState::finite() const
{
    return std::isfinite(x_pos) && std::isfinite(y_pos) && std::isfinite(heading) &&
           std::isfinite(speed);
}

bool ControlInput::finite() const
{
    return std::isfinite(accel) && std::isfinite(steer);
}

void BicycleParams::validate() const
{
    if (!(wheelbase > 0.0))
        throw ConfigError("bicycle: wheelbase must be positive");
    if (!(speed_floor >= 0.0))
        throw ConfigError("bicycle: speed_floor must be non-negative");
    if (!(speed_floor < speed_ceiling))
        throw ConfigError("bicycle: speed_floor must be below speed_ceiling");
}

double wrap_angle(double angle)
{
    constexpr double two_pi = 2.0 * std::numbers::pi;
    double wrapped = std::remainder(angle, two_pi); // [-pi, pi]
    if (wrapped <= -std::numbers::pi)
        wrapped += two_pi;
    return wrapped;
}

StateVector bicycle_derivative(const VehicleState& state, const ControlInput& control,
                               const BicycleParams& params)
{
    if (!state.finite() || !control.finite())
        throw InvalidStateError("bicycle_derivative: non-finite state or control");
    const double v = state.speed;
    return {v * std::cos(state.heading), v * std::sin(state.heading),
            v * std::tan(control.steer) / params.wheelbase, control.accel};
}

VehicleState true_step(const VehicleState& state, const ControlInput& control,
                       const BicycleParams& params, double dt)
{
    if (!(dt > 0.0))
        throw ConfigError("true_step: dt must be positive");

    const StateVector x0 = state.vector();
    auto f = [&](const StateVector& x) {
        return bicycle_derivative(VehicleState::from_vector(x), control, params);
    };
    const StateVector k1 = f(x0);
    const StateVector k2 = f(x0 + 0.5 * dt * k1);
    const StateVector k3 = f(x0 + 0.5 * dt * k2);
    const StateVector k4 = f(x0 + dt * k3);
    StateVector x1 = x0 + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);

    x1[3] = std::clamp(x1[3], params.speed_floor, params.speed_ceiling);
    x1[2] = wrap_angle(x1[2]);

    VehicleState next = VehicleState::from_vector(x1);
    if (!next.finite())
        throw InvalidStateError("true_step: integration produced a non-finite state");
    return next;
}

StateVector DynamicsModel::step(const StateVector& state, const ControlVector& control,
                                double dt) const
{
    return step_batch(state, control, dt).col(0);
}

StateMatrix EulerBicycleDynamics::step_batch(const StateMatrix& states,
                                             const ControlMatrix& controls, double dt) const
{
    StateMatrix next(4, states.cols());
    for (Eigen::Index i = 0; i < states.cols(); ++i) {
        const double heading = states(2, i);
        const double v = states(3, i);
        next(0, i) = states(0, i) + dt * v * std::cos(heading);
        next(1, i) = states(1, i) + dt * v * std::sin(heading);
        next(2, i) = heading + dt * v * std::tan(controls(1, i)) / params_.wheelbase;
        next(3, i) = v + dt * controls(0, i);
    }
    return next;
}

StateMatrix LinearDynamics::step_batch(const StateMatrix& states, const ControlMatrix& controls,
                                       double /*dt*/) const
{
    return a_ * states + b_ * controls;
}

} // namespace enkmp
