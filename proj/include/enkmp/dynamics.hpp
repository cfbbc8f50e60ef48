#pragma once

#include <Eigen/Core>

namespace enkmp {

using StateVector = Eigen::Vector4d;   // (x, y, heading, speed)
using ControlVector = Eigen::Vector2d; // (accel, steer)
using StateMatrix = Eigen::Matrix<double, 4, Eigen::Dynamic>;
using ControlMatrix = Eigen::Matrix<double, 2, Eigen::Dynamic>;

inline constexpr int kStateDim = 4;
inline constexpr int kControlDim = 2;
inline constexpr double kDefaultDt = 0.1;

struct VehicleState
{
    double x_pos = 0.0;   // m
    double y_pos = 0.0;   // m
    double heading = 0.0; // rad
    double speed = 0.0;   // m/s

    StateVector vector() const { return {x_pos, y_pos, heading, speed}; }
    static VehicleState from_vector(const StateVector& v) { return {v[0], v[1], v[2], v[3]}; }
    bool finite() const;
    bool operator==(const VehicleState&) const = default;
};

struct ControlInput
{
    double accel = 0.0; // m/s^2
    double steer = 0.0; // rad

    ControlVector vector() const { return {accel, steer}; }
    static ControlInput from_vector(const ControlVector& v) { return {v[0], v[1]}; }
    bool finite() const;
    bool operator==(const ControlInput&) const = default;
};

struct BicycleParams
{
    double wheelbase = 2.5;      // m
    double speed_floor = 0.0;    // m/s
    double speed_ceiling = 40.0; // m/s

    /// Throws ConfigError.
    void validate() const;
};

/// Wraps an angle to (-pi, pi].
double wrap_angle(double angle);

/// Kinematic single-track model: (v cos psi, v sin psi, v tan(delta) / L, a).
StateVector bicycle_derivative(const VehicleState& state, const ControlInput& control,
                               const BicycleParams& params);

/// Ground-truth plant step: one RK4 step over dt, then speed clamp and
/// heading wrap.
VehicleState true_step(const VehicleState& state, const ControlInput& control,
                       const BicycleParams& params, double dt);

/// Discrete-time prediction model used inside the planner. Members are
/// columns; implementations must be pure.
class DynamicsModel
{
public:
    virtual ~DynamicsModel() = default;

    virtual StateMatrix step_batch(const StateMatrix& states, const ControlMatrix& controls,
                                   double dt) const = 0;

    StateVector step(const StateVector& state, const ControlVector& control, double dt) const;
};

/// Forward-Euler bicycle model. Used when no trained surrogate is available.
class EulerBicycleDynamics final : public DynamicsModel
{
public:
    explicit EulerBicycleDynamics(BicycleParams params) : params_(params) {}

    StateMatrix step_batch(const StateMatrix& states, const ControlMatrix& controls,
                           double dt) const override;

private:
    BicycleParams params_;
};

/// x' = A x + B u. The time step is baked into A and B; dt is ignored.
class LinearDynamics final : public DynamicsModel
{
public:
    LinearDynamics(Eigen::Matrix4d a, Eigen::Matrix<double, 4, 2> b) : a_(a), b_(b) {}

    StateMatrix step_batch(const StateMatrix& states, const ControlMatrix& controls,
                           double dt) const override;

    const Eigen::Matrix4d& a() const { return a_; }
    const Eigen::Matrix<double, 4, 2>& b() const { return b_; }

private:
    Eigen::Matrix4d a_;
    Eigen::Matrix<double, 4, 2> b_;
};

} // namespace enkmp
