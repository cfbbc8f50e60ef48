#include "enkmp/virtual_system.hpp"

#include <cmath>

#include <Eigen/Dense>

#include "enkmp/errors.hpp"
#include "enkmp/rng.hpp"

namespace enkmp {

namespace {

template <int Dim>
Eigen::Matrix<double, Dim, Dim> psd_sqrt(const Eigen::Matrix<double, Dim, Dim>& cov, const char* name)
{
    if (!cov.allFinite())
        throw ConfigError(std::string("noise: non-finite ") + name);
    if (!cov.isApprox(cov.transpose(), 1e-12))
        throw ConfigError(std::string("noise: ") + name + " is not symmetric");
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix<double, Dim, Dim>> eig(cov);
    const auto values = eig.eigenvalues();
    if (values.minCoeff() < -1e-12 * std::max(1.0, values.cwiseAbs().maxCoeff()))
        throw ConfigError(std::string("noise: ") + name + " is not positive semidefinite");
    const auto roots = values.cwiseMax(0.0).cwiseSqrt();
    return eig.eigenvectors() * roots.asDiagonal() * eig.eigenvectors().transpose();
}

} // namespace

AugmentedVector AugmentedState::vector() const
{
    AugmentedVector v;
    v << vehicle.vector(), control.vector();
    return v;
}

AugmentedState AugmentedState::from_vector(const AugmentedVector& v)
{
    return {VehicleState::from_vector(v.head<4>()), ControlInput::from_vector(v.tail<2>())};
}

Eigen::VectorXd VirtualMeasurement::vector() const
{
    Eigen::VectorXd y(4 + barrier.size());
    y << reference, barrier;
    return y;
}

NoiseModel::NoiseModel(const Eigen::Matrix2d& control_cov, const Eigen::Matrix4d& reference_cov,
                       double barrier_var)
    : control_cov_(control_cov),
      reference_cov_(reference_cov),
      barrier_var_(barrier_var),
      control_factor_(psd_sqrt<2>(control_cov, "control covariance")),
      reference_factor_(psd_sqrt<4>(reference_cov, "reference covariance")),
      barrier_std_(0.0)
{
    if (!(barrier_var >= 0.0) || !std::isfinite(barrier_var))
        throw ConfigError("noise: barrier variance must be finite and non-negative");
    barrier_std_ = std::sqrt(barrier_var);
}

NoiseModel NoiseModel::from_weights(const Eigen::Matrix2d& control_weight,
                                    const Eigen::Matrix4d& reference_weight, double barrier_var)
{
    Eigen::LLT<Eigen::Matrix2d> q(control_weight);
    Eigen::LLT<Eigen::Matrix4d> r(reference_weight);
    if (q.info() != Eigen::Success || !control_weight.isApprox(control_weight.transpose()))
        throw ConfigError("noise: control weight Q must be symmetric positive definite");
    if (r.info() != Eigen::Success || !reference_weight.isApprox(reference_weight.transpose()))
        throw ConfigError("noise: reference weight R must be symmetric positive definite");
    Eigen::Matrix2d q_inv = q.solve(Eigen::Matrix2d::Identity());
    Eigen::Matrix4d r_inv = r.solve(Eigen::Matrix4d::Identity());
    q_inv = 0.5 * (q_inv + q_inv.transpose()).eval();
    r_inv = 0.5 * (r_inv + r_inv.transpose()).eval();
    return NoiseModel(q_inv, r_inv, barrier_var);
}

int ConstraintContext::barrier_dim() const
{
    if (!enabled)
        return 0;
    return constraint_count(obstacles ? obstacles->size() : 0);
}

namespace {

ControlVector draw_control(const NoiseModel& noise, StreamRng& rng)
{
    const Eigen::VectorXd z = standard_normal(rng, 2);
    return noise.control_factor() * z;
}

void fill_measurement(const AugmentedVector& x, const NoiseModel& noise,
                      const ConstraintContext& context, StreamRng& rng,
                      Eigen::Ref<Eigen::VectorXd> out)
{
    const Eigen::VectorXd zr = standard_normal(rng, 4);
    out.head<4>() = x.head<4>() + noise.reference_factor() * zr;
    const int nb = context.barrier_dim();
    if (nb == 0)
        return;
    if (context.road == nullptr)
        throw ConfigError("measurement: barrier enabled without a road");
    static const ObstacleSnapshot no_obstacles;
    const ObstacleSnapshot& obstacles = context.obstacles ? *context.obstacles : no_obstacles;
    const Eigen::VectorXd g =
        stack_constraints(VehicleState::from_vector(x.head<4>()),
                          ControlInput::from_vector(x.tail<2>()), obstacles, *context.road,
                          context.constraint);
    const Eigen::VectorXd zb = standard_normal(rng, nb);
    out.tail(nb) = softplus_barrier(g, context.barrier) + noise.barrier_std() * zb;
}

} // namespace

AugmentedState transition_sample(const AugmentedState& state, const NoiseModel& noise,
                                 const DynamicsModel& dynamics, double dt, StreamRng& rng)
{
    AugmentedState next;
    next.vehicle = VehicleState::from_vector(
        dynamics.step(state.vehicle.vector(), state.control.vector(), dt));
    next.control = ControlInput::from_vector(draw_control(noise, rng));
    return next;
}

VirtualMeasurement measurement_sample(const AugmentedState& state, const NoiseModel& noise,
                                      const ConstraintContext& context, StreamRng& rng)
{
    Eigen::VectorXd y(4 + context.barrier_dim());
    fill_measurement(state.vector(), noise, context, rng, y);
    VirtualMeasurement m;
    m.reference = y.head<4>();
    m.barrier = y.tail(y.size() - 4);
    return m;
}

Eigen::MatrixXd transition_ensemble(const Eigen::MatrixXd& slice, const NoiseModel& noise,
                                    const DynamicsModel& dynamics, double dt, std::uint64_t seed,
                                    int time)
{
    if (slice.rows() != kAugmentedDim)
        throw ConfigError("transition_ensemble: slice must have 6 rows");
    const Eigen::Index n = slice.cols();
    Eigen::MatrixXd next(kAugmentedDim, n);
    next.topRows<4>() = dynamics.step_batch(slice.topRows<4>(), slice.bottomRows<2>(), dt);
    for (Eigen::Index i = 0; i < n; ++i) {
        auto rng = make_stream(seed, static_cast<std::uint64_t>(i), static_cast<std::uint64_t>(time),
                               NoiseRole::transition);
        next.col(i).tail<2>() = draw_control(noise, rng);
    }
    return next;
}

Eigen::MatrixXd measurement_ensemble(const Eigen::MatrixXd& slice, const NoiseModel& noise,
                                     const ConstraintContext& context, std::uint64_t seed,
                                     int time)
{
    if (slice.rows() != kAugmentedDim)
        throw ConfigError("measurement_ensemble: slice must have 6 rows");
    const Eigen::Index n = slice.cols();
    Eigen::MatrixXd y(4 + context.barrier_dim(), n);
    for (Eigen::Index i = 0; i < n; ++i) {
        auto rng = make_stream(seed, static_cast<std::uint64_t>(i), static_cast<std::uint64_t>(time),
                               NoiseRole::measurement);
        const AugmentedVector x = slice.col(i);
        fill_measurement(x, noise, context, rng, y.col(i));
    }
    return y;
}

ObstacleSnapshot predicted_obstacles(const ObstacleSnapshot& obstacles, int steps_ahead, double dt)
{
    if (steps_ahead < 0)
        throw ConfigError("predicted_obstacles: cannot predict into the past");
    ObstacleSnapshot out = obstacles;
    const double horizon = steps_ahead * dt;
    for (auto& ov : out)
        ov.position += ov.speed * horizon * Eigen::Vector2d{std::cos(ov.heading), std::sin(ov.heading)};
    return out;
}

} // namespace enkmp
