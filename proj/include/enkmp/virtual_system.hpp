#pragma once

#include <cstdint>
#include <random>

#include <Eigen/Core>

#include "enkmp/constraints.hpp"
#include "enkmp/dynamics.hpp"
#include "enkmp/road.hpp"
#include "enkmp/rng.hpp"

namespace enkmp {

inline constexpr int kAugmentedDim = kStateDim + kControlDim;
using AugmentedVector = Eigen::Matrix<double, kAugmentedDim, 1>;

/// x̄ = (x, u): vehicle state stacked with the control applied at that time.
struct AugmentedState
{
    VehicleState vehicle;
    ControlInput control;

    AugmentedVector vector() const;
    static AugmentedState from_vector(const AugmentedVector& v);
};

/// ȳ = (r, z): a full-state reference and the barrier values.
struct VirtualMeasurement
{
    StateVector reference = StateVector::Zero();
    Eigen::VectorXd barrier;

    Eigen::VectorXd vector() const;
};

/// Noise of the virtual system. The control prior and the reference noise
/// are the inverses of the tracking weights; the barrier noise is isotropic.
class NoiseModel
{
public:
    NoiseModel(const Eigen::Matrix2d& control_cov, const Eigen::Matrix4d& reference_cov,
               double barrier_var);

    /// control_cov = Q^-1, reference_cov = R^-1. Q, R must be positive definite.
    static NoiseModel from_weights(const Eigen::Matrix2d& control_weight,
                                   const Eigen::Matrix4d& reference_weight, double barrier_var);

    const Eigen::Matrix2d& control_cov() const { return control_cov_; }
    const Eigen::Matrix4d& reference_cov() const { return reference_cov_; }
    double barrier_var() const { return barrier_var_; }

    /// Symmetric square roots used to colour standard normal draws.
    const Eigen::Matrix2d& control_factor() const { return control_factor_; }
    const Eigen::Matrix4d& reference_factor() const { return reference_factor_; }
    double barrier_std() const { return barrier_std_; }

private:
    Eigen::Matrix2d control_cov_;
    Eigen::Matrix4d reference_cov_;
    double barrier_var_;
    Eigen::Matrix2d control_factor_;
    Eigen::Matrix4d reference_factor_;
    double barrier_std_;
};

/// Everything the barrier part of the measurement map needs at one time.
struct ConstraintContext
{
    const ObstacleSnapshot* obstacles = nullptr; // predicted to the measurement time
    const RoadGeometry* road = nullptr;
    ConstraintConfig constraint;
    BarrierConfig barrier;
    bool enabled = true;

    int barrier_dim() const;
};

/// x̄' = (f(x, u), w), w ~ N(0, Q^-1).
AugmentedState transition_sample(const AugmentedState& state, const NoiseModel& noise,
                                 const DynamicsModel& dynamics, double dt, StreamRng& rng);

/// ȳ = (x + v, φ(g(x, u)) + η).
VirtualMeasurement measurement_sample(const AugmentedState& state, const NoiseModel& noise,
                                      const ConstraintContext& context, StreamRng& rng);

/// Ensemble versions over columns of a 6 x N slice. Member i draws from
/// make_stream(seed, i, time, role) in the same order as the single-member
/// functions, so results do not depend on evaluation order.
Eigen::MatrixXd transition_ensemble(const Eigen::MatrixXd& slice, const NoiseModel& noise,
                                    const DynamicsModel& dynamics, double dt, std::uint64_t seed,
                                    int time);
Eigen::MatrixXd measurement_ensemble(const Eigen::MatrixXd& slice, const NoiseModel& noise,
                                     const ConstraintContext& context, std::uint64_t seed,
                                     int time);

/// Constant-speed, constant-heading extrapolation of every obstacle.
ObstacleSnapshot predicted_obstacles(const ObstacleSnapshot& obstacles, int steps_ahead, double dt);

} // namespace enkmp
