#pragma once

#include <vector>

#include <Eigen/Core>

#include "enkmp/dynamics.hpp"
#include "enkmp/planner.hpp"

namespace enkmp {

/// x_{t+1} = F x_t + w,  y_t = H x_t + v,  x_0 ~ N(m0, P0).
struct LinearGaussianModel
{
    Eigen::MatrixXd transition;
    Eigen::MatrixXd process_cov;
    Eigen::MatrixXd observation;
    Eigen::MatrixXd measurement_cov;
    Eigen::VectorXd initial_mean;
    Eigen::MatrixXd initial_cov;

    Eigen::Index state_dim() const { return transition.rows(); }
    Eigen::Index measurement_dim() const { return observation.rows(); }
    void validate() const;
};

/// Linear plant with quadratic tracking weights, used to check the planner
/// and the smoother against closed-form answers.
struct LinearTestSystem
{
    Eigen::MatrixXd a;               // n x n
    Eigen::MatrixXd b;               // n x m
    Eigen::MatrixXd process_cov;     // n x n
    Eigen::MatrixXd measurement_cov; // n x n, full-state measurement
    Eigen::MatrixXd q;               // m x m control weight
    Eigen::MatrixXd r;               // n x n tracking weight
    int horizon = 10;

    Eigen::Index state_dim() const { return a.rows(); }
    Eigen::Index control_dim() const { return b.cols(); }
    void validate() const;

    /// Plain state estimation problem: F = A, full-state measurement.
    LinearGaussianModel estimation_model(const Eigen::VectorXd& initial_mean,
                                         const Eigen::MatrixXd& initial_cov) const;

    /// Augmented tracking problem over (x, u): u_{t+1} ~ N(0, Q^-1),
    /// r_t = x_t + v with v ~ N(0, R^-1), x_0 known.
    LinearGaussianModel tracking_model(const Eigen::VectorXd& x0) const;
};

/// 2-D double integrator (position, velocity per axis) with time step dt.
LinearTestSystem double_integrator_system(double dt, int horizon);

struct ExactSmootherResult
{
    std::vector<Eigen::VectorXd> means; // per time slice
    Eigen::VectorXd stacked_mean;
    Eigen::MatrixXd covariance; // joint over the whole window
};

/// Kalman recursion on the stacked trajectory: every measurement updates
/// all past slices, with exact moments. Throws NumericalError on a
/// singular innovation covariance.
ExactSmootherResult exact_sequential_ks(const LinearGaussianModel& model,
                                        const std::vector<Eigen::VectorXd>& observations);

/// Minimizes sum_{t=0}^{H} (x_t - r_t)^T R (x_t - r_t) + u_t^T Q u_t subject
/// to x_{t+1} = A x_t + B u_t. Returns u_0..u_H.
std::vector<Eigen::VectorXd> lq_tracking_solve(const LinearTestSystem& system,
                                               const std::vector<Eigen::VectorXd>& reference,
                                               const Eigen::VectorXd& x0);

double lq_tracking_cost(const LinearTestSystem& system, const std::vector<Eigen::VectorXd>& reference,
                        const Eigen::VectorXd& x0, const std::vector<Eigen::VectorXd>& controls);

struct PenaltyConfig
{
    int outer_iterations = 3;
    double initial_penalty = 10.0;
    double penalty_growth = 10.0;
    int max_iterations = 40; // gradient steps per outer iteration
    double fd_step = 1e-5;
    double initial_step = 1e-3;
    double gradient_tolerance = 1e-9;

    void validate() const;
};

struct PenaltyResult
{
    std::vector<ControlVector> controls; // u_k..u_{k+H}
    double cost = 0.0;                   // tracking cost without penalty
    double penalized_objective = 0.0;
    double max_violation = 0.0; // largest g entry along the plan
    double wall_time = 0.0;
    int gradient_evaluations = 0;
};

/// Single-shooting gradient descent on tracking cost + mu * sum phi(g)^2,
/// central finite-difference gradients, backtracking line search, mu grown
/// geometrically over the outer iterations. Returns the best iterate.
PenaltyResult penalty_nmpc_solve(const DynamicsModel& dynamics, const Scene& scene,
                                 const VehicleState& state, const PlannerConfig& planner,
                                 const PenaltyConfig& config,
                                 std::vector<ControlVector> initial_guess = {});

} // namespace enkmp
