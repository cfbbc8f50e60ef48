#include "enkmp/baselines.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>

#include <Eigen/Dense>

#include "enkmp/errors.hpp"
#include "enkmp/virtual_system.hpp"

namespace enkmp {

void LinearGaussianModel::validate() const
{
    const auto n = transition.rows();
    if (transition.cols() != n || process_cov.rows() != n || process_cov.cols() != n ||
        observation.cols() != n || measurement_cov.rows() != observation.rows() ||
        measurement_cov.cols() != observation.rows() || initial_mean.size() != n ||
        initial_cov.rows() != n || initial_cov.cols() != n)
        throw ConfigError("linear-gaussian model: inconsistent dimensions");
}

void LinearTestSystem::validate() const
{
    const auto n = a.rows();
    const auto m = b.cols();
    if (a.cols() != n || b.rows() != n || q.rows() != m || q.cols() != m || r.rows() != n ||
        r.cols() != n)
        throw ConfigError("linear test system: inconsistent dimensions");
    if (process_cov.size() != 0 && (process_cov.rows() != n || process_cov.cols() != n))
        throw ConfigError("linear test system: process covariance must be n x n");
    if (measurement_cov.size() != 0 && (measurement_cov.rows() != n || measurement_cov.cols() != n))
        throw ConfigError("linear test system: measurement covariance must be n x n");
    if (horizon < 1)
        throw ConfigError("linear test system: horizon must be at least 1");
}

LinearGaussianModel LinearTestSystem::estimation_model(const Eigen::VectorXd& initial_mean,
                                                       const Eigen::MatrixXd& initial_cov) const
{
    validate();
    const auto n = state_dim();
    LinearGaussianModel model{a, process_cov, Eigen::MatrixXd::Identity(n, n), measurement_cov,
                              initial_mean, initial_cov};
    model.validate();
    return model;
}

LinearGaussianModel LinearTestSystem::tracking_model(const Eigen::VectorXd& x0) const
{
    validate();
    const auto n = state_dim();
    const auto m = control_dim();
    const Eigen::MatrixXd q_inv = q.llt().solve(Eigen::MatrixXd::Identity(m, m));
    const Eigen::MatrixXd r_inv = r.llt().solve(Eigen::MatrixXd::Identity(n, n));

    LinearGaussianModel model;
    model.transition = Eigen::MatrixXd::Zero(n + m, n + m);
    model.transition.topLeftCorner(n, n) = a;
    model.transition.topRightCorner(n, m) = b;
    model.process_cov = Eigen::MatrixXd::Zero(n + m, n + m);
    model.process_cov.bottomRightCorner(m, m) = q_inv;
    model.observation = Eigen::MatrixXd::Zero(n, n + m);
    model.observation.leftCols(n).setIdentity();
    model.measurement_cov = r_inv;
    model.initial_mean = Eigen::VectorXd::Zero(n + m);
    model.initial_mean.head(n) = x0;
    model.initial_cov = model.process_cov;
    model.validate();
    return model;
}

LinearTestSystem double_integrator_system(double dt, int horizon)
{
    LinearTestSystem sys;
    sys.a = Eigen::MatrixXd::Identity(4, 4);
    sys.a(0, 2) = dt;
    sys.a(1, 3) = dt;
    sys.b = Eigen::MatrixXd::Zero(4, 2);
    sys.b(0, 0) = 0.5 * dt * dt;
    sys.b(1, 1) = 0.5 * dt * dt;
    sys.b(2, 0) = dt;
    sys.b(3, 1) = dt;
    sys.process_cov = 0.01 * Eigen::MatrixXd::Identity(4, 4);
    sys.measurement_cov = 0.25 * Eigen::MatrixXd::Identity(4, 4);
    sys.q = Eigen::MatrixXd::Identity(2, 2);
    sys.r = Eigen::MatrixXd::Identity(4, 4);
    sys.horizon = horizon;
    return sys;
}

ExactSmootherResult exact_sequential_ks(const LinearGaussianModel& model,
                                        const std::vector<Eigen::VectorXd>& observations)
{
    model.validate();
    if (observations.empty())
        throw ConfigError("exact_sequential_ks: no observations");
    const auto n = model.state_dim();
    const auto p = model.measurement_dim();
    const auto steps = static_cast<Eigen::Index>(observations.size());

    Eigen::VectorXd mean = model.initial_mean;
    Eigen::MatrixXd cov = model.initial_cov;
    for (Eigen::Index t = 0; t < steps; ++t) {
        if (t > 0) {
            const Eigen::Index len = t * n;
            Eigen::VectorXd next_mean(len + n);
            next_mean << mean, model.transition * mean.tail(n);
            Eigen::MatrixXd next_cov(len + n, len + n);
            next_cov.topLeftCorner(len, len) = cov;
            const Eigen::MatrixXd cross = cov.rightCols(n) * model.transition.transpose();
            next_cov.topRightCorner(len, n) = cross;
            next_cov.bottomLeftCorner(n, len) = cross.transpose();
            next_cov.bottomRightCorner(n, n) =
                model.transition * cov.bottomRightCorner(n, n) * model.transition.transpose() +
                model.process_cov;
            mean = std::move(next_mean);
            cov = std::move(next_cov);
        }
        const auto& y = observations[static_cast<std::size_t>(t)];
        if (y.size() != p)
            throw ConfigError("exact_sequential_ks: observation dimension mismatch");

        // Only the newest slice is observed.
        const Eigen::MatrixXd ph = cov.rightCols(n) * model.observation.transpose();
        const Eigen::MatrixXd s =
            model.observation * ph.bottomRows(n) + model.measurement_cov;
        if (s.cwiseAbs().maxCoeff() == 0.0)
            continue; // no uncertainty anywhere: nothing to update
        Eigen::LLT<Eigen::MatrixXd> llt(s);
        if (llt.info() != Eigen::Success || !(llt.rcond() > 1e-15))
            throw NumericalError("exact_sequential_ks: singular innovation covariance",
                                 llt.info() == Eigen::Success ? llt.rcond() : 0.0);
        const Eigen::VectorXd innovation = y - model.observation * mean.tail(n);
        mean += ph * llt.solve(innovation);
        cov -= ph * llt.solve(ph.transpose());
        cov = 0.5 * (cov + cov.transpose()).eval();
    }

    ExactSmootherResult result;
    result.stacked_mean = mean;
    result.covariance = cov;
    for (Eigen::Index t = 0; t < steps; ++t)
        result.means.push_back(mean.segment(t * n, n));
    return result;
}

namespace {

// x_t = Phi_t x0 + G_t U, stacked over t = 0..H.
void prediction_matrices(const LinearTestSystem& sys, Eigen::MatrixXd& phi, Eigen::MatrixXd& g)
{
    const auto n = sys.state_dim();
    const auto m = sys.control_dim();
    const auto h = static_cast<Eigen::Index>(sys.horizon);
    phi = Eigen::MatrixXd::Zero((h + 1) * n, n);
    g = Eigen::MatrixXd::Zero((h + 1) * n, (h + 1) * m);
    phi.topRows(n).setIdentity();
    for (Eigen::Index t = 1; t <= h; ++t) {
        phi.middleRows(t * n, n) = sys.a * phi.middleRows((t - 1) * n, n);
        g.block(t * n, 0, n, (h + 1) * m) = sys.a * g.block((t - 1) * n, 0, n, (h + 1) * m);
        g.block(t * n, (t - 1) * m, n, m) += sys.b;
    }
}

} // namespace

std::vector<Eigen::VectorXd> lq_tracking_solve(const LinearTestSystem& system,
                                               const std::vector<Eigen::VectorXd>& reference,
                                               const Eigen::VectorXd& x0)
{
    system.validate();
    const auto n = system.state_dim();
    const auto m = system.control_dim();
    const auto h = static_cast<Eigen::Index>(system.horizon);
    if (static_cast<Eigen::Index>(reference.size()) != h + 1 || x0.size() != n)
        throw ConfigError("lq_tracking_solve: reference must hold horizon + 1 states");

    Eigen::MatrixXd phi, g;
    prediction_matrices(system, phi, g);
    Eigen::VectorXd r_stack((h + 1) * n);
    for (Eigen::Index t = 0; t <= h; ++t)
        r_stack.segment(t * n, n) = reference[static_cast<std::size_t>(t)];

    Eigen::MatrixXd r_bar = Eigen::MatrixXd::Zero((h + 1) * n, (h + 1) * n);
    Eigen::MatrixXd q_bar = Eigen::MatrixXd::Zero((h + 1) * m, (h + 1) * m);
    for (Eigen::Index t = 0; t <= h; ++t) {
        r_bar.block(t * n, t * n, n, n) = system.r;
        q_bar.block(t * m, t * m, m, m) = system.q;
    }
    const Eigen::MatrixXd hessian = g.transpose() * r_bar * g + q_bar;
    const Eigen::VectorXd rhs = g.transpose() * r_bar * (r_stack - phi * x0);
    Eigen::LLT<Eigen::MatrixXd> llt(hessian);
    if (llt.info() != Eigen::Success || !(llt.rcond() > 1e-14))
        throw NumericalError("lq_tracking_solve: normal equations are rank deficient",
                             llt.info() == Eigen::Success ? llt.rcond() : 0.0);
    const Eigen::VectorXd u = llt.solve(rhs);

    std::vector<Eigen::VectorXd> out;
    for (Eigen::Index t = 0; t <= h; ++t)
        out.push_back(u.segment(t * m, m));
    return out;
}

double lq_tracking_cost(const LinearTestSystem& system, const std::vector<Eigen::VectorXd>& reference,
                        const Eigen::VectorXd& x0, const std::vector<Eigen::VectorXd>& controls)
{
    const auto h = static_cast<std::size_t>(system.horizon);
    if (reference.size() != h + 1 || controls.size() != h + 1)
        throw ConfigError("lq_tracking_cost: sequences must hold horizon + 1 entries");
    Eigen::VectorXd x = x0;
    double cost = 0.0;
    for (std::size_t t = 0; t <= h; ++t) {
        const Eigen::VectorXd e = x - reference[t];
        cost += e.dot(system.r * e) + controls[t].dot(system.q * controls[t]);
        x = system.a * x + system.b * controls[t];
    }
    return cost;
}

// --- penalty baseline -------------------------------------------------------

void PenaltyConfig::validate() const
{
    if (outer_iterations < 1)
        throw ConfigError("penalty: outer_iterations must be at least 1");
    if (!(initial_penalty > 0.0) || !(penalty_growth >= 1.0))
        throw ConfigError("penalty: penalty weight must be positive and non-decreasing");
    if (max_iterations < 0)
        throw ConfigError("penalty: max_iterations must be non-negative");
    if (!(fd_step > 0.0) || !(initial_step > 0.0))
        throw ConfigError("penalty: step sizes must be positive");
}

namespace {

struct PenaltyProblem
{
    const DynamicsModel& dynamics;
    const Scene& scene;
    const VehicleState& state;
    const PlannerConfig& planner;
    std::vector<ObstacleSnapshot> predicted;

    struct Value
    {
        double cost = 0.0;
        double penalty = 0.0;
        double max_violation = -std::numeric_limits<double>::infinity();
    };

    Value evaluate(const Eigen::VectorXd& u) const
    {
        const int h = planner.horizon;
        Value v;
        StateVector x = state.vector();
        for (int t = 0; t <= h; ++t) {
            const ControlVector ut = u.segment<2>(2 * t);
            v.cost += stage_cost(x, ut, scene.reference[static_cast<std::size_t>(t)],
                                 planner.control_weight, planner.reference_weight);
            if (planner.use_barrier) {
                const Eigen::VectorXd g = stack_constraints(
                    VehicleState::from_vector(x), ControlInput::from_vector(ut),
                    predicted[static_cast<std::size_t>(t)], *scene.road, planner.constraint);
                v.penalty += softplus_barrier(g, planner.barrier).squaredNorm();
                v.max_violation = std::max(v.max_violation, g.maxCoeff());
            }
            if (t < h)
                x = dynamics.step(x, ut, planner.dt);
        }
        return v;
    }
};

} // namespace

PenaltyResult penalty_nmpc_solve(const DynamicsModel& dynamics, const Scene& scene,
                                 const VehicleState& state, const PlannerConfig& planner,
                                 const PenaltyConfig& config,
                                 std::vector<ControlVector> initial_guess)
{
    const auto start = std::chrono::steady_clock::now();
    config.validate();
    const int h = planner.horizon;
    const Eigen::Index dim = 2 * (static_cast<Eigen::Index>(h) + 1);
    if (static_cast<int>(scene.reference.size()) != h + 1)
        throw ConfigError("penalty_nmpc_solve: reference must hold horizon + 1 waypoints");
    if (planner.use_barrier && scene.road == nullptr)
        throw ConfigError("penalty_nmpc_solve: constrained problem needs a road");

    PenaltyProblem problem{dynamics, scene, state, planner, {}};
    for (int t = 0; t <= h; ++t)
        problem.predicted.push_back(predicted_obstacles(scene.obstacles, t, planner.dt));

    Eigen::VectorXd u = Eigen::VectorXd::Zero(dim);
    for (std::size_t t = 0; t < initial_guess.size() && static_cast<Eigen::Index>(2 * t) < dim; ++t)
        u.segment<2>(static_cast<Eigen::Index>(2 * t)) = initial_guess[t];

    PenaltyResult result;
    double mu = config.initial_penalty;
    auto objective = [&](const Eigen::VectorXd& x, double weight) {
        const auto v = problem.evaluate(x);
        if (!std::isfinite(v.cost) || !std::isfinite(v.penalty))
            throw NumericalError("penalty_nmpc_solve: non-finite cost", 0.0);
        return v.cost + weight * v.penalty;
    };

    Eigen::VectorXd best = u;
    double best_value = objective(u, mu);
    for (int outer = 0; outer < config.outer_iterations; ++outer) {
        if (outer > 0) {
            mu *= config.penalty_growth;
            best_value = objective(best, mu);
        }
        u = best;
        double value = best_value;
        double step = config.initial_step;
        Eigen::VectorXd prev_u, prev_grad;
        for (int it = 0; it < config.max_iterations; ++it) {
            Eigen::VectorXd grad(dim);
            for (Eigen::Index j = 0; j < dim; ++j) {
                const double hj = config.fd_step * std::max(1.0, std::abs(u[j]));
                Eigen::VectorXd probe = u;
                probe[j] = u[j] + hj;
                const double up = objective(probe, mu);
                probe[j] = u[j] - hj;
                const double down = objective(probe, mu);
                grad[j] = (up - down) / (2.0 * hj);
            }
            ++result.gradient_evaluations;
            const double gnorm2 = grad.squaredNorm();
            if (gnorm2 < config.gradient_tolerance * config.gradient_tolerance)
                break;

            // Barzilai-Borwein trial step, then Armijo backtracking.
            if (prev_grad.size() == dim) {
                const Eigen::VectorXd s = u - prev_u;
                const Eigen::VectorXd y = grad - prev_grad;
                const double sy = s.dot(y);
                if (sy > 0.0)
                    step = s.squaredNorm() / sy;
            }
            double trial_value = std::numeric_limits<double>::infinity();
            Eigen::VectorXd trial;
            for (int ls = 0; ls < 40; ++ls) {
                trial = u - step * grad;
                trial_value = objective(trial, mu);
                if (trial_value <= value - 1e-4 * step * gnorm2)
                    break;
                step *= 0.5;
            }
            if (!(trial_value < value))
                break;
            prev_u = u;
            prev_grad = grad;
            u = trial;
            value = trial_value;
            if (value < best_value) {
                best_value = value;
                best = u;
            }
        }
    }

    const auto final_value = problem.evaluate(best);
    result.controls.reserve(static_cast<std::size_t>(h) + 1);
    for (int t = 0; t <= h; ++t)
        result.controls.push_back(best.segment<2>(2 * t));
    result.cost = final_value.cost;
    result.penalized_objective = final_value.cost + mu * final_value.penalty;
    result.max_violation = planner.use_barrier ? final_value.max_violation : 0.0;
    result.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return result;
}

} // namespace enkmp
