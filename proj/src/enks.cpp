#include "enkmp/enks.hpp"

#include <cmath>
#include <string>

#include <Eigen/Cholesky>

#include "enkmp/errors.hpp"

namespace enkmp {

void SmootherConfig::validate() const
{
    if (n_members < 2)
        throw ConfigError("smoother: n_members must be at least 2");
    if (!(jitter >= 0.0))
        throw ConfigError("smoother: jitter must be non-negative");
}

TrajectoryEnsemble::TrajectoryEnsemble(int state_dim, int n_members, int capacity)
    : state_dim_(state_dim), capacity_(capacity)
{
    if (state_dim <= 0 || n_members <= 0 || capacity <= 0)
        throw ConfigError("ensemble: dimensions must be positive");
    data_.resize(static_cast<Eigen::Index>(state_dim) * capacity, n_members);
}

TrajectoryEnsemble TrajectoryEnsemble::from_initial(const Eigen::MatrixXd& initial, int capacity)
{
    TrajectoryEnsemble e(static_cast<int>(initial.rows()), static_cast<int>(initial.cols()), capacity);
    e.append(initial);
    return e;
}

void TrajectoryEnsemble::append(const Eigen::MatrixXd& next_slice)
{
    if (next_slice.rows() != state_dim_ || next_slice.cols() != data_.cols())
        throw ConfigError("ensemble: appended slice has the wrong shape");
    if (length_ == capacity_) {
        capacity_ *= 2;
        data_.conservativeResize(static_cast<Eigen::Index>(state_dim_) * capacity_, Eigen::NoChange);
    }
    slice(length_) = next_slice;
    ++length_;
}

Eigen::VectorXd ensemble_mean(const Eigen::MatrixXd& members)
{
    if (members.cols() == 0)
        throw DegenerateEnsembleError("ensemble_mean: empty ensemble");
    Eigen::VectorXd sum = members.col(0);
    for (Eigen::Index i = 1; i < members.cols(); ++i)
        sum += members.col(i);
    return sum / static_cast<double>(members.cols());
}

Eigen::MatrixXd cross_covariance(const Eigen::MatrixXd& a, const Eigen::VectorXd& mean_a,
                                 const Eigen::MatrixXd& b, const Eigen::VectorXd& mean_b)
{
    if (a.cols() != b.cols())
        throw ConfigError("cross_covariance: member counts differ");
    if (a.cols() < 2)
        throw DegenerateEnsembleError("cross_covariance: need at least two members");
    const Eigen::MatrixXd da = a.colwise() - mean_a;
    const Eigen::MatrixXd db = b.colwise() - mean_b;
    return (da * db.transpose()) / static_cast<double>(a.cols() - 1);
}

Eigen::MatrixXd ensemble_covariance(const Eigen::MatrixXd& members)
{
    const Eigen::VectorXd mean = ensemble_mean(members);
    return cross_covariance(members, mean, members, mean);
}

TrajectoryEnsemble predict(TrajectoryEnsemble ensemble, const TransitionSampler& transition,
                           int time)
{
    if (ensemble.length() == 0)
        throw ConfigError("predict: empty ensemble");
    Eigen::MatrixXd next = transition(ensemble.last_slice(), time);
    ensemble.append(next);
    return ensemble;
}

namespace {

double trajectory_variance_trace(const Eigen::MatrixXd& x)
{
    const Eigen::VectorXd mean = ensemble_mean(x);
    return (x.colwise() - mean).squaredNorm() / static_cast<double>(x.cols() - 1);
}

} // namespace

UpdateDiagnostics update(TrajectoryEnsemble& ensemble, const Eigen::MatrixXd& measurements,
                         const Eigen::VectorXd& observed, const SmootherConfig& config)
{
    const Eigen::Index n = ensemble.n_members();
    if (measurements.cols() != n)
        throw ConfigError("update: measurement ensemble size does not match the state ensemble");
    if (measurements.rows() != observed.size())
        throw ConfigError("update: observation dimension does not match the measurement ensemble");
    if (n < 2)
        throw DegenerateEnsembleError("update: need at least two members");

    UpdateDiagnostics diag;
    auto x = ensemble.trajectories();
    if (config.compute_covariances)
        diag.prior_trace = trajectory_variance_trace(x);

    const Eigen::VectorXd y_mean = ensemble_mean(measurements);
    const Eigen::MatrixXd dy = measurements.colwise() - y_mean;
    const double scale = 1.0 / static_cast<double>(n - 1);

    Eigen::MatrixXd s = scale * (dy * dy.transpose());
    s.diagonal().array() += config.jitter;

    Eigen::LLT<Eigen::MatrixXd> llt(s);
    diag.rcond = llt.info() == Eigen::Success ? llt.rcond() : 0.0;
    if (llt.info() != Eigen::Success || !(diag.rcond > 1e-15))
        throw NumericalError("update: innovation covariance is singular (rcond " +
                             std::to_string(diag.rcond) + ")",
                             diag.rcond);

    Eigen::MatrixXd innovations = (-measurements).colwise() + observed;
    diag.innovation_rms = std::sqrt(innovations.squaredNorm() / static_cast<double>(n));
    const Eigen::MatrixXd solved = llt.solve(innovations);

    const Eigen::VectorXd x_mean = ensemble_mean(x);
    const Eigen::MatrixXd cross = scale * ((x.colwise() - x_mean) * dy.transpose());
    x.noalias() += cross * solved;

    if (config.compute_covariances)
        diag.posterior_trace = trajectory_variance_trace(x);
    return diag;
}

SmoothResult smooth_horizon(TrajectoryEnsemble initial, int horizon,
                            const TransitionSampler& transition,
                            const MeasurementSampler& measurement,
                            const ObservationSource& observation, const SmootherConfig& config)
{
    config.validate();
    if (horizon < 1)
        throw ConfigError("smooth_horizon: horizon must be at least 1");
    if (initial.length() != 1)
        throw ConfigError("smooth_horizon: initial ensemble must hold exactly one slice");
    if (initial.n_members() != config.n_members)
        throw ConfigError("smooth_horizon: ensemble size does not match the smoother config");

    SmoothResult result{std::move(initial), {}, std::nullopt, {}};
    result.diagnostics.reserve(static_cast<std::size_t>(horizon) + 1);
    for (int t = 0; t <= horizon; ++t) {
        if (t > 0)
            result.ensemble = predict(std::move(result.ensemble), transition, t);
        const Eigen::MatrixXd y = measurement(result.ensemble.last_slice(), t);
        result.diagnostics.push_back(update(result.ensemble, y, observation(t), config));
    }

    const Eigen::MatrixXd x = result.ensemble.trajectories();
    result.mean = ensemble_mean(x);
    if (config.compute_covariances)
        result.covariance = cross_covariance(x, result.mean, x, result.mean);
    return result;
}

} // namespace enkmp
