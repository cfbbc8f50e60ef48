#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

#include <Eigen/Core>

namespace enkmp {

struct SmootherConfig
{
    int n_members = 200;
    double jitter = 1e-8;             // ridge added to the innovation covariance
    bool compute_covariances = false; // trajectory covariance of the final ensemble
    std::uint64_t rng_seed = 0;

    void validate() const;
};

/// N sampled trajectories over a growing time window. Storage is one
/// column per member holding its whole trajectory contiguously, slice t
/// occupying rows [t*d, (t+1)*d).
class TrajectoryEnsemble
{
public:
    TrajectoryEnsemble(int state_dim, int n_members, int capacity);
    /// Length-one ensemble from a d x N initial slice.
    static TrajectoryEnsemble from_initial(const Eigen::MatrixXd& initial, int capacity);

    int state_dim() const { return state_dim_; }
    int n_members() const { return static_cast<int>(data_.cols()); }
    int length() const { return length_; }
    int capacity() const { return capacity_; }

    auto slice(int t) const { return data_.middleRows(static_cast<Eigen::Index>(t) * state_dim_, state_dim_); }
    auto slice(int t) { return data_.middleRows(static_cast<Eigen::Index>(t) * state_dim_, state_dim_); }
    auto last_slice() const { return slice(length_ - 1); }

    /// All stored slices, (length*d) x N.
    auto trajectories() const { return data_.topRows(static_cast<Eigen::Index>(length_) * state_dim_); }
    auto trajectories() { return data_.topRows(static_cast<Eigen::Index>(length_) * state_dim_); }

    /// Appends one d x N slice. Grows the capacity if needed.
    void append(const Eigen::MatrixXd& next_slice);

private:
    int state_dim_;
    int capacity_;
    int length_ = 0;
    Eigen::MatrixXd data_;
};

/// Maps the most recent d x N slice at time t-1 to the sampled slice at t.
using TransitionSampler = std::function<Eigen::MatrixXd(const Eigen::MatrixXd& previous, int time)>;
/// Maps the d x N slice at time t to a p x N ensemble of predicted measurements.
using MeasurementSampler = std::function<Eigen::MatrixXd(const Eigen::MatrixXd& current, int time)>;
/// The observed measurement at time t.
using ObservationSource = std::function<Eigen::VectorXd(int time)>;

/// Column mean, summed in member order.
Eigen::VectorXd ensemble_mean(const Eigen::MatrixXd& members);

/// 1/(N-1) * sum_i (a_i - mean_a)(b_i - mean_b)^T. Throws
/// DegenerateEnsembleError for N < 2.
Eigen::MatrixXd cross_covariance(const Eigen::MatrixXd& a, const Eigen::VectorXd& mean_a,
                                 const Eigen::MatrixXd& b, const Eigen::VectorXd& mean_b);

Eigen::MatrixXd ensemble_covariance(const Eigen::MatrixXd& members);

/// Appends one transition-sampled slice to every member.
TrajectoryEnsemble predict(TrajectoryEnsemble ensemble, const TransitionSampler& transition,
                           int time);

struct UpdateDiagnostics
{
    double innovation_rms = 0.0; // RMS over members of |y_obs - y_i|
    double rcond = 1.0;          // of the jittered innovation covariance
    double prior_trace = 0.0;    // trajectory covariance traces, only with compute_covariances
    double posterior_trace = 0.0;
};

/// Perturbed-observation Kalman update applied to every stored slice:
///   X_i += P_xy (P_y + jitter I)^-1 (y_obs - y_i)
UpdateDiagnostics update(TrajectoryEnsemble& ensemble, const Eigen::MatrixXd& measurements,
                         const Eigen::VectorXd& observed, const SmootherConfig& config);

struct SmoothResult
{
    TrajectoryEnsemble ensemble;
    Eigen::VectorXd mean;                     // smoothed trajectory mean, (H+1)*d
    std::optional<Eigen::MatrixXd> covariance; // only with compute_covariances
    std::vector<UpdateDiagnostics> diagnostics;
};

/// Sequential single-pass smoother over times 0..horizon. `initial` holds
/// the time-0 slice. Each observation is requested exactly once, in order;
/// every update revises all past slices, so no backward sweep is needed.
SmoothResult smooth_horizon(TrajectoryEnsemble initial, int horizon,
                            const TransitionSampler& transition,
                            const MeasurementSampler& measurement,
                            const ObservationSource& observation, const SmootherConfig& config);

} // namespace enkmp
