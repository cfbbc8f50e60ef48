#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Core>

#include "enkmp/dynamics.hpp"
#include "enkmp/mlp.hpp"

namespace enkmp {

struct TrainingConfig
{
    int n_trajectories = 1000;
    int steps_per_trajectory = 50;
    double dt = kDefaultDt;
    int hold_steps = 5; // excitation segments are held this many steps

    // Excitation ranges for the random piecewise-constant controls.
    Eigen::Vector2d accel_range{-4.0, 3.0};
    Eigen::Vector2d steer_range{-0.6, 0.6};
    // Start-state sampling box.
    Eigen::Vector2d x_range{-50.0, 450.0};
    Eigen::Vector2d y_range{-100.0, 250.0};
    Eigen::Vector2d speed_range{0.0, 15.0};

    double learning_rate = 1e-3;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_epsilon = 1e-8;
    int batch_size = 64;
    int epochs = 30;
    double validation_fraction = 0.1;
    std::uint64_t rng_seed = 1;

    std::vector<int> hidden_widths{128, 128};

    void validate() const;
};

/// Samples are columns. Targets are the true state derivatives.
struct Dataset
{
    Eigen::MatrixXd inputs;  // 6 x M: state ‖ control
    Eigen::MatrixXd targets; // 4 x M
    std::vector<Eigen::Index> train_indices;
    std::vector<Eigen::Index> validation_indices;

    Eigen::Index size() const { return inputs.cols(); }
};

Dataset generate_dataset(const TrainingConfig& config, const BicycleParams& params);

/// Seeded random train/validation split. Keeps at least one training
/// sample; the validation set is empty only for single-sample datasets.
void split_dataset(Dataset& data, double validation_fraction, std::uint64_t seed);

struct EpochLoss
{
    int epoch = 0;
    double train_mse = 0.0;
    double val_mse = 0.0; // NaN when there is no validation split
};

struct TrainingResult
{
    MlpModel model;
    std::vector<EpochLoss> history;
};

/// Gradient of the normalized-space MSE with respect to every layer's
/// weights and bias.
struct MlpGradient
{
    std::vector<Eigen::MatrixXd> weights;
    std::vector<Eigen::VectorXd> bias;
};

/// Mean over all output elements and samples of the squared error between
/// the network and the normalized targets. `inputs`/`targets` are raw
/// (un-normalized) columns.
double normalized_mse(const MlpModel& model, const Eigen::MatrixXd& inputs,
                      const Eigen::MatrixXd& targets);

/// Backpropagation of normalized_mse.
double loss_and_gradient(const MlpModel& model, const Eigen::MatrixXd& inputs,
                         const Eigen::MatrixXd& targets, MlpGradient& gradient);

/// Sets the model's normalization to the z-score statistics of the given
/// samples. Zero-spread channels get unit scale.
void fit_normalization(MlpModel& model, const Dataset& data,
                       const std::vector<Eigen::Index>& indices);

/// Mini-batch Adam on normalized_mse. Fits normalization from the training
/// split first. Throws TrainingDivergedError on a non-finite loss.
TrainingResult train(MlpModel model_init, const Dataset& data, const TrainingConfig& config);

/// max over parameters of |g_backprop - g_fd| / max(1, |g_fd|), using
/// central differences of normalized_mse on a single sample.
double gradient_check(const MlpModel& model, const Eigen::VectorXd& input,
                      const Eigen::VectorXd& target);

/// Per-output RMSE (raw units) on the given sample indices.
Eigen::VectorXd evaluate_rmse(const MlpModel& model, const Dataset& data,
                              const std::vector<Eigen::Index>& indices);

} // namespace enkmp
