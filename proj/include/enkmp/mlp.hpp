#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "enkmp/dynamics.hpp"

namespace enkmp {

enum class Activation
{
    identity,
    tanh,
};

std::string_view activation_name(Activation a);
/// In place, elementwise.
void apply_activation(Eigen::MatrixXd& m, Activation a);
Activation activation_from_name(std::string_view name);

struct DenseLayer
{
    Eigen::MatrixXd weights; // rows: output dim, cols: input dim
    Eigen::VectorXd bias;
    Activation activation = Activation::identity;
};

/// Feedforward network with z-score normalization on both ends:
///   y = out_offset + out_scale .* net((x - in_offset) ./ in_scale)
struct MlpModel
{
    std::vector<DenseLayer> layers;
    Eigen::VectorXd input_offset;
    Eigen::VectorXd input_scale;
    Eigen::VectorXd output_offset;
    Eigen::VectorXd output_scale;

    Eigen::Index input_dim() const;
    Eigen::Index output_dim() const;

    /// Checks layer chaining, normalization sizes and finiteness.
    void validate() const;
    /// validate() plus the 6-in / 4-out shape required for vehicle dynamics.
    void validate_vehicle_model() const;

    /// Raw network on already-normalized inputs (columns are samples).
    Eigen::MatrixXd forward_normalized(const Eigen::MatrixXd& normalized_inputs) const;
    /// Full pipeline including normalization (columns are samples).
    Eigen::MatrixXd forward_batch(const Eigen::MatrixXd& inputs) const;

    Eigen::MatrixXd normalize_inputs(const Eigen::MatrixXd& inputs) const;
    Eigen::MatrixXd normalize_outputs(const Eigen::MatrixXd& outputs) const;
    Eigen::MatrixXd denormalize_outputs(const Eigen::MatrixXd& normalized) const;
};

/// Network with the given layer widths (first = input, last = output),
/// `hidden` activation on every hidden layer and a linear output layer.
/// Glorot-uniform weights, zero biases, identity normalization.
MlpModel make_mlp(const std::vector<int>& widths, Activation hidden, std::uint64_t seed);

StateVector mlp_forward(const MlpModel& model, const VehicleState& state,
                        const ControlInput& control);

/// One explicit Euler step of the learned derivative. No clamping or
/// heading wrap.
VehicleState surrogate_step(const MlpModel& model, const VehicleState& state,
                            const ControlInput& control, double dt);

class SurrogateDynamics final : public DynamicsModel
{
public:
    explicit SurrogateDynamics(MlpModel model);

    StateMatrix step_batch(const StateMatrix& states, const ControlMatrix& controls,
                           double dt) const override;

    const MlpModel& model() const { return model_; }

private:
    MlpModel model_;
};

inline constexpr int kModelFormatVersion = 1;

std::string model_to_json(const MlpModel& model);
MlpModel model_from_json(std::string_view text);
void save_model(const MlpModel& model, const std::filesystem::path& path);
MlpModel load_model(const std::filesystem::path& path);

} // namespace enkmp
