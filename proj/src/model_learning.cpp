#include "enkmp/model_learning.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>
#include <random>

#include "enkmp/errors.hpp"
#include "enkmp/rng.hpp"

namespace enkmp {

void TrainingConfig::validate() const
{
    if (n_trajectories <= 0)
        throw ConfigError("training: n_trajectories must be positive");
    if (steps_per_trajectory <= 0)
        throw ConfigError("training: steps_per_trajectory must be positive");
    if (!(dt > 0.0))
        throw ConfigError("training: dt must be positive");
    if (hold_steps <= 0)
        throw ConfigError("training: hold_steps must be positive");
    auto check_range = [](const Eigen::Vector2d& r, const char* name) {
        if (!(r[0] <= r[1]))
            throw ConfigError(std::string("training: ") + name + " must be [lo, hi] with lo <= hi");
    };
    check_range(accel_range, "accel_range");
    check_range(steer_range, "steer_range");
    check_range(x_range, "x_range");
    check_range(y_range, "y_range");
    check_range(speed_range, "speed_range");
    if (!(learning_rate > 0.0))
        throw ConfigError("training: learning_rate must be positive");
    if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0) || !(adam_beta2 >= 0.0 && adam_beta2 < 1.0))
        throw ConfigError("training: adam betas must lie in [0, 1)");
    if (!(adam_epsilon > 0.0))
        throw ConfigError("training: adam_epsilon must be positive");
    if (batch_size <= 0)
        throw ConfigError("training: batch_size must be positive");
    if (epochs <= 0)
        throw ConfigError("training: epochs must be positive");
    if (!(validation_fraction > 0.0 && validation_fraction < 1.0))
        throw ConfigError("training: validation_fraction must lie in (0, 1)");
    for (int w : hidden_widths)
        if (w <= 0)
            throw ConfigError("training: hidden widths must be positive");
}

Dataset generate_dataset(const TrainingConfig& config, const BicycleParams& params)
{
    config.validate();
    params.validate();

    const Eigen::Index total =
        static_cast<Eigen::Index>(config.n_trajectories) * config.steps_per_trajectory;
    Dataset data;
    data.inputs.resize(6, total);
    data.targets.resize(4, total);

    auto uniform = [](StreamRng& rng, const Eigen::Vector2d& range) {
        if (range[0] == range[1])
            return range[0];
        return std::uniform_real_distribution<double>(range[0], range[1])(rng);
    };

    const Eigen::Vector2d speed_range{std::max(config.speed_range[0], params.speed_floor),
                                      std::min(config.speed_range[1], params.speed_ceiling)};
    Eigen::Index col = 0;
    for (int traj = 0; traj < config.n_trajectories; ++traj) {
        auto start_rng = make_stream(config.rng_seed, static_cast<std::uint64_t>(traj), 0,
                                     NoiseRole::initial);
        VehicleState state{uniform(start_rng, config.x_range), uniform(start_rng, config.y_range),
                           std::uniform_real_distribution<double>(-std::numbers::pi, std::numbers::pi)(start_rng),
                           uniform(start_rng, speed_range)};
        ControlInput control;
        for (int step = 0; step < config.steps_per_trajectory; ++step) {
            if (step % config.hold_steps == 0) {
                auto rng = make_stream(config.rng_seed, static_cast<std::uint64_t>(traj),
                                       static_cast<std::uint64_t>(step), NoiseRole::excitation);
                control.accel = uniform(rng, config.accel_range);
                control.steer = uniform(rng, config.steer_range);
            }
            data.inputs.col(col) << state.vector(), control.vector();
            data.targets.col(col) = bicycle_derivative(state, control, params);
            ++col;
            state = true_step(state, control, params, config.dt);
        }
    }
    split_dataset(data, config.validation_fraction, config.rng_seed);
    return data;
}

void split_dataset(Dataset& data, double validation_fraction, std::uint64_t seed)
{
    const Eigen::Index m = data.size();
    std::vector<Eigen::Index> order(static_cast<std::size_t>(m));
    std::iota(order.begin(), order.end(), Eigen::Index{0});
    auto rng = make_stream(seed, 0, 0, NoiseRole::split);
    std::shuffle(order.begin(), order.end(), rng);

    Eigen::Index n_val = 0;
    if (m >= 2)
        n_val = std::clamp<Eigen::Index>(
            static_cast<Eigen::Index>(std::llround(validation_fraction * static_cast<double>(m))), 1,
            m - 1);
    data.validation_indices.assign(order.begin(), order.begin() + n_val);
    data.train_indices.assign(order.begin() + n_val, order.end());
    std::sort(data.validation_indices.begin(), data.validation_indices.end());
    std::sort(data.train_indices.begin(), data.train_indices.end());
}

namespace {

Eigen::MatrixXd gather(const Eigen::MatrixXd& m, const std::vector<Eigen::Index>& idx,
                       std::size_t begin, std::size_t end)
{
    Eigen::MatrixXd out(m.rows(), static_cast<Eigen::Index>(end - begin));
    for (std::size_t k = begin; k < end; ++k)
        out.col(static_cast<Eigen::Index>(k - begin)) = m.col(idx[k]);
    return out;
}

struct AdamState
{
    std::vector<Eigen::MatrixXd> m_w, v_w;
    std::vector<Eigen::VectorXd> m_b, v_b;
    long step = 0;
};

} // namespace

double normalized_mse(const MlpModel& model, const Eigen::MatrixXd& inputs,
                      const Eigen::MatrixXd& targets)
{
    if (inputs.cols() == 0)
        return std::numeric_limits<double>::quiet_NaN();
    const Eigen::MatrixXd pred = model.forward_normalized(model.normalize_inputs(inputs));
    const Eigen::MatrixXd diff = pred - model.normalize_outputs(targets);
    return diff.squaredNorm() / static_cast<double>(diff.size());
}

double loss_and_gradient(const MlpModel& model, const Eigen::MatrixXd& inputs,
                         const Eigen::MatrixXd& targets, MlpGradient& gradient)
{
    const std::size_t n_layers = model.layers.size();
    std::vector<Eigen::MatrixXd> activations;
    activations.reserve(n_layers + 1);
    activations.push_back(model.normalize_inputs(inputs));
    for (const auto& layer : model.layers) {
        Eigen::MatrixXd z = layer.weights * activations.back();
        z.colwise() += layer.bias;
        apply_activation(z, layer.activation);
        activations.push_back(std::move(z));
    }

    const Eigen::MatrixXd diff = activations.back() - model.normalize_outputs(targets);
    const double count = static_cast<double>(diff.size());
    const double loss = diff.squaredNorm() / count;

    gradient.weights.resize(n_layers);
    gradient.bias.resize(n_layers);
    Eigen::MatrixXd delta = (2.0 / count) * diff; // dL/da for the output layer
    for (std::size_t l = n_layers; l-- > 0;) {
        const auto& layer = model.layers[l];
        if (layer.activation == Activation::tanh)
            delta.array() *= 1.0 - activations[l + 1].array().square();
        gradient.weights[l].noalias() = delta * activations[l].transpose();
        gradient.bias[l] = delta.rowwise().sum();
        if (l > 0)
            delta = layer.weights.transpose() * delta;
    }
    return loss;
}

void fit_normalization(MlpModel& model, const Dataset& data,
                       const std::vector<Eigen::Index>& indices)
{
    if (indices.empty())
        throw ConfigError("fit_normalization: no samples");
    auto stats = [&](const Eigen::MatrixXd& m, Eigen::VectorXd& offset, Eigen::VectorXd& scale) {
        const double n = static_cast<double>(indices.size());
        offset = Eigen::VectorXd::Zero(m.rows());
        for (auto i : indices)
            offset += m.col(i);
        offset /= n;
        Eigen::VectorXd var = Eigen::VectorXd::Zero(m.rows());
        for (auto i : indices)
            var += (m.col(i) - offset).cwiseAbs2();
        var /= n;
        scale = var.cwiseSqrt();
        for (Eigen::Index r = 0; r < scale.size(); ++r)
            if (!(scale[r] > 1e-12))
                scale[r] = 1.0;
    };
    stats(data.inputs, model.input_offset, model.input_scale);
    stats(data.targets, model.output_offset, model.output_scale);
}

TrainingResult train(MlpModel model_init, const Dataset& data, const TrainingConfig& config)
{
    config.validate();
    MlpModel model = std::move(model_init);
    if (model.input_dim() != data.inputs.rows() || model.output_dim() != data.targets.rows())
        throw ConfigError("train: model dimensions do not match the dataset");
    if (data.train_indices.empty())
        throw ConfigError("train: empty training split");
    fit_normalization(model, data, data.train_indices);
    model.validate();

    const Eigen::MatrixXd train_in = gather(data.inputs, data.train_indices, 0, data.train_indices.size());
    const Eigen::MatrixXd train_out = gather(data.targets, data.train_indices, 0, data.train_indices.size());
    const Eigen::MatrixXd val_in =
        gather(data.inputs, data.validation_indices, 0, data.validation_indices.size());
    const Eigen::MatrixXd val_out =
        gather(data.targets, data.validation_indices, 0, data.validation_indices.size());

    AdamState adam;
    for (const auto& layer : model.layers) {
        adam.m_w.push_back(Eigen::MatrixXd::Zero(layer.weights.rows(), layer.weights.cols()));
        adam.v_w.push_back(Eigen::MatrixXd::Zero(layer.weights.rows(), layer.weights.cols()));
        adam.m_b.push_back(Eigen::VectorXd::Zero(layer.bias.size()));
        adam.v_b.push_back(Eigen::VectorXd::Zero(layer.bias.size()));
    }

    const double b1 = config.adam_beta1;
    const double b2 = config.adam_beta2;
    std::vector<Eigen::Index> order(static_cast<std::size_t>(train_in.cols()));
    MlpGradient grad;
    TrainingResult result;

    for (int epoch = 1; epoch <= config.epochs; ++epoch) {
        std::iota(order.begin(), order.end(), Eigen::Index{0});
        auto rng = make_stream(config.rng_seed, 0, static_cast<std::uint64_t>(epoch), NoiseRole::shuffle);
        std::shuffle(order.begin(), order.end(), rng);

        for (std::size_t begin = 0; begin < order.size();
             begin += static_cast<std::size_t>(config.batch_size)) {
            const std::size_t end =
                std::min(order.size(), begin + static_cast<std::size_t>(config.batch_size));
            const Eigen::MatrixXd batch_in = gather(train_in, order, begin, end);
            const Eigen::MatrixXd batch_out = gather(train_out, order, begin, end);
            const double loss = loss_and_gradient(model, batch_in, batch_out, grad);
            if (!std::isfinite(loss))
                throw TrainingDivergedError("training diverged at epoch " + std::to_string(epoch), epoch);

            ++adam.step;
            const double c1 = 1.0 - std::pow(b1, static_cast<double>(adam.step));
            const double c2 = 1.0 - std::pow(b2, static_cast<double>(adam.step));
            const double lr = config.learning_rate;
            const double eps = config.adam_epsilon;
            for (std::size_t l = 0; l < model.layers.size(); ++l) {
                adam.m_w[l] = b1 * adam.m_w[l] + (1.0 - b1) * grad.weights[l];
                adam.v_w[l] = b2 * adam.v_w[l] + (1.0 - b2) * grad.weights[l].cwiseAbs2();
                model.layers[l].weights.array() -=
                    lr * (adam.m_w[l].array() / c1) / ((adam.v_w[l].array() / c2).sqrt() + eps);
                adam.m_b[l] = b1 * adam.m_b[l] + (1.0 - b1) * grad.bias[l];
                adam.v_b[l] = b2 * adam.v_b[l] + (1.0 - b2) * grad.bias[l].cwiseAbs2();
                model.layers[l].bias.array() -=
                    lr * (adam.m_b[l].array() / c1) / ((adam.v_b[l].array() / c2).sqrt() + eps);
            }
        }

        EpochLoss entry;
        entry.epoch = epoch;
        entry.train_mse = normalized_mse(model, train_in, train_out);
        entry.val_mse = normalized_mse(model, val_in, val_out);
        if (!std::isfinite(entry.train_mse))
            throw TrainingDivergedError("training diverged at epoch " + std::to_string(epoch), epoch);
        result.history.push_back(entry);
    }
    result.model = std::move(model);
    return result;
}

double gradient_check(const MlpModel& model, const Eigen::VectorXd& input,
                      const Eigen::VectorXd& target)
{
    MlpGradient grad;
    loss_and_gradient(model, input, target, grad);

    MlpModel probe = model;
    double worst = 0.0;
    auto check = [&](double& param, double analytic) {
        const double original = param;
        const double h = 1e-6 * std::max(1.0, std::abs(original));
        param = original + h;
        const double up = normalized_mse(probe, input, target);
        param = original - h;
        const double down = normalized_mse(probe, input, target);
        param = original;
        const double fd = (up - down) / (2.0 * h);
        worst = std::max(worst, std::abs(analytic - fd) / std::max(1.0, std::abs(fd)));
    };
    for (std::size_t l = 0; l < probe.layers.size(); ++l) {
        auto& layer = probe.layers[l];
        for (Eigen::Index c = 0; c < layer.weights.cols(); ++c)
            for (Eigen::Index r = 0; r < layer.weights.rows(); ++r)
                check(layer.weights(r, c), grad.weights[l](r, c));
        for (Eigen::Index r = 0; r < layer.bias.size(); ++r)
            check(layer.bias[r], grad.bias[l][r]);
    }
    return worst;
}

Eigen::VectorXd evaluate_rmse(const MlpModel& model, const Dataset& data,
                              const std::vector<Eigen::Index>& indices)
{
    if (indices.empty())
        return Eigen::VectorXd::Constant(data.targets.rows(), std::numeric_limits<double>::quiet_NaN());
    const Eigen::MatrixXd in = gather(data.inputs, indices, 0, indices.size());
    const Eigen::MatrixXd out = gather(data.targets, indices, 0, indices.size());
    const Eigen::MatrixXd diff = model.forward_batch(in) - out;
    return (diff.cwiseAbs2().rowwise().sum() / static_cast<double>(indices.size())).cwiseSqrt();
}

} // namespace enkmp
