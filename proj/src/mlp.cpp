#include "enkmp/mlp.hpp"

#include <cmath>
#include <fstream>
#include <random>
#include <sstream>

#include "json.hpp"

#include "enkmp/errors.hpp"
#include "enkmp/rng.hpp"

namespace enkmp {

namespace {

bool all_finite(const Eigen::MatrixXd& m)
{
    return m.allFinite();
}

} // namespace

std::string_view activation_name(Activation a)
{
    switch (a) {
    case Activation::identity:
        return "identity";
    case Activation::tanh:
        return "tanh";
    }
    return "identity";
}

void apply_activation(Eigen::MatrixXd& m, Activation a)
{
    switch (a) {
    case Activation::identity:
        break;
    case Activation::tanh: {
        // 1 - 2/(e^{2x}+1) with Eigen's vectorized exp; libm tanh is scalar
        // and dominated the planner profile. |x| > 20 saturates exactly.
        auto e = (2.0 * m.array().max(-20.0).min(20.0)).exp();
        m = (1.0 - 2.0 / (e + 1.0)).matrix();
        break;
    }
    }
}

Activation activation_from_name(std::string_view name)
{
    if (name == "identity" || name == "linear")
        return Activation::identity;
    if (name == "tanh")
        return Activation::tanh;
    throw ConfigError("unknown activation '" + std::string(name) + "'");
}

Eigen::Index MlpModel::input_dim() const
{
    return layers.empty() ? 0 : layers.front().weights.cols();
}

Eigen::Index MlpModel::output_dim() const
{
    return layers.empty() ? 0 : layers.back().weights.rows();
}

void MlpModel::validate() const
{
    if (layers.empty())
        throw ConfigError("mlp: model has no layers");
    for (std::size_t l = 0; l < layers.size(); ++l) {
        const auto& layer = layers[l];
        if (layer.bias.size() != layer.weights.rows())
            throw ConfigError("mlp: layer " + std::to_string(l) + " bias size does not match rows");
        if (l > 0 && layer.weights.cols() != layers[l - 1].weights.rows())
            throw ConfigError("mlp: layer " + std::to_string(l) +
                              " input dim does not chain with previous layer");
        if (!all_finite(layer.weights) || !all_finite(layer.bias))
            throw ConfigError("mlp: layer " + std::to_string(l) + " has non-finite parameters");
    }
    if (input_offset.size() != input_dim() || input_scale.size() != input_dim())
        throw ConfigError("mlp: input normalization size mismatch");
    if (output_offset.size() != output_dim() || output_scale.size() != output_dim())
        throw ConfigError("mlp: output normalization size mismatch");
    if (!all_finite(input_offset) || !all_finite(input_scale) || !all_finite(output_offset) ||
        !all_finite(output_scale))
        throw ConfigError("mlp: non-finite normalization");
    if ((input_scale.array() == 0.0).any())
        throw ConfigError("mlp: zero input scale");
}

void MlpModel::validate_vehicle_model() const
{
    validate();
    if (input_dim() != kStateDim + kControlDim || output_dim() != kStateDim)
        throw ConfigError("mlp: vehicle model must map 6 inputs to 4 outputs, got " +
                          std::to_string(input_dim()) + " -> " + std::to_string(output_dim()));
}

Eigen::MatrixXd MlpModel::forward_normalized(const Eigen::MatrixXd& normalized_inputs) const
{
    if (normalized_inputs.rows() != input_dim())
        throw ConfigError("mlp: input has " + std::to_string(normalized_inputs.rows()) +
                          " rows, model expects " + std::to_string(input_dim()));
    Eigen::MatrixXd h = normalized_inputs;
    for (const auto& layer : layers) {
        if (layer.weights.cols() != h.rows() || layer.bias.size() != layer.weights.rows())
            throw ConfigError("mlp: layer dimensions do not chain");
        Eigen::MatrixXd z = layer.weights * h;
        z.colwise() += layer.bias;
        apply_activation(z, layer.activation);
        h = std::move(z);
    }
    return h;
}

Eigen::MatrixXd MlpModel::normalize_inputs(const Eigen::MatrixXd& inputs) const
{
    return ((inputs.colwise() - input_offset).array().colwise() / input_scale.array()).matrix();
}

Eigen::MatrixXd MlpModel::normalize_outputs(const Eigen::MatrixXd& outputs) const
{
    return ((outputs.colwise() - output_offset).array().colwise() / output_scale.array()).matrix();
}

Eigen::MatrixXd MlpModel::denormalize_outputs(const Eigen::MatrixXd& normalized) const
{
    Eigen::MatrixXd out = (normalized.array().colwise() * output_scale.array()).matrix();
    out.colwise() += output_offset;
    return out;
}

Eigen::MatrixXd MlpModel::forward_batch(const Eigen::MatrixXd& inputs) const
{
    if (inputs.rows() != input_dim())
        throw ConfigError("mlp: input has " + std::to_string(inputs.rows()) +
                          " rows, model expects " + std::to_string(input_dim()));
    return denormalize_outputs(forward_normalized(normalize_inputs(inputs)));
}

MlpModel make_mlp(const std::vector<int>& widths, Activation hidden, std::uint64_t seed)
{
    if (widths.size() < 2)
        throw ConfigError("make_mlp: need at least input and output widths");
    for (int w : widths)
        if (w <= 0)
            throw ConfigError("make_mlp: layer widths must be positive");

    auto rng = make_stream(seed, 0, 0, NoiseRole::weights);
    MlpModel model;
    for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
        const int fan_in = widths[l];
        const int fan_out = widths[l + 1];
        const double limit = std::sqrt(6.0 / (fan_in + fan_out));
        std::uniform_real_distribution<double> uni(-limit, limit);
        DenseLayer layer;
        layer.weights.resize(fan_out, fan_in);
        for (int c = 0; c < fan_in; ++c)
            for (int r = 0; r < fan_out; ++r)
                layer.weights(r, c) = uni(rng);
        layer.bias = Eigen::VectorXd::Zero(fan_out);
        layer.activation = (l + 2 == widths.size()) ? Activation::identity : hidden;
        model.layers.push_back(std::move(layer));
    }
    model.input_offset = Eigen::VectorXd::Zero(widths.front());
    model.input_scale = Eigen::VectorXd::Ones(widths.front());
    model.output_offset = Eigen::VectorXd::Zero(widths.back());
    model.output_scale = Eigen::VectorXd::Ones(widths.back());
    return model;
}

StateVector mlp_forward(const MlpModel& model, const VehicleState& state,
                        const ControlInput& control)
{
    if (model.input_dim() != kStateDim + kControlDim || model.output_dim() != kStateDim)
        throw ConfigError("mlp_forward: model must map 6 inputs to 4 outputs");
    Eigen::VectorXd input(6);
    input << state.vector(), control.vector();
    return model.forward_batch(input).col(0);
}

VehicleState surrogate_step(const MlpModel& model, const VehicleState& state,
                            const ControlInput& control, double dt)
{
    if (!(dt > 0.0))
        throw ConfigError("surrogate_step: dt must be positive");
    return VehicleState::from_vector(state.vector() + dt * mlp_forward(model, state, control));
}

SurrogateDynamics::SurrogateDynamics(MlpModel model) : model_(std::move(model))
{
    model_.validate_vehicle_model();
}

StateMatrix SurrogateDynamics::step_batch(const StateMatrix& states, const ControlMatrix& controls,
                                          double dt) const
{
    Eigen::MatrixXd input(6, states.cols());
    input.topRows<4>() = states;
    input.bottomRows<2>() = controls;
    return states + dt * model_.forward_batch(input);
}

// --- serialization --------------------------------------------------------

namespace {

using nlohmann::json;

std::vector<double> to_list(const Eigen::VectorXd& v)
{
    return {v.data(), v.data() + v.size()};
}

Eigen::VectorXd vector_field(const json& j, const char* key)
{
    if (!j.contains(key))
        throw ConfigError(std::string("model json: missing field '") + key + "'");
    const auto values = j.at(key).get<std::vector<double>>();
    return Eigen::Map<const Eigen::VectorXd>(values.data(), static_cast<Eigen::Index>(values.size()));
}

} // namespace

std::string model_to_json(const MlpModel& model)
{
    json doc;
    doc["format_version"] = kModelFormatVersion;
    json layers = json::array();
    for (const auto& layer : model.layers) {
        // Row-major flat list.
        std::vector<double> flat;
        flat.reserve(static_cast<std::size_t>(layer.weights.size()));
        for (Eigen::Index r = 0; r < layer.weights.rows(); ++r)
            for (Eigen::Index c = 0; c < layer.weights.cols(); ++c)
                flat.push_back(layer.weights(r, c));
        layers.push_back({{"rows", layer.weights.rows()},
                          {"cols", layer.weights.cols()},
                          {"weights", flat},
                          {"bias", to_list(layer.bias)},
                          {"activation", activation_name(layer.activation)}});
    }
    doc["layers"] = layers;
    doc["input_offset"] = to_list(model.input_offset);
    doc["input_scale"] = to_list(model.input_scale);
    doc["output_offset"] = to_list(model.output_offset);
    doc["output_scale"] = to_list(model.output_scale);
    return doc.dump();
}

MlpModel model_from_json(std::string_view text)
{
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ConfigError(std::string("model json: ") + e.what());
    }
    try {
        const int version = doc.at("format_version").get<int>();
        if (version != kModelFormatVersion)
            throw ConfigError("model json: unsupported format_version " + std::to_string(version));
        MlpModel model;
        for (const auto& jl : doc.at("layers")) {
            DenseLayer layer;
            const auto rows = jl.at("rows").get<Eigen::Index>();
            const auto cols = jl.at("cols").get<Eigen::Index>();
            const auto flat = jl.at("weights").get<std::vector<double>>();
            if (static_cast<Eigen::Index>(flat.size()) != rows * cols)
                throw ConfigError("model json: weight list length does not equal rows*cols");
            layer.weights.resize(rows, cols);
            for (Eigen::Index r = 0; r < rows; ++r)
                for (Eigen::Index c = 0; c < cols; ++c)
                    layer.weights(r, c) = flat[static_cast<std::size_t>(r * cols + c)];
            layer.bias = vector_field(jl, "bias");
            layer.activation = activation_from_name(jl.at("activation").get<std::string>());
            model.layers.push_back(std::move(layer));
        }
        model.input_offset = vector_field(doc, "input_offset");
        model.input_scale = vector_field(doc, "input_scale");
        model.output_offset = vector_field(doc, "output_offset");
        model.output_scale = vector_field(doc, "output_scale");
        model.validate();
        return model;
    } catch (const json::exception& e) {
        throw ConfigError(std::string("model json: ") + e.what());
    }
}

void save_model(const MlpModel& model, const std::filesystem::path& path)
{
    std::ofstream out(path);
    if (!out)
        throw Error("cannot open '" + path.string() + "' for writing");
    out << model_to_json(model) << '\n';
}

MlpModel load_model(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in)
        throw ConfigError("cannot open model file '" + path.string() + "'");
    std::stringstream buffer;
    buffer << in.rdbuf();
    return model_from_json(buffer.str());
}

} // namespace enkmp
