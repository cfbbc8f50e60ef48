#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "enkmp/mlp.hpp"
#include "enkmp/model_learning.hpp"
#include "enkmp/scenario.hpp"

namespace enkmp {

using Json = nlohmann::json;

inline constexpr int kConfigFormatVersion = 1;

/// Parses a JSON file; syntax errors become ConfigError with line/column.
Json read_json_file(const std::filesystem::path& path);

struct TrainJob
{
    TrainingConfig training;
    BicycleParams vehicle;
    Activation activation = Activation::tanh;
    std::optional<Eigen::Vector4d> validation_rmse_bound; // per output, raw units
    std::string model_file = "model.json";
    std::string loss_file = "loss.csv";
};

TrainJob parse_train_config(const Json& doc);

/// Relative paths (model, polyline file) resolve against base_dir.
ScenarioConfig parse_scenario_config(const Json& doc, const std::filesystem::path& base_dir);

struct SweepConfig
{
    Json scenario; // scenario document each cell is derived from
    std::filesystem::path scenario_dir;
    std::vector<int> n_members;
    std::vector<int> horizons;
    std::vector<PlannerMethod> methods;
    std::vector<std::uint64_t> seeds;
    std::string baseline_method = "penalty";
    std::optional<int> steps;
};

SweepConfig parse_sweep_config(const Json& doc, const std::filesystem::path& base_dir);

Json summary_to_json(const ScenarioSummary& summary);

/// FNV-1a over the canonical (key-sorted, compact) dump.
std::uint64_t config_hash(const Json& resolved);
std::string hex64(std::uint64_t value);

} // namespace enkmp
