#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

namespace enkmp::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitRuntime = 1;
inline constexpr int kExitConfig = 2;

inline constexpr const char* kVersion = "1.0.0";
inline constexpr const char* kOutputRootEnv = "ENKMP_OUTPUT_ROOT";

struct CommonOptions
{
    std::filesystem::path config;
    std::optional<std::uint64_t> seed;
    std::optional<std::filesystem::path> out;
    int threads = 1;
};

int cmd_train(const CommonOptions& opts);
int cmd_run(const CommonOptions& opts);
int cmd_baseline(const CommonOptions& opts);
int cmd_sweep(const CommonOptions& opts);

} // namespace enkmp::cli
