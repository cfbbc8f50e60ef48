#include "doctest.h"

#include <sys/wait.h>

#include <cstdlib>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "enkmp/config_io.hpp"
#include "enkmp/mlp.hpp"
#include "support.hpp"

using namespace enkmp;
using namespace test_support;
namespace fs = std::filesystem;

namespace {

struct CliRun
{
    int code = -1;
    std::string out;
    std::string err;
};

std::string slurp(const fs::path& p)
{
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

CliRun run_cli(const fs::path& dir, const std::string& args, const std::string& env = "")
{
    const std::string cmd = "cd '" + dir.string() + "' && " + env + " '" ENKMP_CLI_PATH "' " + args +
                            " > cli_stdout.txt 2> cli_stderr.txt";
    const int status = std::system(cmd.c_str());
    CliRun r;
    r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    r.out = slurp(dir / "cli_stdout.txt");
    r.err = slurp(dir / "cli_stderr.txt");
    return r;
}

void write_json(const Json& doc, const fs::path& p)
{
    std::ofstream out(p);
    out << doc.dump(2);
}

/// Data lines of a CSV, skipping the version comment and the header.
std::vector<std::string> csv_rows(const fs::path& p)
{
    std::istringstream in(slurp(p));
    std::vector<std::string> rows;
    std::string line;
    bool header = false;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#')
            continue;
        if (!header) {
            header = true;
            continue;
        }
        rows.push_back(line);
    }
    return rows;
}

Json tiny_train_config()
{
    Json doc = read_json_file(source_dir() / "configs" / "train.json");
    doc["data"]["n_trajectories"] = 2;
    doc["data"]["steps_per_trajectory"] = 5;
    doc["network"]["hidden_widths"] = {8};
    doc["optimizer"]["epochs"] = 1;
    doc["optimizer"]["batch_size"] = 4;
    doc["optimizer"]["validation_fraction"] = 0.2;
    doc.erase("validation_rmse_bound");
    return doc;
}

/// Canonical scenario shortened and switched to the Euler planner model.
Json small_scenario(int steps, int n_members, int horizon)
{
    Json doc = read_json_file(source_dir() / "configs" / "canonical.json");
    doc["steps"] = steps;
    doc["planner"]["n_members"] = n_members;
    doc["planner"]["horizon"] = horizon;
    doc["model"]["bicycle_fallback"] = true;
    doc["model"]["path"] = shipped_model().string();
    return doc;
}

} // namespace

TEST_CASE("cli train on a tiny config")
{
    const auto dir = scratch_dir("cli_train");
    write_json(tiny_train_config(), dir / "tiny.json");
    const CliRun r = run_cli(dir, "train --config tiny.json --out out");
    INFO(r.err);
    REQUIRE(r.code == 0);
    CHECK(fs::exists(dir / "out" / "bicycle_mlp.json"));
    CHECK(fs::exists(dir / "out" / "train_metrics.json"));
    CHECK(csv_rows(dir / "out" / "loss.csv").size() == 1);
    CHECK_NOTHROW(load_model(dir / "out" / "bicycle_mlp.json").validate_vehicle_model());
    const Json manifest = read_json_file(dir / "out" / "manifest.json");
    CHECK(manifest["command"] == "train");
    CHECK(manifest["exit_code"] == 0);
}

TEST_CASE("cli train rejects a training run above its RMSE bound")
{
    const auto dir = scratch_dir("cli_train_bound");
    Json doc = tiny_train_config();
    doc["validation_rmse_bound"] = {1e-9, 1e-9, 1e-9, 1e-9};
    write_json(doc, dir / "tiny.json");
    const CliRun r = run_cli(dir, "train --config tiny.json --out out");
    CHECK(r.code == 1);
    CHECK(r.err.find("RMSE") != std::string::npos);
    CHECK(read_json_file(dir / "out" / "train_metrics.json")["within_bound"] == false);
}

TEST_CASE("cli config errors exit with code 2")
{
    const auto dir = scratch_dir("cli_config_errors");
    Json doc = tiny_train_config();
    doc["optimizer"].erase("epochs");
    write_json(doc, dir / "missing.json");
    CliRun r = run_cli(dir, "train --config missing.json --out out");
    CHECK(r.code == 2);
    CHECK(r.err.find("optimizer.epochs") != std::string::npos);

    {
        std::ofstream out(dir / "broken.json");
        out << "{\n  \"seed\": 1,\n  \"steps\": ,\n}\n";
    }
    r = run_cli(dir, "run --config broken.json --out out");
    CHECK(r.code == 2);
    CHECK(r.err.find("broken.json:3") != std::string::npos);

    Json scen = small_scenario(1, 20, 5);
    scen["planner"]["method"] = "ipopt";
    write_json(scen, dir / "method.json");
    r = run_cli(dir, "run --config method.json --out out");
    CHECK(r.code == 2);
    CHECK(r.err.find("ipopt") != std::string::npos);

    r = run_cli(dir, "run --out out");
    CHECK(r.code == 2);
    r = run_cli(dir, "run --config does_not_exist.json");
    CHECK(r.code == 2);
}

TEST_CASE("cli run smoke test and replay")
{
    const auto dir = scratch_dir("cli_run");
    write_json(small_scenario(1, 20, 5), dir / "smoke.json");
    CliRun r = run_cli(dir, "run --config smoke.json --out one");
    INFO(r.err);
    REQUIRE(r.code == 0);
    CHECK(csv_rows(dir / "one" / "steps.csv").size() == 1);
    CHECK(csv_rows(dir / "one" / "timing.csv").size() == 1);
    CHECK(r.out.find("total_cost=") != std::string::npos);
    CHECK(r.out.find("min_distance=") != std::string::npos);
    CHECK(r.out.find("mean_plan_time=") != std::string::npos);
    const Json summary = read_json_file(dir / "one" / "summary.json");
    CHECK(summary["steps_completed"] == 1);

    const Json manifest = read_json_file(dir / "one" / "manifest.json");
    for (const char* key : {"tool", "version", "command", "config_path", "config_hash",
                            "resolved_config", "seed", "output_dir", "artifact_versions",
                            "started_at", "finished_at", "exit_code"})
        CHECK(manifest.contains(key));

    write_json(small_scenario(25, 30, 10), dir / "replay.json");
    REQUIRE(run_cli(dir, "run --config replay.json --out a").code == 0);
    REQUIRE(run_cli(dir, "run --config replay.json --out b").code == 0);
    CHECK(slurp(dir / "a" / "steps.csv") == slurp(dir / "b" / "steps.csv"));
    REQUIRE(run_cli(dir, "run --config replay.json --out c --seed 99").code == 0);
    CHECK(slurp(dir / "a" / "steps.csv") != slurp(dir / "c" / "steps.csv"));
    CHECK(read_json_file(dir / "c" / "manifest.json")["seed"] == 99);
}

TEST_CASE("cli manifest hash and default output root")
{
    const auto dir = scratch_dir("cli_manifest");
    const Json doc = small_scenario(1, 20, 5);
    write_json(doc, dir / "first.json");
    // Same content, different key order and integer spelling of a float.
    {
        Json reordered = doc;
        reordered["planner"]["dt"] = 0.1;
        reordered["target_speed"] = 7;
        std::ofstream out(dir / "second.json");
        out << "{\"steps\": 1, " << reordered.dump().substr(1);
    }
    REQUIRE(run_cli(dir, "run --config first.json --out one").code == 0);
    REQUIRE(run_cli(dir, "run --config second.json --out two").code == 0);
    const std::string h1 = read_json_file(dir / "one" / "manifest.json")["config_hash"];
    const std::string h2 = read_json_file(dir / "two" / "manifest.json")["config_hash"];
    CHECK(h1 == h2);
    REQUIRE(run_cli(dir, "run --config first.json --out three --seed 5").code == 0);
    CHECK(read_json_file(dir / "three" / "manifest.json")["config_hash"] != h1);

    REQUIRE(run_cli(dir, "run --config first.json", "ENKMP_OUTPUT_ROOT=rooted").code == 0);
    const fs::path expected = dir / "rooted" / ("run_first_" + h1.substr(0, 8));
    CHECK(fs::exists(expected / "steps.csv"));
    CHECK(fs::exists(expected / "manifest.json"));
}

TEST_CASE("cli baseline runs the penalty method")
{
    const auto dir = scratch_dir("cli_baseline");
    Json doc = small_scenario(1, 20, 10);
    doc["penalty"]["max_iterations"] = 5;
    write_json(doc, dir / "base.json");
    const CliRun r = run_cli(dir, "baseline --config base.json --out out");
    INFO(r.err);
    REQUIRE(r.code == 0);
    CHECK(read_json_file(dir / "out" / "summary.json")["method"] == "penalty");
    CHECK(csv_rows(dir / "out" / "steps.csv").size() == 1);
}

TEST_CASE("cli run aborts on planner failure and keeps the partial csv")
{
    const auto dir = scratch_dir("cli_abort");
    // Moves at constant speed along x, then overflows once any predicted
    // state passes x = 30 m.
    MlpModel m;
    DenseLayer hidden, out;
    hidden.weights = Eigen::MatrixXd::Zero(2, 6);
    hidden.weights(0, 3) = 1e-3;
    hidden.weights(1, 0) = 50.0;
    hidden.bias = Eigen::Vector2d(0.0, -1500.0);
    hidden.activation = Activation::tanh;
    out.weights = Eigen::MatrixXd::Zero(4, 2);
    out.weights(0, 0) = 1e3;
    out.weights(3, 1) = 1e308;
    out.bias = Eigen::Vector4d(0.0, 0.0, 0.0, 1e308);
    m.layers = {hidden, out};
    m.input_offset = Eigen::VectorXd::Zero(6);
    m.input_scale = Eigen::VectorXd::Ones(6);
    m.output_offset = Eigen::VectorXd::Zero(4);
    m.output_scale = Eigen::VectorXd::Ones(4);
    save_model(m, dir / "bad_model.json");

    Json doc = small_scenario(200, 20, 10);
    doc["road"] = {{"type", "straight"}, {"length", 300.0}};
    doc["obstacles"] = Json::array();
    doc["ev"]["lane_offset"] = 0.0;
    doc["reference_lane_offset"] = 0.0;
    doc["model"] = {{"path", "bad_model.json"}, {"bicycle_fallback", false}};
    write_json(doc, dir / "abort.json");
    const CliRun r = run_cli(dir, "run --config abort.json --out out");
    CHECK(r.code == 1);
    CHECK(r.err.find("planner aborted") != std::string::npos);
    const auto rows = csv_rows(dir / "out" / "steps.csv");
    CHECK(rows.size() > 0);
    CHECK(rows.size() < 200);
    const Json summary = read_json_file(dir / "out" / "summary.json");
    CHECK(summary["completed"] == false);
    CHECK(read_json_file(dir / "out" / "manifest.json")["exit_code"] == 1);
}

TEST_CASE("cli sweep rows and aggregates")
{
    const auto dir = scratch_dir("cli_sweep");
    write_json(small_scenario(8, 20, 8), dir / "scenario.json");
    Json sweep{{"format_version", 1},
               {"scenario", "scenario.json"},
               {"n_members", {20}},
               {"horizons", {8}},
               {"methods", {"enks"}},
               {"seeds", {1}}};
    write_json(sweep, dir / "one.json");
    CliRun r = run_cli(dir, "sweep --config one.json --out one");
    INFO(r.err);
    REQUIRE(r.code == 0);
    auto rows = csv_rows(dir / "one" / "results.csv");
    REQUIRE(rows.size() == 2);
    CHECK(rows[0].rfind("cell,enks,20,8,1,", 0) == 0);
    CHECK(rows[1].rfind("aggregate,enks,20,8,,1,", 0) == 0);
    CHECK(fs::exists(dir / "one" / "cells" / "enks_N20_H8_s1" / "steps.csv"));

    sweep["seeds"] = {1, 2};
    sweep["methods"] = {"enks", "penalty"};
    sweep["steps"] = 3;
    write_json(sweep, dir / "two.json");
    r = run_cli(dir, "sweep --config two.json --out two --threads 2");
    REQUIRE(r.code == 0);
    rows = csv_rows(dir / "two" / "results.csv");
    REQUIRE(rows.size() == 6); // 4 cells + 2 aggregates

    auto field = [](const std::string& row, int idx) {
        std::stringstream ss(row);
        std::string f;
        for (int i = 0; i <= idx; ++i)
            std::getline(ss, f, ',');
        return f;
    };
    const double c1 = std::stod(field(rows[0], 8));
    const double c2 = std::stod(field(rows[1], 8));
    CHECK(c1 != c2);
    CHECK(std::stod(field(rows[4], 8)) == doctest::Approx((c1 + c2) / 2).epsilon(1e-9));
    CHECK(field(rows[4], 5) == "2");
    CHECK(field(rows[2], 2) == "0"); // penalty cells carry no ensemble size
    // Aggregate rows carry relative changes against the penalty row.
    CHECK_FALSE(field(rows[4], 13).empty());
    CHECK(std::stod(field(rows[5], 13)) == doctest::Approx(0.0));
}

TEST_CASE("cli sweep plan time grows with N and H")
{
    const auto dir = scratch_dir("cli_sweep_timing");
    Json scenario = read_json_file(source_dir() / "configs" / "canonical.json");
    scenario["model"]["path"] = shipped_model().string();
    write_json(scenario, dir / "scenario.json");
    Json sweep{{"format_version", 1},
               {"scenario", "scenario.json"},
               {"n_members", {50, 100, 200}},
               {"horizons", {40, 60}},
               {"methods", {"enks"}},
               {"seeds", {1}},
               {"steps", 12}};
    write_json(sweep, dir / "timing.json");
    const CliRun r = run_cli(dir, "sweep --config timing.json --out out");
    INFO(r.err);
    REQUIRE(r.code == 0);
    std::map<std::pair<int, int>, double> t;
    for (const auto& row : csv_rows(dir / "out" / "results.csv")) {
        if (row.rfind("aggregate", 0) != 0)
            continue;
        std::stringstream ss(row);
        std::vector<std::string> f;
        std::string s;
        while (std::getline(ss, s, ','))
            f.push_back(s);
        t[{std::stoi(f[2]), std::stoi(f[3])}] = std::stod(f[9]);
    }
    REQUIRE(t.size() == 6);
    for (int h : {40, 60}) {
        CHECK(t[{50, h}] < t[{100, h}]);
        CHECK(t[{100, h}] < t[{200, h}]);
    }
    for (int n : {50, 100, 200})
        CHECK(t[{n, 40}] < t[{n, 60}]);
}

TEST_CASE("cli canonical run keeps the safety distance")
{
    const auto dir = scratch_dir("cli_canonical");
    const CliRun r = run_cli(dir, "run --config '" + (source_dir() / "configs" / "canonical.json").string() +
                                      "' --out out");
    INFO(r.err);
    REQUIRE(r.code == 0);
    const Json summary = read_json_file(dir / "out" / "summary.json");
    CHECK(summary["steps_completed"] == 500);
    CHECK(summary["min_distance"].get<double>() >= 1.0);
    CHECK(summary["boundary_violations"] == 0);
}
