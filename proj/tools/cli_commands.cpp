#include "cli_commands.hpp"

#include <atomic>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <thread>
#include <vector>

#include "enkmp/config_io.hpp"
#include "enkmp/errors.hpp"
#include "enkmp/mlp.hpp"
#include "enkmp/model_learning.hpp"
#include "enkmp/scenario.hpp"

namespace enkmp::cli {

namespace fs = std::filesystem;

namespace {

std::string utc_now()
{
    const std::time_t now = std::time(nullptr);
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

std::string num(double v)
{
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.10g", v);
    return buf;
}

/// The loaded config document with CLI overrides applied.
struct LoadedConfig
{
    Json doc;
    fs::path path;
    fs::path dir;
    std::uint64_t hash = 0;
};

LoadedConfig load_config(const CommonOptions& opts)
{
    LoadedConfig c;
    c.path = opts.config;
    c.dir = fs::absolute(opts.config).parent_path();
    c.doc = read_json_file(opts.config);
    if (!c.doc.is_object())
        throw ConfigError("config: top level must be an object");
    if (opts.seed)
        c.doc["seed"] = *opts.seed;
    c.hash = config_hash(c.doc);
    return c;
}

fs::path output_dir(const CommonOptions& opts, const std::string& command, const LoadedConfig& cfg)
{
    fs::path dir;
    if (opts.out) {
        dir = *opts.out;
    } else {
        const char* root = std::getenv(kOutputRootEnv);
        dir = fs::path(root && *root ? root : "runs") /
              (command + "_" + cfg.path.stem().string() + "_" + hex64(cfg.hash).substr(0, 8));
    }
    fs::create_directories(dir);
    return dir;
}

class Manifest
{
public:
    Manifest(const std::string& command, const LoadedConfig& cfg, fs::path dir)
        : dir_(std::move(dir))
    {
        doc_ = Json{{"tool", "enkmp"},
                    {"version", kVersion},
                    {"command", command},
                    {"config_path", fs::absolute(cfg.path).string()},
                    {"config_hash", hex64(cfg.hash)},
                    {"resolved_config", cfg.doc},
                    {"seed", cfg.doc.contains("seed") ? cfg.doc["seed"] : Json()},
                    {"output_dir", fs::absolute(dir_).string()},
                    {"artifact_versions",
                     {{"config_format", kConfigFormatVersion},
                      {"model_format", kModelFormatVersion},
                      {"step_csv", kStepCsvVersion}}},
                    {"started_at", utc_now()}};
    }

    void set(const std::string& key, Json value) { doc_[key] = std::move(value); }

    void finish(int exit_code)
    {
        doc_["finished_at"] = utc_now();
        doc_["exit_code"] = exit_code;
        std::ofstream out(dir_ / "manifest.json");
        out << doc_.dump(2) << '\n';
    }

private:
    fs::path dir_;
    Json doc_;
};

void write_json(const Json& doc, const fs::path& path)
{
    std::ofstream out(path);
    if (!out)
        throw Error("cannot open '" + path.string() + "' for writing");
    out << doc.dump(2) << '\n';
}

void write_loss_csv(const std::vector<EpochLoss>& history, const fs::path& path)
{
    std::ofstream out(path);
    if (!out)
        throw Error("cannot open '" + path.string() + "' for writing");
    out << "# enkmp loss v1\n";
    out << "epoch,train_mse,val_mse\n";
    char buf[96];
    for (const auto& e : history) {
        std::snprintf(buf, sizeof buf, "%d,%.17g,%.17g\n", e.epoch, e.train_mse, e.val_mse);
        out << buf;
    }
}

std::unique_ptr<DynamicsModel> make_planner_model(const ScenarioConfig& cfg)
{
    if (cfg.bicycle_fallback)
        return std::make_unique<EulerBicycleDynamics>(cfg.vehicle);
    return std::make_unique<SurrogateDynamics>(load_model(cfg.model_path));
}

fs::path in_dir(const fs::path& dir, const fs::path& name)
{
    return name.is_absolute() ? name : dir / name;
}

int run_one(const CommonOptions& opts, const std::string& command, bool force_penalty)
{
    const LoadedConfig cfg = load_config(opts);
    ScenarioConfig scenario = parse_scenario_config(cfg.doc, cfg.dir);
    if (force_penalty)
        scenario.method = PlannerMethod::penalty;
    const auto model = make_planner_model(scenario);

    const fs::path dir = output_dir(opts, command, cfg);
    Manifest manifest(command, cfg, dir);

    const ScenarioResult result = run_scenario(scenario, *model);
    const auto csv = in_dir(dir, scenario.csv_path);
    write_step_csv(result.records, scenario.obstacles.size(), csv);
    write_timing_csv(result.records, dir / "timing.csv");
    write_json(summary_to_json(result.summary), in_dir(dir, scenario.summary_path));

    const auto& s = result.summary;
    std::cout << "method=" << s.method << " N=" << s.n_members << " H=" << s.horizon
              << " steps=" << s.steps_completed << " total_cost=" << num(s.total_cost)
              << " min_distance=" << num(s.min_distance)
              << " mean_plan_time=" << num(s.mean_plan_time) << "s"
              << " collisions=" << s.collision_violations
              << " boundary=" << s.boundary_violations << '\n';

    const int code = s.completed ? kExitOk : kExitRuntime;
    if (!s.completed)
        std::cerr << "error: planner aborted: " << s.failure << '\n';
    manifest.finish(code);
    return code;
}

struct Cell
{
    PlannerMethod method;
    int n_members;
    int horizon;
    std::uint64_t seed;
    ScenarioSummary summary;
    std::string failure;
};

std::string cell_name(const Cell& c)
{
    return method_name(c.method) + "_N" + std::to_string(c.n_members) + "_H" +
           std::to_string(c.horizon) + "_s" + std::to_string(c.seed);
}

std::string csv_field(const std::string& s)
{
    if (s.find_first_of(",\"\n") == std::string::npos)
        return s;
    std::string q = "\"";
    for (char ch : s) {
        if (ch == '"')
            q += '"';
        q += ch == '\n' ? ' ' : ch;
    }
    return q + "\"";
}

} // namespace

int cmd_train(const CommonOptions& opts)
{
    const LoadedConfig cfg = load_config(opts);
    const TrainJob job = parse_train_config(cfg.doc);
    const fs::path dir = output_dir(opts, "train", cfg);
    Manifest manifest("train", cfg, dir);

    const Dataset data = generate_dataset(job.training, job.vehicle);

    std::vector<int> widths{kStateDim + kControlDim};
    widths.insert(widths.end(), job.training.hidden_widths.begin(), job.training.hidden_widths.end());
    widths.push_back(kStateDim);
    const TrainingResult trained =
        train(make_mlp(widths, job.activation, job.training.rng_seed), data, job.training);

    save_model(trained.model, dir / job.model_file);
    write_loss_csv(trained.history, dir / job.loss_file);

    const auto& eval_idx = data.validation_indices.empty() ? data.train_indices : data.validation_indices;
    const Eigen::VectorXd rmse = evaluate_rmse(trained.model, data, eval_idx);
    Json metrics{{"validation_rmse", std::vector<double>(rmse.data(), rmse.data() + rmse.size())},
                 {"n_samples", data.size()},
                 {"n_validation", data.validation_indices.size()},
                 {"final_train_mse", trained.history.back().train_mse}};

    int code = kExitOk;
    if (job.validation_rmse_bound) {
        const bool ok = (rmse.array() <= job.validation_rmse_bound->array()).all();
        metrics["within_bound"] = ok;
        if (!ok) {
            std::cerr << "error: validation RMSE exceeds the configured bound\n";
            code = kExitRuntime;
        }
    }
    write_json(metrics, dir / "train_metrics.json");
    std::cout << "epochs=" << trained.history.size()
              << " train_mse=" << num(trained.history.back().train_mse) << " val_rmse=[";
    for (Eigen::Index i = 0; i < rmse.size(); ++i)
        std::cout << (i ? "," : "") << num(rmse[i]);
    std::cout << "] model=" << (dir / job.model_file).string() << '\n';
    manifest.finish(code);
    return code;
}

int cmd_run(const CommonOptions& opts) { return run_one(opts, "run", false); }

int cmd_baseline(const CommonOptions& opts) { return run_one(opts, "baseline", true); }

int cmd_sweep(const CommonOptions& opts)
{
    const LoadedConfig cfg = load_config(opts);
    const SweepConfig sweep = parse_sweep_config(cfg.doc, cfg.dir);

    // Validate the base scenario before any work starts.
    Json base = sweep.scenario;
    if (sweep.steps)
        base["steps"] = *sweep.steps;
    const ScenarioConfig base_cfg = parse_scenario_config(base, sweep.scenario_dir);
    const auto model = make_planner_model(base_cfg);

    std::vector<Cell> cells;
    for (auto method : sweep.methods) {
        // The penalty solver has no ensemble; one column regardless of N.
        const std::vector<int> sizes =
            method == PlannerMethod::penalty ? std::vector<int>{0} : sweep.n_members;
        for (int n : sizes)
            for (int h : sweep.horizons)
                for (auto seed : sweep.seeds)
                    cells.push_back({method, n, h, seed, {}, {}});
    }

    const fs::path dir = output_dir(opts, "sweep", cfg);
    Manifest manifest("sweep", cfg, dir);

    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t i = next++; i < cells.size(); i = next++) {
            Cell& c = cells[i];
            try {
                Json doc = base;
                doc["seed"] = c.seed;
                doc["planner"]["method"] = method_name(c.method);
                doc["planner"]["horizon"] = c.horizon;
                if (c.n_members > 0)
                    doc["planner"]["n_members"] = c.n_members;
                const ScenarioConfig sc = parse_scenario_config(doc, sweep.scenario_dir);
                const fs::path cell_dir = dir / "cells" / cell_name(c);
                fs::create_directories(cell_dir);
                const ScenarioResult r = run_scenario(sc, *model);
                write_step_csv(r.records, sc.obstacles.size(), cell_dir / "steps.csv");
                write_timing_csv(r.records, cell_dir / "timing.csv");
                write_json(summary_to_json(r.summary), cell_dir / "summary.json");
                c.summary = r.summary;
                c.failure = r.summary.failure;
            } catch (const std::exception& e) {
                c.failure = e.what();
            }
        }
    };
    const int n_threads = std::max(1, std::min<int>(opts.threads, static_cast<int>(cells.size())));
    std::vector<std::thread> pool;
    for (int t = 1; t < n_threads; ++t)
        pool.emplace_back(worker);
    worker();
    for (auto& t : pool)
        t.join();

    // Aggregates over seeds, keyed in first-seen order.
    struct Agg
    {
        PlannerMethod method;
        int n_members;
        int horizon;
        int count = 0;
        int failed = 0;
        double cost = 0.0;
        double time = 0.0;
        double min_distance = std::numeric_limits<double>::infinity();
        int collisions = 0;
        int boundary = 0;
        std::optional<double> rel_cost, rel_time;
    };
    std::vector<Agg> aggs;
    for (const auto& c : cells) {
        auto it = std::find_if(aggs.begin(), aggs.end(), [&](const Agg& a) {
            return a.method == c.method && a.n_members == c.n_members && a.horizon == c.horizon;
        });
        if (it == aggs.end()) {
            Agg a;
            a.method = c.method;
            a.n_members = c.n_members;
            a.horizon = c.horizon;
            aggs.push_back(a);
            it = aggs.end() - 1;
        }
        if (!c.failure.empty() || !c.summary.completed) {
            ++it->failed;
            continue;
        }
        ++it->count;
        it->cost += c.summary.total_cost;
        it->time += c.summary.mean_plan_time;
        it->min_distance = std::min(it->min_distance, c.summary.min_distance);
        it->collisions += c.summary.collision_violations;
        it->boundary += c.summary.boundary_violations;
    }
    for (auto& a : aggs)
        if (a.count > 0) {
            a.cost /= a.count;
            a.time /= a.count;
        }
    for (auto& a : aggs) {
        const auto base_it = std::find_if(aggs.begin(), aggs.end(), [&](const Agg& b) {
            return method_name(b.method) == sweep.baseline_method && b.horizon == a.horizon &&
                   b.count > 0;
        });
        if (base_it == aggs.end() || a.count == 0)
            continue;
        SummaryRow row, ref;
        row.total_cost = a.cost;
        row.avg_plan_time = a.time;
        ref.total_cost = base_it->cost;
        ref.avg_plan_time = base_it->time;
        apply_relative(row, ref);
        a.rel_cost = row.relative_cost_change;
        a.rel_time = row.relative_time_change;
    }

    std::ofstream out(dir / "results.csv");
    if (!out)
        throw Error("cannot write sweep results");
    out << "# enkmp sweep v1\n";
    out << "row,method,n_members,horizon,seed,runs,steps_completed,completed,total_cost,"
           "avg_plan_time_s,min_distance,collision_violations,boundary_violations,"
           "relative_cost_change_pct,relative_time_change_pct,failure\n";
    int failures = 0;
    for (const auto& c : cells) {
        const auto& s = c.summary;
        const bool ok = c.failure.empty() && s.completed;
        failures += ok ? 0 : 1;
        out << "cell," << method_name(c.method) << ',' << c.n_members << ',' << c.horizon << ','
            << c.seed << ",1," << s.steps_completed << ',' << (ok ? 1 : 0) << ','
            << num(s.total_cost) << ',' << num(s.mean_plan_time) << ',' << num(s.min_distance)
            << ',' << s.collision_violations << ',' << s.boundary_violations << ",,,"
            << csv_field(c.failure) << '\n';
    }
    for (const auto& a : aggs) {
        out << "aggregate," << method_name(a.method) << ',' << a.n_members << ',' << a.horizon
            << ",," << a.count << ",," << (a.failed == 0 ? 1 : 0) << ',';
        if (a.count > 0)
            out << num(a.cost) << ',' << num(a.time) << ',' << num(a.min_distance);
        else
            out << ",,";
        out << ',' << a.collisions << ',' << a.boundary << ','
            << (a.rel_cost ? num(*a.rel_cost) : "") << ',' << (a.rel_time ? num(*a.rel_time) : "")
            << ',' << (a.failed ? std::to_string(a.failed) + " failed" : "") << '\n';
        std::cout << method_name(a.method) << " N=" << a.n_members << " H=" << a.horizon
                  << " runs=" << a.count << " cost=" << num(a.cost) << " time=" << num(a.time)
                  << "s\n";
    }
    out.close();

    manifest.set("cells", cells.size());
    manifest.set("failed_cells", failures);
    manifest.finish(kExitOk);
    return kExitOk;
}

} // namespace enkmp::cli
