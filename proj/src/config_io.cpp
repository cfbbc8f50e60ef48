#include "enkmp/config_io.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "enkmp/errors.hpp"

namespace enkmp {

namespace {

/// Field lookup that names the dotted path of anything missing or mistyped.
class Section
{
public:
    Section(const Json& node, std::string path) : node_(node), path_(std::move(path))
    {
        if (!node_.is_object())
            throw ConfigError("config: '" + (path_.empty() ? std::string("<root>") : path_) +
                              "' must be an object");
    }

    bool has(const char* key) const { return node_.contains(key); }

    std::string where(const char* key) const { return path_.empty() ? key : path_ + "." + key; }

    const Json& raw(const char* key) const
    {
        if (!node_.contains(key))
            throw ConfigError("config: missing field '" + where(key) + "'");
        return node_.at(key);
    }

    template <typename T>
    T get(const char* key) const
    {
        try {
            return raw(key).template get<T>();
        } catch (const Json::exception& e) {
            throw ConfigError("config: field '" + where(key) + "' has the wrong type: " + e.what());
        }
    }

    template <typename T>
    T get_or(const char* key, T fallback) const
    {
        return has(key) ? get<T>(key) : fallback;
    }

    Section sub(const char* key) const { return Section(raw(key), where(key)); }

    template <int N>
    Eigen::Matrix<double, N, 1> vec(const char* key) const
    {
        const auto values = get<std::vector<double>>(key);
        if (static_cast<int>(values.size()) != N)
            throw ConfigError("config: field '" + where(key) + "' must hold " + std::to_string(N) +
                              " numbers");
        Eigen::Matrix<double, N, 1> out;
        for (int i = 0; i < N; ++i)
            out[i] = values[static_cast<std::size_t>(i)];
        return out;
    }

private:
    const Json& node_;
    std::string path_;
};

void check_version(const Section& root)
{
    const int version = root.get<int>("format_version");
    if (version != kConfigFormatVersion)
        throw ConfigError("config: unsupported format_version " + std::to_string(version));
}

BicycleParams parse_vehicle(const Section& s)
{
    BicycleParams p;
    p.wheelbase = s.get<double>("wheelbase");
    p.speed_floor = s.get<double>("speed_floor");
    p.speed_ceiling = s.get<double>("speed_ceiling");
    p.validate();
    return p;
}

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p)
{
    const std::filesystem::path path(p);
    return path.is_absolute() ? path : base / path;
}

} // namespace

Json read_json_file(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in)
        throw ConfigError("config: cannot open '" + path.string() + "'");
    std::stringstream buffer;
    buffer << in.rdbuf();
    const std::string text = buffer.str();
    try {
        return Json::parse(text);
    } catch (const Json::parse_error& e) {
        // Translate the byte offset into a line number.
        const std::size_t upto = std::min<std::size_t>(e.byte, text.size());
        const auto line = 1 + std::count(text.begin(), text.begin() + static_cast<long>(upto), '\n');
        throw ConfigError("config: " + path.string() + ":" + std::to_string(line) + ": " + e.what());
    }
}

TrainJob parse_train_config(const Json& doc)
{
    const Section root(doc, "");
    check_version(root);
    TrainJob job;
    TrainingConfig& t = job.training;
    t.rng_seed = root.get<std::uint64_t>("seed");

    const Section data = root.sub("data");
    t.n_trajectories = data.get<int>("n_trajectories");
    t.steps_per_trajectory = data.get<int>("steps_per_trajectory");
    t.dt = data.get<double>("dt");
    t.hold_steps = data.get<int>("hold_steps");
    t.accel_range = data.vec<2>("accel_range");
    t.steer_range = data.vec<2>("steer_range");
    t.x_range = data.vec<2>("x_range");
    t.y_range = data.vec<2>("y_range");
    t.speed_range = data.vec<2>("speed_range");

    const Section net = root.sub("network");
    t.hidden_widths = net.get<std::vector<int>>("hidden_widths");
    job.activation = activation_from_name(net.get<std::string>("activation"));

    const Section opt = root.sub("optimizer");
    t.learning_rate = opt.get<double>("learning_rate");
    t.adam_beta1 = opt.get<double>("beta1");
    t.adam_beta2 = opt.get<double>("beta2");
    t.adam_epsilon = opt.get<double>("epsilon");
    t.batch_size = opt.get<int>("batch_size");
    t.epochs = opt.get<int>("epochs");
    t.validation_fraction = opt.get<double>("validation_fraction");

    job.vehicle = parse_vehicle(root.sub("vehicle"));
    if (root.has("validation_rmse_bound"))
        job.validation_rmse_bound = root.vec<4>("validation_rmse_bound");
    if (root.has("output")) {
        const Section out = root.sub("output");
        job.model_file = out.get_or<std::string>("model", job.model_file);
        job.loss_file = out.get_or<std::string>("loss_csv", job.loss_file);
    }
    t.validate();
    return job;
}

ScenarioConfig parse_scenario_config(const Json& doc, const std::filesystem::path& base_dir)
{
    const Section root(doc, "");
    check_version(root);
    ScenarioConfig cfg;
    cfg.seed = root.get<std::uint64_t>("seed");
    cfg.steps = root.get<int>("steps");
    cfg.target_speed = root.get<double>("target_speed");
    cfg.reference_lane_offset = root.get<double>("reference_lane_offset");

    const Section road = root.sub("road");
    cfg.road.type = road.get<std::string>("type");
    cfg.road.spacing = road.get_or<double>("spacing", 1.0);
    if (cfg.road.type == "straight") {
        cfg.road.length = road.get<double>("length");
        cfg.road.heading = road.get_or<double>("heading", 0.0);
    } else if (cfg.road.type == "arc") {
        cfg.road.radius = road.get<double>("radius");
        cfg.road.sweep = road.get<double>("sweep");
        cfg.road.heading = road.get_or<double>("heading", 0.0);
    } else if (cfg.road.type == "s_curve") {
        cfg.road.length = road.get<double>("length");
        cfg.road.radius = road.get<double>("radius");
    } else if (cfg.road.type == "polyline") {
        if (road.has("points")) {
            for (const auto& p : road.get<std::vector<std::vector<double>>>("points")) {
                if (p.size() != 2)
                    throw ConfigError("config: field 'road.points' entries must be [x, y]");
                cfg.road.points.emplace_back(p[0], p[1]);
            }
        } else {
            cfg.road.file = resolve(base_dir, road.get<std::string>("file"));
        }
    } else {
        throw ConfigError("config: field 'road.type' must be straight, arc, s_curve or polyline");
    }

    const Section ev = root.sub("ev");
    cfg.ev_arclength = ev.get<double>("arclength");
    cfg.ev_lane_offset = ev.get<double>("lane_offset");
    cfg.ev_speed = ev.get<double>("speed");

    const auto& obstacles = root.raw("obstacles");
    if (!obstacles.is_array())
        throw ConfigError("config: field 'obstacles' must be an array");
    for (std::size_t i = 0; i < obstacles.size(); ++i) {
        const Section o(obstacles[i], "obstacles[" + std::to_string(i) + "]");
        cfg.obstacles.push_back(
            {o.get<double>("arclength"), o.get<double>("lane_offset"), o.get<double>("speed")});
    }

    const Section pl = root.sub("planner");
    cfg.method = method_from_name(pl.get<std::string>("method"));
    PlannerConfig& p = cfg.planner;
    p.horizon = pl.get<int>("horizon");
    p.dt = pl.get<double>("dt");
    p.smoother.n_members = pl.get<int>("n_members");
    p.smoother.jitter = pl.get<double>("jitter");
    p.smoother.compute_covariances = pl.get_or<bool>("compute_covariances", false);
    p.control_weight = pl.vec<2>("Q").asDiagonal();
    p.reference_weight = pl.vec<4>("R").asDiagonal();
    cfg.warmstart = pl.get_or<bool>("warmstart", true);
    const Section barrier = pl.sub("barrier");
    p.barrier.alpha = barrier.get<double>("alpha");
    p.barrier.beta = barrier.get<double>("beta");
    p.barrier.noise_var = barrier.get<double>("noise_var");

    const Section c = root.sub("constraints");
    p.constraint.d_min = c.get<double>("d_min");
    p.constraint.road_half_width = c.get<double>("road_half_width");
    p.constraint.u_min = c.vec<2>("u_min");
    p.constraint.u_max = c.vec<2>("u_max");
    p.constraint.vehicle_disc_radius = c.get<double>("disc_radius");
    p.constraint.discs_per_vehicle = c.get<int>("discs_per_vehicle");
    p.constraint.disc_spacing = c.get<double>("disc_spacing");

    if (root.has("penalty")) {
        const Section pen = root.sub("penalty");
        cfg.penalty.outer_iterations = pen.get<int>("outer_iterations");
        cfg.penalty.initial_penalty = pen.get<double>("initial_penalty");
        cfg.penalty.penalty_growth = pen.get<double>("penalty_growth");
        cfg.penalty.max_iterations = pen.get<int>("max_iterations");
        cfg.penalty.fd_step = pen.get<double>("fd_step");
        cfg.penalty.initial_step = pen.get<double>("initial_step");
    }

    cfg.vehicle = parse_vehicle(root.sub("vehicle"));

    const Section model = root.sub("model");
    cfg.bicycle_fallback = model.get_or<bool>("bicycle_fallback", false);
    if (model.has("path"))
        cfg.model_path = resolve(base_dir, model.get<std::string>("path"));
    else if (!cfg.bicycle_fallback)
        throw ConfigError("config: missing field 'model.path' (or set model.bicycle_fallback)");

    if (root.has("output")) {
        const Section out = root.sub("output");
        cfg.csv_path = out.get_or<std::string>("csv", "steps.csv");
        cfg.summary_path = out.get_or<std::string>("summary", "summary.json");
    } else {
        cfg.csv_path = "steps.csv";
        cfg.summary_path = "summary.json";
    }

    try {
        cfg.validate();
    } catch (const ConfigError&) {
        throw;
    } catch (const Error& e) {
        throw ConfigError(e.what());
    }
    return cfg;
}

SweepConfig parse_sweep_config(const Json& doc, const std::filesystem::path& base_dir)
{
    const Section root(doc, "");
    check_version(root);
    SweepConfig sweep;
    const auto scenario_path = resolve(base_dir, root.get<std::string>("scenario"));
    sweep.scenario = read_json_file(scenario_path);
    sweep.scenario_dir = scenario_path.parent_path();
    sweep.n_members = root.get<std::vector<int>>("n_members");
    sweep.horizons = root.get<std::vector<int>>("horizons");
    for (const auto& m : root.get<std::vector<std::string>>("methods"))
        sweep.methods.push_back(method_from_name(m));
    sweep.seeds = root.get<std::vector<std::uint64_t>>("seeds");
    sweep.baseline_method = root.get_or<std::string>("baseline_method", sweep.baseline_method);
    if (root.has("steps"))
        sweep.steps = root.get<int>("steps");
    if (sweep.n_members.empty() || sweep.horizons.empty() || sweep.methods.empty() ||
        sweep.seeds.empty())
        throw ConfigError("config: sweep lists n_members, horizons, methods and seeds must be non-empty");
    return sweep;
}

Json summary_to_json(const ScenarioSummary& s)
{
    return Json{{"method", s.method},
                {"n_members", s.n_members},
                {"horizon", s.horizon},
                {"seed", s.seed},
                {"steps_completed", s.steps_completed},
                {"completed", s.completed},
                {"failure", s.failure},
                {"total_cost", s.total_cost},
                {"min_distance", s.min_distance},
                {"mean_plan_time", s.mean_plan_time},
                {"max_plan_time", s.max_plan_time},
                {"collision_violations", s.collision_violations},
                {"boundary_violations", s.boundary_violations}};
}

namespace {

// 1 and 1.0 mean the same thing; objects are already key-sorted.
Json canonical(const Json& j)
{
    if (j.is_number())
        return j.get<double>();
    if (j.is_array() || j.is_object()) {
        Json out = j;
        for (auto& item : out)
            item = canonical(item);
        return out;
    }
    return j;
}

} // namespace

std::uint64_t config_hash(const Json& resolved)
{
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : canonical(resolved).dump()) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::string hex64(std::uint64_t value)
{
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(value));
    return buf;
}

} // namespace enkmp
