#include "doctest.h"

#include <cmath>
#include <numbers>
#include <random>

#include "enkmp/dynamics.hpp"
#include "enkmp/errors.hpp"
#include "enkmp/mlp.hpp"
#include "enkmp/model_learning.hpp"
#include "json.hpp"
#include "support.hpp"

#include <fstream>

using namespace enkmp;

namespace {

const BicycleParams kParams{};

StateVector euler_reference(const VehicleState& s, const ControlInput& u, double dt, int substeps)
{
    VehicleState x = s;
    const double h = dt / substeps;
    for (int i = 0; i < substeps; ++i)
        x = VehicleState::from_vector(x.vector() + h * bicycle_derivative(x, u, kParams));
    return x.vector();
}

} // namespace

TEST_CASE("bicycle derivative closed-form cases")
{
    CHECK(bicycle_derivative({0, 0, 0, 1}, {0, 0}, kParams).isApprox(StateVector(1, 0, 0, 0)));

    const StateVector d = bicycle_derivative({0, 0, std::numbers::pi / 2, 2}, {1, 0}, kParams);
    CHECK(d[0] == doctest::Approx(0.0).epsilon(1e-15));
    CHECK(d[1] == doctest::Approx(2.0));
    CHECK(d[2] == 0.0);
    CHECK(d[3] == 1.0);

    // Long-double evaluation of the same expressions.
    const long double psi = 0.3L, v = 5.0L, delta = 0.1L, wb = 2.5L;
    const StateVector got = bicycle_derivative({3, -1, 0.3, 5}, {0.5, 0.1}, kParams);
    CHECK(std::abs(got[0] - static_cast<double>(v * std::cos(psi))) < 1e-14);
    CHECK(std::abs(got[1] - static_cast<double>(v * std::sin(psi))) < 1e-14);
    CHECK(std::abs(got[2] - static_cast<double>(v * std::tan(delta) / wb)) < 1e-14);
    CHECK(got[3] == 0.5);
}

TEST_CASE("bicycle derivative rejects non-finite input")
{
    CHECK_THROWS_AS(bicycle_derivative({NAN, 0, 0, 1}, {0, 0}, kParams), InvalidStateError);
    CHECK_THROWS_AS(bicycle_derivative({0, 0, 0, 1}, {INFINITY, 0}, kParams), InvalidStateError);
    CHECK_THROWS_AS(true_step({0, 0, 0, 1}, {0, NAN}, kParams, 0.1), InvalidStateError);
}

TEST_CASE("bicycle params validation")
{
    CHECK_THROWS_AS((BicycleParams{0.0, 0.0, 40.0}.validate()), ConfigError);
    CHECK_THROWS_AS((BicycleParams{2.5, 5.0, 5.0}.validate()), ConfigError);
    CHECK_THROWS_AS((BicycleParams{2.5, -1.0, 5.0}.validate()), ConfigError);
    CHECK_NOTHROW(kParams.validate());
}

TEST_CASE("true_step simple motions")
{
    const VehicleState rest{1.5, -2.0, 0.4, 0.0};
    CHECK(true_step(rest, {0, 0}, kParams, 0.1) == rest);

    const VehicleState moved = true_step({0, 0, 0, 1}, {0, 0}, kParams, 0.1);
    CHECK(moved.x_pos == doctest::Approx(0.1).epsilon(1e-14));
    CHECK(moved.y_pos == 0.0);
    CHECK(moved.heading == 0.0);
    CHECK(moved.speed == 1.0);

    CHECK_THROWS_AS(true_step(rest, {0, 0}, kParams, 0.0), ConfigError);
}

TEST_CASE("true_step matches a fine Euler integration")
{
    const VehicleState s{0, 0, 0, 5};
    const ControlInput u{1, 0.1};
    const StateVector rk4 = true_step(s, u, kParams, 0.1).vector();
    const StateVector e1 = euler_reference(s, u, 0.1, 1000);
    const StateVector e2 = euler_reference(s, u, 0.1, 2000);
    // Euler's O(h) error is removed by one Richardson step.
    const StateVector extrapolated = 2.0 * e2 - e1;
    for (int i = 0; i < 4; ++i) {
        CHECK(std::abs(rk4[i] - extrapolated[i]) < 1e-6);
        CHECK(std::abs(rk4[i] - e1[i]) < 1e-4);
    }
}

TEST_CASE("true_step converges at fourth order")
{
    const VehicleState s{0, 0, 0.2, 8};
    const ControlInput u{1.5, 0.4};
    auto error = [&](double dt) {
        // Converged reference: many tiny RK4 steps.
        VehicleState ref = s;
        for (int i = 0; i < 2000; ++i)
            ref = true_step(ref, u, kParams, dt / 2000);
        return (true_step(s, u, kParams, dt).vector() - ref.vector()).norm();
    };
    const double coarse = error(0.4);
    const double fine = error(0.2);
    CHECK(coarse / fine >= 8.0);

    // Two half steps agree with one full step to the same order.
    const VehicleState half = true_step(true_step(s, u, kParams, 0.05), u, kParams, 0.05);
    CHECK((half.vector() - true_step(s, u, kParams, 0.1).vector()).norm() < 1e-6);
}

TEST_CASE("true_step clamps speed and wraps heading")
{
    std::mt19937 rng(3);
    std::uniform_real_distribution<double> any(-10.0, 10.0);
    for (int i = 0; i < 500; ++i) {
        const VehicleState s{any(rng), any(rng), any(rng), std::abs(any(rng))};
        const ControlInput u{any(rng), 0.1 * any(rng)};
        const VehicleState next = true_step(s, u, kParams, 0.1);
        CHECK(next.heading > -std::numbers::pi);
        CHECK(next.heading <= std::numbers::pi);
        CHECK(next.speed >= kParams.speed_floor);
        CHECK(next.speed <= kParams.speed_ceiling);
    }
    CHECK(true_step({0, 0, 0, 0.1}, {-5, 0}, kParams, 0.1).speed == 0.0);
    CHECK(true_step({0, 0, 0, 39.9}, {5, 0}, kParams, 0.1).speed == 40.0);
}

TEST_CASE("wrap_angle range")
{
    CHECK(wrap_angle(std::numbers::pi) == doctest::Approx(std::numbers::pi));
    CHECK(wrap_angle(-std::numbers::pi) == doctest::Approx(std::numbers::pi));
    CHECK(wrap_angle(3 * std::numbers::pi / 2) == doctest::Approx(-std::numbers::pi / 2));
    CHECK(wrap_angle(0.25) == 0.25);
}

TEST_CASE("euler and linear planner models")
{
    const EulerBicycleDynamics euler(kParams);
    const StateVector x(1, 2, 0.3, 4);
    const ControlVector u(0.5, -0.1);
    const StateVector expected =
        x + 0.1 * bicycle_derivative(VehicleState::from_vector(x), ControlInput::from_vector(u), kParams);
    CHECK((euler.step(x, u, 0.1) - expected).norm() < 1e-15);

    Eigen::Matrix4d a = Eigen::Matrix4d::Identity();
    a(0, 2) = 0.1;
    Eigen::Matrix<double, 4, 2> b = Eigen::Matrix<double, 4, 2>::Zero();
    b(2, 0) = 0.1;
    const LinearDynamics lin(a, b);
    CHECK((lin.step(x, u, 123.0) - (a * x + b * u)).norm() < 1e-15);
}

// --- neural surrogate --------------------------------------------------------

namespace {

MlpModel identity_normalized(MlpModel m)
{
    m.input_offset = Eigen::VectorXd::Zero(m.input_dim());
    m.input_scale = Eigen::VectorXd::Ones(m.input_dim());
    m.output_offset = Eigen::VectorXd::Zero(m.output_dim());
    m.output_scale = Eigen::VectorXd::Ones(m.output_dim());
    return m;
}

/// Single linear layer with weights W (4 x 6) and bias b.
MlpModel affine_model(const Eigen::MatrixXd& w, const Eigen::VectorXd& b)
{
    MlpModel m;
    m.layers.push_back({w, b, Activation::identity});
    return identity_normalized(m);
}

/// Forward pass written out with explicit loops.
Eigen::VectorXd loop_forward(const MlpModel& m, const Eigen::VectorXd& x)
{
    std::vector<double> a(static_cast<std::size_t>(x.size()));
    for (Eigen::Index i = 0; i < x.size(); ++i)
        a[static_cast<std::size_t>(i)] = (x[i] - m.input_offset[i]) / m.input_scale[i];
    for (const auto& layer : m.layers) {
        std::vector<double> next(static_cast<std::size_t>(layer.weights.rows()));
        for (Eigen::Index r = 0; r < layer.weights.rows(); ++r) {
            long double acc = layer.bias[r];
            for (Eigen::Index c = 0; c < layer.weights.cols(); ++c)
                acc += static_cast<long double>(layer.weights(r, c)) * a[static_cast<std::size_t>(c)];
            next[static_cast<std::size_t>(r)] =
                layer.activation == Activation::tanh ? std::tanh(static_cast<double>(acc))
                                                     : static_cast<double>(acc);
        }
        a = std::move(next);
    }
    Eigen::VectorXd y(static_cast<Eigen::Index>(a.size()));
    for (Eigen::Index i = 0; i < y.size(); ++i)
        y[i] = m.output_offset[i] + m.output_scale[i] * a[static_cast<std::size_t>(i)];
    return y;
}

} // namespace

TEST_CASE("mlp affine identity and constant networks")
{
    Eigen::MatrixXd w = Eigen::MatrixXd::Zero(4, 6);
    w.leftCols(4).setIdentity();
    MlpModel m = affine_model(w, Eigen::VectorXd::Zero(4));
    m.input_offset << 1, 2, 3, 4, 5, 6;
    m.input_scale << 2, 2, 2, 2, 1, 1;
    const VehicleState s{3, 4, 5, 6};
    // Output is the normalized state slice.
    CHECK(mlp_forward(m, s, {0, 0}).isApprox(StateVector(1, 1, 1, 1)));

    const Eigen::Vector4d bias(0.5, -1, 2, 3);
    MlpModel c = affine_model(Eigen::MatrixXd::Zero(4, 6), bias);
    c.output_offset << 1, 1, 1, 1;
    c.output_scale << 2, 2, 2, 2;
    for (double v : {-10.0, 0.0, 7.0})
        CHECK(mlp_forward(c, {v, v, v, v}, {v, -v}).isApprox(StateVector(2, -1, 5, 7)));
}

TEST_CASE("mlp forward matches an independent loop implementation")
{
    MlpModel m = make_mlp({6, 128, 128, 4}, Activation::tanh, 11);
    m.input_offset << 100, 50, 0, 7, 0, 0;
    m.input_scale << 150, 100, 1.8, 4, 2, 0.3;
    m.output_offset << 0.1, -0.2, 0.0, 0.3;
    m.output_scale << 5, 5, 0.8, 2;
    Eigen::VectorXd x(6);
    x << 120.5, 33.25, -0.7, 9.1, 0.4, -0.12;
    const StateVector got = mlp_forward(m, VehicleState::from_vector(x.head<4>()),
                                        ControlInput::from_vector(x.tail<2>()));
    CHECK((got - loop_forward(m, x)).cwiseAbs().maxCoeff() < 1e-12);

    // Batch evaluation agrees column by column.
    const Eigen::MatrixXd xs = test_support::random_matrix(6, 9, 5);
    const Eigen::MatrixXd ys = m.forward_batch(xs);
    for (Eigen::Index i = 0; i < xs.cols(); ++i)
        CHECK((ys.col(i) - loop_forward(m, xs.col(i))).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("mlp exactly linear when all activations are linear")
{
    MlpModel m = identity_normalized(make_mlp({6, 5, 3, 4}, Activation::identity, 2));
    Eigen::MatrixXd product = Eigen::MatrixXd::Identity(6, 6);
    Eigen::VectorXd offset = Eigen::VectorXd::Zero(6);
    for (const auto& layer : m.layers) {
        offset = layer.weights * offset + layer.bias;
        product = layer.weights * product;
    }
    const Eigen::MatrixXd xs = test_support::random_matrix(6, 4, 8);
    const Eigen::MatrixXd expected = (product * xs).colwise() + offset;
    CHECK((m.forward_batch(xs) - expected).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("mlp rejects inconsistent shapes")
{
    MlpModel m = make_mlp({6, 8, 4}, Activation::tanh, 1);
    m.layers[1].weights.resize(4, 7);
    CHECK_THROWS_AS(m.validate(), ConfigError);
    CHECK_THROWS_AS(mlp_forward(m, {}, {}), ConfigError);

    const MlpModel wrong_io = make_mlp({5, 8, 4}, Activation::tanh, 1);
    CHECK_NOTHROW(wrong_io.validate());
    CHECK_THROWS_AS(wrong_io.validate_vehicle_model(), ConfigError);
    CHECK_THROWS_AS(SurrogateDynamics{wrong_io}, ConfigError);
    CHECK_THROWS_AS(make_mlp({6}, Activation::tanh, 1), ConfigError);
}

TEST_CASE("surrogate step is one Euler step")
{
    const MlpModel zero = affine_model(Eigen::MatrixXd::Zero(4, 6), Eigen::VectorXd::Zero(4));
    const VehicleState s{1, 2, 3.5, 4};
    CHECK(surrogate_step(zero, s, {1, 1}, 0.1) == s);

    const Eigen::Vector4d c(1, -2, 0.5, 3);
    const MlpModel constant = affine_model(Eigen::MatrixXd::Zero(4, 6), c);
    const VehicleState next = surrogate_step(constant, s, {0, 0}, 0.1);
    CHECK((next.vector() - (s.vector() + 0.1 * c)).norm() < 1e-15);

    // Increment is exactly proportional to dt, and the heading is not wrapped.
    const MlpModel net = make_mlp({6, 16, 4}, Activation::tanh, 4);
    const StateVector d1 = surrogate_step(net, s, {0.3, 0.1}, 0.1).vector() - s.vector();
    const StateVector d2 = surrogate_step(net, s, {0.3, 0.1}, 0.2).vector() - s.vector();
    CHECK((d2 - 2.0 * d1).norm() < 1e-14);
    CHECK(surrogate_step(constant, {0, 0, 3.1, 1}, {0, 0}, 1.0).heading == doctest::Approx(3.6));

    const SurrogateDynamics dyn(net);
    CHECK((dyn.step(s.vector(), ControlVector(0.3, 0.1), 0.1) -
           surrogate_step(net, s, {0.3, 0.1}, 0.1).vector())
              .norm() < 1e-14);
}

TEST_CASE("model json round trip and errors")
{
    MlpModel m = make_mlp({6, 7, 4}, Activation::tanh, 9);
    m.input_scale[2] = 3.0;
    const MlpModel back = model_from_json(model_to_json(m));
    REQUIRE(back.layers.size() == 2);
    for (std::size_t l = 0; l < 2; ++l) {
        CHECK(back.layers[l].weights == m.layers[l].weights);
        CHECK(back.layers[l].bias == m.layers[l].bias);
        CHECK(back.layers[l].activation == m.layers[l].activation);
    }
    CHECK(back.input_scale == m.input_scale);

    CHECK_THROWS_AS(model_from_json("{"), ConfigError);
    CHECK_THROWS_AS(model_from_json(R"({"format_version": 99})"), ConfigError);
    CHECK_THROWS_AS(load_model(test_support::scratch_dir("json") / "missing.json"), ConfigError);
}

TEST_CASE("shipped surrogate tracks the true plant from a held-out start")
{
    const MlpModel model = load_model(test_support::shipped_model());
    const auto train_cfg = nlohmann::json::parse(
        std::ifstream(test_support::source_dir() / "configs" / "train.json"));
    const auto bound = train_cfg.at("validation_rmse_bound").get<std::vector<double>>();
    const double dt = 0.1;

    // Start state and controls not drawn from the training streams.
    VehicleState x{123.4, 56.7, 0.9, 6.5};
    for (int k = 0; k < 20; ++k) {
        const ControlInput u{0.8 * std::sin(0.3 * k), 0.2 * std::cos(0.2 * k)};
        const VehicleState truth = true_step(x, u, kParams, dt);
        const VehicleState pred = surrogate_step(model, x, u, dt);
        // Euler-vs-RK4 discretization gap plus the learned-derivative error.
        const VehicleState euler =
            VehicleState::from_vector(x.vector() + dt * bicycle_derivative(x, u, kParams));
        const double disc_gap = (euler.vector().head<2>() - truth.vector().head<2>()).norm();
        const double allowed = disc_gap + 3.0 * dt * std::hypot(bound[0], bound[1]);
        CHECK((pred.vector().head<2>() - truth.vector().head<2>()).norm() <= allowed);
        x = truth;
    }
}
