#pragma once

// Independent reference implementations used as test oracles, plus small
// fixture builders. Nothing here calls into the code under test except to
// construct inputs.

#include <cmath>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "enkmp/baselines.hpp"
#include "enkmp/constraints.hpp"
#include "enkmp/dynamics.hpp"

namespace test_support {

inline std::filesystem::path source_dir() { return ENKMP_SOURCE_DIR; }

inline std::filesystem::path shipped_model() { return source_dir() / "models" / "bicycle_mlp.json"; }

/// Fresh scratch directory under the build tree.
inline std::filesystem::path scratch_dir(const std::string& name)
{
    const auto dir = std::filesystem::path(ENKMP_BINARY_DIR) / "test_scratch" / name;
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

inline Eigen::MatrixXd random_matrix(Eigen::Index rows, Eigen::Index cols, unsigned seed)
{
    std::mt19937 rng(seed);
    std::normal_distribution<double> g(0.0, 1.0);
    Eigen::MatrixXd m(rows, cols);
    for (Eigen::Index c = 0; c < cols; ++c)
        for (Eigen::Index r = 0; r < rows; ++r)
            m(r, c) = g(rng);
    return m;
}

/// Random symmetric positive definite matrix.
inline Eigen::MatrixXd random_spd(Eigen::Index n, unsigned seed, double floor = 0.1)
{
    const Eigen::MatrixXd a = random_matrix(n, n, seed);
    return a * a.transpose() / static_cast<double>(n) + floor * Eigen::MatrixXd::Identity(n, n);
}

/// Double loop, no vectorized reductions.
inline Eigen::MatrixXd naive_cross_covariance(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b)
{
    const Eigen::Index n = a.cols();
    std::vector<double> ma(static_cast<std::size_t>(a.rows()), 0.0),
        mb(static_cast<std::size_t>(b.rows()), 0.0);
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index r = 0; r < a.rows(); ++r)
            ma[static_cast<std::size_t>(r)] += a(r, i) / static_cast<double>(n);
        for (Eigen::Index r = 0; r < b.rows(); ++r)
            mb[static_cast<std::size_t>(r)] += b(r, i) / static_cast<double>(n);
    }
    Eigen::MatrixXd c = Eigen::MatrixXd::Zero(a.rows(), b.rows());
    for (Eigen::Index r = 0; r < a.rows(); ++r)
        for (Eigen::Index s = 0; s < b.rows(); ++s) {
            double acc = 0.0;
            for (Eigen::Index i = 0; i < n; ++i)
                acc += (a(r, i) - ma[static_cast<std::size_t>(r)]) *
                       (b(s, i) - mb[static_cast<std::size_t>(s)]);
            c(r, s) = acc / static_cast<double>(n - 1);
        }
    return c;
}

struct JointPosterior
{
    Eigen::VectorXd mean;
    Eigen::MatrixXd cov;
};

/// Builds the whole trajectory as a linear map of independent Gaussian
/// sources (x0, w_1..w_T, v_0..v_T), forms the joint of states and
/// observations, and conditions once on all observations.
inline JointPosterior brute_force_conditioning(const enkmp::LinearGaussianModel& m,
                                               const std::vector<Eigen::VectorXd>& ys)
{
    const Eigen::Index n = m.state_dim();
    const Eigen::Index p = m.measurement_dim();
    const Eigen::Index steps = static_cast<Eigen::Index>(ys.size());
    const Eigen::Index n_src = n + (steps - 1) * n + steps * p;

    // Source covariance is block diagonal.
    Eigen::MatrixXd src_cov = Eigen::MatrixXd::Zero(n_src, n_src);
    src_cov.topLeftCorner(n, n) = m.initial_cov;
    for (Eigen::Index t = 1; t < steps; ++t)
        src_cov.block(n + (t - 1) * n, n + (t - 1) * n, n, n) = m.process_cov;
    const Eigen::Index v0 = n + (steps - 1) * n;
    for (Eigen::Index t = 0; t < steps; ++t)
        src_cov.block(v0 + t * p, v0 + t * p, p, p) = m.measurement_cov;

    // x_t = F^t x0 + sum_{j=1..t} F^{t-j} w_j (+ F^t m0 in the mean).
    Eigen::MatrixXd xmap = Eigen::MatrixXd::Zero(steps * n, n_src);
    Eigen::VectorXd xmean(steps * n);
    std::vector<Eigen::MatrixXd> fpow{Eigen::MatrixXd::Identity(n, n)};
    for (Eigen::Index t = 1; t < steps; ++t)
        fpow.push_back(m.transition * fpow.back());
    for (Eigen::Index t = 0; t < steps; ++t) {
        xmap.block(t * n, 0, n, n) = fpow[static_cast<std::size_t>(t)];
        xmean.segment(t * n, n) = fpow[static_cast<std::size_t>(t)] * m.initial_mean;
        for (Eigen::Index j = 1; j <= t; ++j)
            xmap.block(t * n, n + (j - 1) * n, n, n) = fpow[static_cast<std::size_t>(t - j)];
    }
    Eigen::MatrixXd ymap(steps * p, n_src);
    Eigen::VectorXd ymean(steps * p);
    Eigen::VectorXd yobs(steps * p);
    for (Eigen::Index t = 0; t < steps; ++t) {
        ymap.middleRows(t * p, p) = m.observation * xmap.middleRows(t * n, n);
        ymap.block(t * p, v0 + t * p, p, p) += Eigen::MatrixXd::Identity(p, p);
        ymean.segment(t * p, p) = m.observation * xmean.segment(t * n, n);
        yobs.segment(t * p, p) = ys[static_cast<std::size_t>(t)];
    }
    const Eigen::MatrixXd sxx = xmap * src_cov * xmap.transpose();
    const Eigen::MatrixXd sxy = xmap * src_cov * ymap.transpose();
    const Eigen::MatrixXd syy = ymap * src_cov * ymap.transpose();
    const Eigen::FullPivLU<Eigen::MatrixXd> lu(syy);
    JointPosterior post;
    post.mean = xmean + sxy * lu.solve(yobs - ymean);
    post.cov = sxx - sxy * lu.solve(sxy.transpose());
    return post;
}

/// Samples observations from the model itself.
inline std::vector<Eigen::VectorXd> simulate_observations(const enkmp::LinearGaussianModel& m,
                                                          int steps, unsigned seed)
{
    std::mt19937 rng(seed);
    std::normal_distribution<double> g(0.0, 1.0);
    auto draw = [&](const Eigen::MatrixXd& cov) {
        Eigen::VectorXd z(cov.rows());
        for (Eigen::Index i = 0; i < z.size(); ++i)
            z[i] = g(rng);
        const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cov);
        return Eigen::VectorXd(es.eigenvectors() *
                               es.eigenvalues().cwiseMax(0.0).cwiseSqrt().asDiagonal() * z);
    };
    std::vector<Eigen::VectorXd> ys;
    Eigen::VectorXd x = m.initial_mean + draw(m.initial_cov);
    for (int t = 0; t < steps; ++t) {
        if (t > 0)
            x = m.transition * x + draw(m.process_cov);
        ys.push_back(m.observation * x + draw(m.measurement_cov));
    }
    return ys;
}

/// Reference that keeps the double integrator busy: the target moves away
/// at constant velocity while the system starts at rest.
inline std::vector<Eigen::VectorXd> moving_target(int horizon, double dt, double vx, double vy)
{
    std::vector<Eigen::VectorXd> r;
    for (int t = 0; t <= horizon; ++t) {
        Eigen::VectorXd s(4);
        s << 1.0 + vx * dt * t, -0.5 + vy * dt * t, vx, vy;
        r.push_back(s);
    }
    return r;
}

} // namespace test_support
