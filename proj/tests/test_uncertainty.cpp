#include <gtest/gtest.h>

#include <random>
#include <vector>

#include "oracles.hpp"
#include "prunekit/scene.hpp"
#include "prunekit/uncertainty.hpp"

using namespace prunekit;

namespace {

TokenGrid grid_of(const Matrix& x) {
    TokenGrid g;
    g.grid_h = 1;
    g.grid_w = static_cast<int>(x.rows());
    g.data = x;
    g.source_index = TokenGrid::identity_index(static_cast<std::size_t>(x.rows()));
    return g;
}

}  // namespace

TEST(Uncertainty, HandBuiltTaps) {
    Vector a(2), b(2);
    a << 1, 0;
    b << 3, 0;
    const std::vector<LogitTap> taps{{a}, {b}};
    const auto u = uncertainty_from_taps(taps);
    EXPECT_EQ(u.raw_variance, (Vector(2) << 1, 0).finished());
    EXPECT_EQ(u.sigma_norm, (Vector(2) << 1, 0).finished());
    EXPECT_THROW(uncertainty_from_taps(std::span<const LogitTap>(taps.data(), 1)), UsageError);
}

TEST(Uncertainty, ZeroDropoutGivesZero) {
    EncoderConfig c;
    c.d_v = 64;
    c.dropout_rate = 0.0;
    const auto video = generate_scene([] {
        SceneConfig s;
        s.n_frames = 1;
        return s;
    }());
    for (int passes : {2, 5}) {
        const auto u = mc_uncertainty(video.frames[0], c, passes, 100);
        EXPECT_EQ(u.sigma_norm, Vector::Zero(196));
    }
}

TEST(Uncertainty, NoiseBandExceedsFlatRegion) {
    EncoderConfig c;
    c.d_v = 128;
    int wins = 0;
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        SceneConfig s;
        s.n_frames = 1;
        s.seed = seed;
        const auto video = generate_scene(s);
        c.seed = seed;
        const auto u = mc_uncertainty(video.frames[0], c, 5, 1000 + seed);
        const auto [band, flat] = oracle::band_versus_flat(video, u.sigma_norm, 16);
        wins += band > flat;
    }
    EXPECT_GE(wins, 8);
}

TEST(UncertaintyProjection, ZeroTargetAndRecovery) {
    std::mt19937_64 rng(29);
    const Matrix X = oracle::random_matrix(rng, 6, 3);
    EXPECT_EQ(fit_uncertainty_projection(grid_of(X), Vector::Zero(6)).w_u, Vector::Zero(3));
    const Vector w_star = (Vector(3) << 0.5, -1.0, 2.0).finished();
    const auto proj = fit_uncertainty_projection(grid_of(X), X * w_star, 1e-12);
    EXPECT_LE((proj.w_u - w_star).cwiseAbs().maxCoeff(), 1e-6);
    EXPECT_THROW(fit_uncertainty_projection(grid_of(X), Vector::Zero(5)), DataError);
}

TEST(UncertaintyProjection, WideDesignAgainstGradientDescent) {
    std::mt19937_64 rng(31);
    const Matrix X = oracle::random_matrix(rng, 196, 768);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    Vector sigma(196);
    for (auto& v : sigma) v = u(rng);
    const auto proj = fit_uncertainty_projection(grid_of(X), sigma, 1e-3);
    const Matrix target = sigma;
    const Matrix G = oracle::ridge_gd(X, target, 1e-3, 20000);
    const double fw = ridge_objective(X, target, proj.w_u, 1e-3);
    const double fg = ridge_objective(X, target, G, 1e-3);
    EXPECT_LE((fw - fg) / fg, 1e-6);
}

TEST(UncertaintyFeatures, OuterProductAndRankOne) {
    const Vector sigma = (Vector(2) << 1.0, 0.5).finished();
    const UncertaintyProjection proj{(Vector(2) << 2.0, 4.0).finished(), 1e-3};
    const Matrix u = uncertainty_features(sigma, proj).u;
    EXPECT_EQ(u, (Matrix(2, 2) << 2, 4, 1, 2).finished());

    std::mt19937_64 rng(37);
    Vector s = oracle::random_matrix(rng, 40, 1).col(0).cwiseAbs();
    s[3] = 0.0;
    const UncertaintyProjection p{oracle::random_matrix(rng, 16, 1).col(0), 1e-3};
    const Matrix U = uncertainty_features(s, p).u;
    EXPECT_EQ(U.row(3).norm(), 0.0);
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(U);
    const auto sv = svd.singularValues();
    EXPECT_LE(sv[1], 1e-9 * sv[0]);
}
