#include <gtest/gtest.h>

#include <random>

#include "oracles.hpp"
#include "prunekit/router.hpp"

using namespace prunekit;

namespace {

TokenGrid grid_of(const Matrix& x) {
    TokenGrid g;
    g.grid_h = 14;
    g.grid_w = static_cast<int>(x.rows()) / 14;
    g.data = x;
    g.source_index = TokenGrid::identity_index(static_cast<std::size_t>(x.rows()));
    return g;
}

}  // namespace

TEST(Fuse, LayoutAndWidth) {
    std::mt19937_64 rng(1);
    const auto x = grid_of(oracle::random_matrix(rng, 196, 768));
    const AlignedText zero_text{Vector::Zero(768)};
    const UncertaintyFeatures zero_u{Matrix::Zero(196, 768)};
    const auto f = fuse(x, zero_text, zero_u);
    EXPECT_EQ(f.h.cols(), 2304);
    EXPECT_EQ(f.h.leftCols(768), x.data);
    EXPECT_EQ(f.h.rightCols(1536).norm(), 0.0);
    EXPECT_THROW(fuse(x, AlignedText{Vector::Zero(5)}, zero_u), DataError);
}

TEST(Score, ConstantLogitsGiveUniform) {
    std::mt19937_64 rng(2);
    auto w = RouterWeights::init(12, 8, 0);
    w.w2.setZero();
    const Vector a = score({oracle::random_matrix(rng, 10, 12)}, w);
    for (Eigen::Index i = 0; i < a.size(); ++i) EXPECT_DOUBLE_EQ(a[i], 0.1);
}

TEST(Score, DuplicateRowsScoreEqually) {
    std::mt19937_64 rng(3);
    Matrix h = oracle::random_matrix(rng, 6, 12);
    h.row(4) = h.row(1);
    const Vector a = score({h}, RouterWeights::init(12, 8, 5));
    EXPECT_EQ(a[1], a[4]);
}

TEST(Score, MatchesScalarLoopForward) {
    std::mt19937_64 rng(4);
    for (int inst = 0; inst < 5; ++inst) {
        const Matrix h = oracle::random_matrix(rng, 20, 24);
        auto w = RouterWeights::init(24, 16, inst);
        w.b1 = oracle::random_matrix(rng, 16, 1).col(0);
        w.b2 = 0.3;
        const Vector s = router_logits(h, w);
        Vector loop(20);
        for (Eigen::Index i = 0; i < 20; ++i) loop[i] = oracle::router_logit_loop(h, i, w);
        EXPECT_LE((s - loop).cwiseAbs().maxCoeff(), 1e-9);
        const Vector expect = (loop.array() - loop.maxCoeff()).exp();
        EXPECT_LE((score({h}, w) - expect / expect.sum()).cwiseAbs().maxCoeff(), 1e-9);
    }
}

TEST(Prune, BudgetsAndOracle) {
    std::mt19937_64 rng(5);
    const auto x = grid_of(oracle::random_matrix(rng, 196, 8));
    const Vector alpha = oracle::random_matrix(rng, 196, 1).col(0);
    for (auto [rho, k] : {std::pair{0.3, 59u}, {0.5, 98u}, {0.1, 20u}}) {
        PruneConfig c;
        c.retention_ratio = rho;
        const auto r = prune(x, alpha, c);
        EXPECT_EQ(r.retained.size(), k);
        EXPECT_EQ(r.retained, oracle::topk_full_sort(alpha, k));
        EXPECT_EQ(r.pruned.source_index, r.retained);
        for (std::size_t i = 0; i < k; ++i) {
            EXPECT_EQ(r.pruned.data.row(static_cast<Eigen::Index>(i)), x.data.row(static_cast<Eigen::Index>(r.retained[i])));
        }
    }
    PruneConfig full;
    full.retention_ratio = 1.0;
    const auto r = prune(x, alpha, full);
    EXPECT_EQ(r.retained, TokenGrid::identity_index(196));
    EXPECT_EQ(r.pruned.data, x.data);
    full.retention_ratio = 0.0;
    EXPECT_THROW(full.validate(), UsageError);
}

TEST(Prune, RetentionRules) {
    PruneConfig c;
    c.retention_ratio = 0.3;
    EXPECT_EQ(c.budget(196), 59u);
    c.rule = RetentionRule::floor;
    EXPECT_EQ(c.budget(196), 58u);
    c.rule = RetentionRule::round;
    EXPECT_EQ(c.budget(196), 59u);
    c.retention_ratio = 0.001;
    EXPECT_EQ(c.budget(196), 1u);
}

TEST(Heuristic, ParallelTokenWinsAndRecomputes) {
    Matrix x = Matrix::Zero(4, 3);
    x(0, 1) = 1.0;
    x(1, 1) = 2.0;
    x(2, 2) = 1.0;
    x(3, 0) = 5.0;
    const AlignedText t{(Vector(3) << 1.0, 0.0, 0.0).finished()};
    const TokenGrid g = [&] {
        TokenGrid r;
        r.grid_h = 2;
        r.grid_w = 2;
        r.data = x;
        return r;
    }();
    const Vector a = heuristic_score(g, t, Vector::Zero(4), 0.0);
    Eigen::Index best;
    a.maxCoeff(&best);
    EXPECT_EQ(best, 3);
    EXPECT_DOUBLE_EQ(a[0], a[1]);

    Matrix orth = Matrix::Zero(4, 3);
    orth.col(1) = Vector::Ones(4);
    TokenGrid go = g;
    go.data = orth;
    const Vector u = heuristic_score(go, t, Vector::Zero(4), 0.0);
    for (int i = 0; i < 4; ++i) EXPECT_DOUBLE_EQ(u[i], 0.25);

    std::mt19937_64 rng(6);
    TokenGrid gr = g;
    gr.data = oracle::random_matrix(rng, 4, 3);
    const Vector sigma = (Vector(4) << 0.0, 1.0, 0.3, 0.7).finished();
    const Vector got = heuristic_score(gr, t, sigma, 0.5);
    Vector raw(4);
    for (int i = 0; i < 4; ++i) raw[i] = gr.data(i, 0) / gr.data.row(i).norm() + 0.5 * sigma[i];
    const Vector e = raw.array().exp();
    EXPECT_LE((got - e / e.sum()).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(TokenLabels, CoverageThreshold) {
    BinaryMap m(32, 32);
    for (int y = 0; y < 16; ++y) {
        for (int x = 0; x < 8; ++x) m.at(y, x) = 1;  // half of cell 0
    }
    for (int y = 16; y < 32; ++y) {
        for (int x = 16; x < 32; ++x) m.at(y, x) = 1;  // all of cell 3
    }
    EXPECT_EQ(token_labels(m, 16, 0.5), (Vector(4) << 1, 0, 0, 1).finished());
    EXPECT_EQ(token_labels(m, 16, 0.6), (Vector(4) << 0, 0, 0, 1).finished());
}

TEST(RouterGradient, MatchesCentralDifferences) {
    std::mt19937_64 rng(7);
    for (int inst = 0; inst < 10; ++inst) {
        const Matrix h = oracle::random_matrix(rng, 16, 12);
        Vector y(16);
        for (Eigen::Index i = 0; i < 16; ++i) y[i] = (rng() & 1) ? 1.0 : 0.0;
        auto w = RouterWeights::init(12, 8, inst);
        w.b1 = 0.1 * oracle::random_matrix(rng, 8, 1).col(0);
        EXPECT_LE(oracle::router_fd_worst(w, h, y, 5, rng), 1e-4) << "instance " << inst;
    }
}

TEST(RouterTraining, SeparableToy) {
    std::mt19937_64 rng(8);
    LabeledTokens ex;
    ex.h = oracle::random_matrix(rng, 200, 6);
    ex.labels.resize(200);
    for (Eigen::Index i = 0; i < 200; ++i) {
        const bool pos = i % 2 == 0;
        ex.labels[i] = pos ? 1.0 : 0.0;
        ex.h(i, 2) = (pos ? 1.0 : -1.0) + 0.3 * ex.h(i, 2);
    }
    RouterTrainConfig c;
    c.hidden = 16;
    c.epochs = 200;
    c.batch_size = 32;
    c.learning_rate = 0.05;
    const auto res = train_router(std::span<const LabeledTokens>(&ex, 1), c);
    const Vector s = router_logits(ex.h, res.weights);
    int correct = 0;
    for (Eigen::Index i = 0; i < 200; ++i) correct += (s[i] > 0) == (ex.labels[i] > 0.5);
    EXPECT_GE(correct / 200.0, 0.99);
    EXPECT_LT(res.final_loss, res.epoch_loss.front() + 1e-12);
}

TEST(RouterTraining, ZeroEpochsReturnsInit) {
    std::mt19937_64 rng(9);
    LabeledTokens ex{oracle::random_matrix(rng, 10, 6), Vector::Zero(10)};
    RouterTrainConfig c;
    c.hidden = 8;
    c.epochs = 0;
    c.seed = 4;
    const auto res = train_router(std::span<const LabeledTokens>(&ex, 1), c);
    EXPECT_EQ(res.weights, RouterWeights::init(6, 8, 4));
    EXPECT_TRUE(res.epoch_loss.empty());
}

TEST(RouterTraining, RejectsBadLabels) {
    LabeledTokens ex{Matrix::Ones(3, 2), (Vector(3) << 0, 0.5, 1).finished()};
    EXPECT_THROW(train_router(std::span<const LabeledTokens>(&ex, 1), RouterTrainConfig{}), DataError);
}
