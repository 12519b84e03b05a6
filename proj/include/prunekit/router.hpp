#pragma once

// Token fusion, MLP scoring, top-k pruning and router training.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "prunekit/encoder.hpp"
#include "prunekit/image.hpp"
#include "prunekit/linalg.hpp"
#include "prunekit/rng.hpp"
#include "prunekit/semantic.hpp"
#include "prunekit/uncertainty.hpp"

namespace prunekit {

inline constexpr int kRouterHidden = 256;
inline constexpr double kDefaultRetention = 0.30;

/// Row i is [X_i ; e'_text ; U_i].
struct FusedTokens {
    Matrix h;
};

inline FusedTokens fuse(const TokenGrid& x_vit, const AlignedText& text, const UncertaintyFeatures& unc) {
    const Eigen::Index n = x_vit.data.rows();
    const Eigen::Index d = x_vit.data.cols();
    if (text.e_text_aligned.size() != d) {
        throw DataError("fuse: aligned text has width " + std::to_string(text.e_text_aligned.size()) +
                        ", tokens have " + std::to_string(d));
    }
    if (unc.u.rows() != n || unc.u.cols() != d) {
        throw DataError("fuse: uncertainty features are " + shape_str(unc.u.rows(), unc.u.cols()) +
                        ", tokens are " + shape_str(n, d));
    }
    FusedTokens out{Matrix(n, 3 * d)};
    out.h.leftCols(d) = x_vit.data;
    out.h.middleCols(d, d).rowwise() = text.e_text_aligned.transpose();
    out.h.rightCols(d) = unc.u;
    return out;
}

struct RouterWeights {
    Matrix w1;  // input x hidden
    Vector b1;
    Matrix w2;  // hidden x 1
    double b2 = 0.0;

    int input_dim() const { return static_cast<int>(w1.rows()); }
    int hidden_dim() const { return static_cast<int>(w1.cols()); }

    /// Uniform in +-sqrt(6 / (fan_in + fan_out)), zero biases.
    static RouterWeights init(int input_dim, int hidden, std::uint64_t seed) {
        if (input_dim < 1 || hidden < 1) throw UsageError("RouterWeights: dims must be positive");
        Rng rng(mix_seed(seed, fnv1a("router-init")));
        auto uniform = [&](int rows, int cols) {
            const double bound = std::sqrt(6.0 / (rows + cols));
            std::uniform_real_distribution<double> u(-bound, bound);
            Matrix m(rows, cols);
            for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = u(rng);
            return m;
        };
        RouterWeights w;
        w.w1 = uniform(input_dim, hidden);
        w.b1 = Vector::Zero(hidden);
        w.w2 = uniform(hidden, 1);
        w.b2 = 0.0;
        return w;
    }

    bool operator==(const RouterWeights& o) const {
        return w1 == o.w1 && b1 == o.b1 && w2 == o.w2 && b2 == o.b2;
    }
};

inline double gelu_grad(double x) {
    constexpr double inv_sqrt_2pi = 0.3989422804014327;
    return 0.5 * (1.0 + std::erf(x / std::sqrt(2.0))) + x * inv_sqrt_2pi * std::exp(-0.5 * x * x);
}

/// Raw router logits s = W2^T GELU(W1^T h + b1) + b2 for every row of h.
inline Vector router_logits(const Matrix& h, const RouterWeights& w) {
    if (h.cols() != w.w1.rows()) {
        throw DataError("router: fused width " + std::to_string(h.cols()) + " does not match weights input " +
                        std::to_string(w.w1.rows()));
    }
    Matrix z = h * w.w1;
    z.rowwise() += w.b1.transpose();
    z = z.unaryExpr([](double v) { return gelu(v); });
    Vector s = z * w.w2.col(0);
    s.array() += w.b2;
    require_finite(s, "router logits");
    return s;
}

/// Softmax-normalized token scores alpha.
inline Vector score(const FusedTokens& fused, const RouterWeights& w) { return softmax(router_logits(fused.h, w)); }

enum class RetentionRule { ceil, floor, round };

inline RetentionRule parse_retention_rule(const std::string& s) {
    if (s == "ceil") return RetentionRule::ceil;
    if (s == "floor") return RetentionRule::floor;
    if (s == "round") return RetentionRule::round;
    throw UsageError("unknown retention rule '" + s + "' (expected ceil|floor|round)");
}

inline const char* to_string(RetentionRule r) {
    switch (r) {
        case RetentionRule::ceil: return "ceil";
        case RetentionRule::floor: return "floor";
        case RetentionRule::round: return "round";
    }
    return "?";
}

struct PruneConfig {
    double retention_ratio = kDefaultRetention;
    RetentionRule rule = RetentionRule::ceil;

    void validate() const {
        if (!(retention_ratio > 0.0 && retention_ratio <= 1.0)) {
            throw UsageError("retention ratio must lie in (0, 1], got " + std::to_string(retention_ratio));
        }
    }

    /// Token budget for n tokens, at least 1. The 1e-9 slack keeps products
    /// that are integers in exact arithmetic (0.5 * 196) from rounding up.
    std::size_t budget(std::size_t n) const {
        validate();
        const double exact = retention_ratio * static_cast<double>(n);
        double k = 0.0;
        switch (rule) {
            case RetentionRule::ceil: k = std::ceil(exact - 1e-9); break;
            case RetentionRule::floor: k = std::floor(exact + 1e-9); break;
            case RetentionRule::round: k = std::round(exact); break;
        }
        return std::clamp<std::size_t>(static_cast<std::size_t>(k), 1, n);
    }
};

struct PruneResult {
    IndexList retained;
    TokenGrid pruned;
};

/// Keeps the top-k tokens by alpha. The pruned grid preserves token order and
/// records each row's source cell.
inline PruneResult prune(const TokenGrid& x_vit, const Vector& alpha, const PruneConfig& cfg) {
    if (alpha.size() != static_cast<Eigen::Index>(x_vit.n_tokens())) {
        throw DataError("prune: " + std::to_string(alpha.size()) + " scores for " + std::to_string(x_vit.n_tokens()) +
                        " tokens");
    }
    PruneResult out;
    out.retained = top_k(alpha, cfg.budget(x_vit.n_tokens()));
    out.pruned.grid_h = x_vit.grid_h;
    out.pruned.grid_w = x_vit.grid_w;
    out.pruned.frame_index = x_vit.frame_index;
    out.pruned.data.resize(static_cast<Eigen::Index>(out.retained.size()), x_vit.data.cols());
    out.pruned.source_index.reserve(out.retained.size());
    for (std::size_t r = 0; r < out.retained.size(); ++r) {
        const std::size_t i = out.retained[r];
        out.pruned.data.row(static_cast<Eigen::Index>(r)) = x_vit.data.row(static_cast<Eigen::Index>(i));
        out.pruned.source_index.push_back(x_vit.source_index.empty() ? i : x_vit.source_index[i]);
    }
    return out;
}

/// Training-free fallback: softmax(cos(X_i, e'_text) + beta * sigma_i).
inline Vector heuristic_score(const TokenGrid& x_vit, const AlignedText& text, const Vector& sigma_norm,
                              double beta = 0.5) {
    if (!(beta >= 0.0)) throw UsageError("heuristic_score: beta must be nonnegative");
    const Eigen::Index n = x_vit.data.rows();
    if (sigma_norm.size() != n) throw DataError("heuristic_score: uncertainty length mismatch");
    if (text.e_text_aligned.size() != x_vit.data.cols()) throw DataError("heuristic_score: text width mismatch");
    const double en = text.e_text_aligned.norm();
    Vector raw(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const double xn = x_vit.data.row(i).norm();
        const double cos = (xn > 0.0 && en > 0.0) ? x_vit.data.row(i).dot(text.e_text_aligned) / (xn * en) : 0.0;
        raw[i] = cos + beta * sigma_norm[i];
    }
    return softmax(raw);
}

// --- training -------------------------------------------------------------

/// Per-cell labels: 1 when the fraction of the cell covered by the mask is at
/// least threshold.
inline Vector token_labels(const BinaryMap& mask, int patch, double threshold) {
    if (patch < 1 || mask.height % patch != 0 || mask.width % patch != 0) {
        throw DataError("token_labels: mask dims not divisible by patch");
    }
    const int gh = mask.height / patch;
    const int gw = mask.width / patch;
    Vector y(gh * gw);
    for (int gy = 0; gy < gh; ++gy) {
        for (int gx = 0; gx < gw; ++gx) {
            int c = 0;
            for (int yy = 0; yy < patch; ++yy) {
                for (int xx = 0; xx < patch; ++xx) c += mask.at(gy * patch + yy, gx * patch + xx);
            }
            y[gy * gw + gx] = static_cast<double>(c) / (patch * patch) >= threshold ? 1.0 : 0.0;
        }
    }
    return y;
}

struct LabeledTokens {
    Matrix h;       // fused tokens, one row per token
    Vector labels;  // 0 or 1 per token
};

struct RouterGradient {
    Matrix w1;
    Vector b1;
    Matrix w2;
    double b2 = 0.0;
};

/// Mean binary cross-entropy of sigmoid(s) against labels; fills grad when set.
inline double router_loss(const RouterWeights& w, const Matrix& h, const Vector& labels,
                          RouterGradient* grad = nullptr) {
    const Eigen::Index n = h.rows();
    if (labels.size() != n || n == 0) throw DataError("router_loss: labels do not match tokens");
    Matrix z = h * w.w1;
    z.rowwise() += w.b1.transpose();
    const Matrix a = z.unaryExpr([](double v) { return gelu(v); });
    Vector s = a * w.w2.col(0);
    s.array() += w.b2;

    double loss = 0.0;
    Vector ds(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        // softplus(s) - y s, evaluated without overflow.
        const double si = s[i];
        const double softplus = si > 0 ? si + std::log1p(std::exp(-si)) : std::log1p(std::exp(si));
        loss += softplus - labels[i] * si;
        const double sig = 1.0 / (1.0 + std::exp(-si));
        ds[i] = (sig - labels[i]) / static_cast<double>(n);
    }
    loss /= static_cast<double>(n);

    if (grad != nullptr) {
        grad->w2 = a.transpose() * ds;
        grad->b2 = ds.sum();
        Matrix dz = ds * w.w2.col(0).transpose();
        dz.array() *= z.unaryExpr([](double v) { return gelu_grad(v); }).array();
        grad->w1 = h.transpose() * dz;
        grad->b1 = dz.colwise().sum().transpose();
    }
    return loss;
}

struct RouterTrainConfig {
    double learning_rate = 0.05;
    double momentum = 0.9;
    int epochs = 30;
    int batch_size = 256;
    double label_overlap_threshold = 0.5;
    int hidden = kRouterHidden;
    std::uint64_t seed = 0;

    void validate() const {
        if (!(learning_rate > 0.0) || epochs < 0 || batch_size < 1 || hidden < 1 ||
            !(momentum >= 0.0 && momentum < 1.0) ||
            !(label_overlap_threshold > 0.0 && label_overlap_threshold <= 1.0)) {
            throw UsageError("RouterTrainConfig: hyperparameters out of range");
        }
    }
};

struct RouterTrainResult {
    RouterWeights weights;
    double final_loss = 0.0;
    std::vector<double> epoch_loss;  // full-dataset loss after each epoch
};

/// Mini-batch gradient descent with heavy-ball momentum on the mean BCE over
/// all tokens of all examples. Deterministic given cfg.seed.
inline RouterTrainResult train_router(std::span<const LabeledTokens> data, const RouterTrainConfig& cfg) {
    cfg.validate();
    if (data.empty()) throw DataError("train_router: empty dataset");
    const Eigen::Index width = data.front().h.cols();
    Eigen::Index total = 0;
    for (const auto& ex : data) {
        if (ex.h.cols() != width || ex.labels.size() != ex.h.rows()) {
            throw DataError("train_router: inconsistent example shapes");
        }
        for (Eigen::Index i = 0; i < ex.labels.size(); ++i) {
            if (ex.labels[i] != 0.0 && ex.labels[i] != 1.0) throw DataError("train_router: labels must be 0 or 1");
        }
        total += ex.h.rows();
    }
    if (total == 0) throw DataError("train_router: no tokens");

    Matrix all_h(total, width);
    Vector all_y(total);
    Eigen::Index row = 0;
    for (const auto& ex : data) {
        all_h.middleRows(row, ex.h.rows()) = ex.h;
        all_y.segment(row, ex.h.rows()) = ex.labels;
        row += ex.h.rows();
    }

    RouterTrainResult out;
    out.weights = RouterWeights::init(static_cast<int>(width), cfg.hidden, cfg.seed);
    RouterWeights& w = out.weights;
    RouterGradient vel{Matrix::Zero(w.w1.rows(), w.w1.cols()), Vector::Zero(w.b1.size()),
                       Matrix::Zero(w.w2.rows(), 1), 0.0};

    Rng rng(mix_seed(cfg.seed, fnv1a("router-shuffle")));
    std::vector<Eigen::Index> order(static_cast<std::size_t>(total));
    std::iota(order.begin(), order.end(), Eigen::Index{0});

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        for (Eigen::Index start = 0; start < total; start += cfg.batch_size) {
            const Eigen::Index len = std::min<Eigen::Index>(cfg.batch_size, total - start);
            Matrix bh(len, width);
            Vector by(len);
            for (Eigen::Index r = 0; r < len; ++r) {
                const Eigen::Index src = order[static_cast<std::size_t>(start + r)];
                bh.row(r) = all_h.row(src);
                by[r] = all_y[src];
            }
            RouterGradient g;
            router_loss(w, bh, by, &g);
            vel.w1 = cfg.momentum * vel.w1 - cfg.learning_rate * g.w1;
            vel.b1 = cfg.momentum * vel.b1 - cfg.learning_rate * g.b1;
            vel.w2 = cfg.momentum * vel.w2 - cfg.learning_rate * g.w2;
            vel.b2 = cfg.momentum * vel.b2 - cfg.learning_rate * g.b2;
            w.w1 += vel.w1;
            w.b1 += vel.b1;
            w.w2 += vel.w2;
            w.b2 += vel.b2;
        }
        const double loss = router_loss(w, all_h, all_y);
        if (!std::isfinite(loss)) {
            throw NumericError("train_router: loss diverged at epoch " + std::to_string(epoch + 1));
        }
        out.epoch_loss.push_back(loss);
    }
    out.final_loss = cfg.epochs > 0 ? out.epoch_loss.back() : router_loss(w, all_h, all_y);
    return out;
}

}  // namespace prunekit
