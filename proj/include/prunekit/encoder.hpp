#pragma once

// Seeded, frozen toy vision transformer standing in for the pretrained image
// encoder. Weights are random and never trained; the encoder only has to
// produce a deterministic N x d_v token grid and expose dropout-perturbed
// attention logits for Monte Carlo uncertainty.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "prunekit/image.hpp"
#include "prunekit/linalg.hpp"
#include "prunekit/rng.hpp"

namespace prunekit {

struct EncoderConfig {
    int depth = 6;
    int heads = 4;
    int d_v = 768;
    int patch = 16;
    double dropout_rate = 0.1;
    std::vector<int> dropout_layers{3, 4, 5};  // 1-based
    int tap_layer = 5;                         // 1-based
    std::uint64_t seed = 0;
    int mlp_ratio = 2;
    double pos_scale = 0.5;
    double residual_gain = 0.5;
    /// Average the logit taps of every dropout layer instead of reading only
    /// tap_layer. Off by default.
    bool aggregate_taps = false;
    /// Normalize blocks by frame-wide RMS (true) or per-token LayerNorm (false).
    bool frame_norm = true;

    void validate() const {
        if (depth < 1 || heads < 1 || d_v < 1 || patch < 1 || mlp_ratio < 1) {
            throw UsageError("EncoderConfig: depth, heads, d_v, patch and mlp_ratio must be positive");
        }
        if (d_v % heads != 0) throw UsageError("EncoderConfig: d_v must be divisible by heads");
        if (d_v % 4 != 0) throw UsageError("EncoderConfig: d_v must be divisible by 4");
        if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) {
            throw UsageError("EncoderConfig: dropout_rate must lie in [0, 1)");
        }
        for (int l : dropout_layers) {
            if (l < 1 || l > depth) throw UsageError("EncoderConfig: dropout layer out of [1, depth]");
        }
        if (std::find(dropout_layers.begin(), dropout_layers.end(), tap_layer) == dropout_layers.end()) {
            throw UsageError("EncoderConfig: tap_layer must be one of the dropout layers");
        }
    }

    bool drops(int layer) const {
        return std::find(dropout_layers.begin(), dropout_layers.end(), layer) != dropout_layers.end();
    }
    int first_dropout_layer() const { return *std::min_element(dropout_layers.begin(), dropout_layers.end()); }
    int last_tap_layer() const {
        return aggregate_taps ? *std::max_element(dropout_layers.begin(), dropout_layers.end()) : tap_layer;
    }
};

/// Token embeddings of one frame. A dense grid has one row per grid cell in
/// row-major order; a pruned grid keeps the source geometry and lists which
/// cells its rows came from.
struct TokenGrid {
    int grid_h = 0;
    int grid_w = 0;
    int frame_index = 0;
    Matrix data;
    IndexList source_index;

    std::size_t n_tokens() const { return static_cast<std::size_t>(data.rows()); }
    int d_v() const { return static_cast<int>(data.cols()); }
    std::size_t grid_cells() const { return static_cast<std::size_t>(grid_h) * grid_w; }
    bool dense() const { return n_tokens() == grid_cells(); }

    static IndexList identity_index(std::size_t n) {
        IndexList idx(n);
        for (std::size_t i = 0; i < n; ++i) idx[i] = i;
        return idx;
    }
};

/// Per-token scalar summary of the pre-softmax attention logits of one pass.
struct LogitTap {
    Vector s;
};

/// 2-D sinusoidal encoding of grid position (row, col): the first half of
/// the channels encode the row, the second half the column.
inline Vector grid_positional_encoding(double row, double col, int d) {
    Vector pe(d);
    const int half = d / 2;
    const int pairs = half / 2;
    for (int k = 0; k < pairs; ++k) {
        const double freq = std::pow(10000.0, -static_cast<double>(k) / pairs);
        pe[2 * k] = std::sin(row * freq);
        pe[2 * k + 1] = std::cos(row * freq);
        pe[half + 2 * k] = std::sin(col * freq);
        pe[half + 2 * k + 1] = std::cos(col * freq);
    }
    return pe;
}

inline double gelu(double x) { return 0.5 * x * (1.0 + std::erf(x / std::sqrt(2.0))); }

/// tanh-form GELU applied in place; the encoder uses it for speed.
inline void gelu_tanh_inplace(Matrix& m) {
    constexpr double c = 0.7978845608028654;  // sqrt(2 / pi)
    auto a = m.array();
    m = (0.5 * a * (1.0 + (c * (a + 0.044715 * a.cube())).tanh())).matrix();
}

inline void layer_norm_rows(Matrix& m) {
    constexpr double eps = 1e-6;
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        auto row = m.row(i);
        const double mean = row.mean();
        row.array() -= mean;
        const double var = row.squaredNorm() / static_cast<double>(row.size());
        row /= std::sqrt(var + eps);
    }
}

/// Centers each token and divides by the RMS over the whole frame, so tokens
/// keep their relative magnitudes.
inline void frame_norm_rows(Matrix& m) {
    constexpr double eps = 1e-6;
    for (Eigen::Index i = 0; i < m.rows(); ++i) m.row(i).array() -= m.row(i).mean();
    const double var = m.squaredNorm() / static_cast<double>(m.size());
    m /= std::sqrt(var + eps);
}

class Encoder {
public:
    explicit Encoder(EncoderConfig config) : cfg_(std::move(config)) {
        cfg_.validate();
        const int d = cfg_.d_v;
        const int patch_dim = cfg_.patch * cfg_.patch * Frame::channels;
        Rng rng(mix_seed(cfg_.seed, fnv1a("encoder")));
        patch_w_ = gaussian_matrix(rng, patch_dim, d, 1.0 / std::sqrt(static_cast<double>(patch_dim)));
        const double s = 1.0 / std::sqrt(static_cast<double>(d));
        const int hidden = cfg_.mlp_ratio * d;
        layers_.reserve(static_cast<std::size_t>(cfg_.depth));
        for (int l = 0; l < cfg_.depth; ++l) {
            Layer layer;
            layer.wqkv = gaussian_matrix(rng, d, 3 * d, s);
            layer.wo = gaussian_matrix(rng, d, d, s);
            layer.w1 = gaussian_matrix(rng, d, hidden, s);
            layer.w2 = gaussian_matrix(rng, hidden, d, 1.0 / std::sqrt(static_cast<double>(hidden)));
            layers_.push_back(std::move(layer));
        }
    }

    const EncoderConfig& config() const { return cfg_; }

    /// Linear patch embedding plus scaled sinusoidal positions.
    TokenGrid patchify(const Frame& frame) const {
        const int p = cfg_.patch;
        if (frame.height <= 0 || frame.width <= 0 || frame.height % p != 0 || frame.width % p != 0) {
            throw DataError("patchify: frame " + std::to_string(frame.height) + "x" + std::to_string(frame.width) +
                            " is not divisible by patch " + std::to_string(p));
        }
        if (frame.pixels.size() != static_cast<std::size_t>(frame.height) * frame.width * Frame::channels) {
            throw DataError("patchify: pixel buffer size does not match frame dims");
        }
        TokenGrid grid;
        grid.grid_h = frame.height / p;
        grid.grid_w = frame.width / p;
        const int n = grid.grid_h * grid.grid_w;
        const int patch_dim = p * p * Frame::channels;
        Matrix patches(n, patch_dim);
        for (int gy = 0; gy < grid.grid_h; ++gy) {
            for (int gx = 0; gx < grid.grid_w; ++gx) {
                const int t = gy * grid.grid_w + gx;
                int j = 0;
                for (int y = 0; y < p; ++y) {
                    for (int x = 0; x < p; ++x) {
                        for (int c = 0; c < Frame::channels; ++c) {
                            patches(t, j++) = 2.0 * frame.at(gy * p + y, gx * p + x, c) - 1.0;
                        }
                    }
                }
            }
        }
        grid.data = patches * patch_w_;
        for (int gy = 0; gy < grid.grid_h; ++gy) {
            for (int gx = 0; gx < grid.grid_w; ++gx) {
                grid.data.row(gy * grid.grid_w + gx) +=
                    cfg_.pos_scale * grid_positional_encoding(gy, gx, cfg_.d_v).transpose();
            }
        }
        grid.source_index = TokenGrid::identity_index(static_cast<std::size_t>(n));
        return grid;
    }

    /// Deterministic forward pass (dropout disabled). When prefix is set it
    /// receives the residual stream entering the first dropout layer, the same
    /// value stochastic_prefix would return.
    TokenGrid encode(const Frame& frame, Matrix* prefix = nullptr) const {
        TokenGrid grid = patchify(frame);
        const int split = cfg_.first_dropout_layer() - 1;
        run_layers(grid.data, 1, split, nullptr, nullptr);
        if (prefix != nullptr) *prefix = grid.data;
        run_layers(grid.data, split + 1, cfg_.depth, nullptr, nullptr);
        require_finite(grid.data, "encode");
        return grid;
    }

    /// One Monte Carlo pass: inverted dropout in the configured layers, seeded
    /// by pass_seed. Reusing a pass seed reproduces the pass exactly.
    std::pair<TokenGrid, LogitTap> encode_stochastic(const Frame& frame, std::uint64_t pass_seed) const {
        TokenGrid grid = patchify(frame);
        Rng rng(pass_rng_seed(pass_seed));
        LogitTap tap{Vector::Zero(grid.data.rows())};
        run_layers(grid.data, 1, cfg_.depth, &rng, &tap);
        require_finite(grid.data, "encode_stochastic");
        return {std::move(grid), std::move(tap)};
    }

    /// Residual stream entering the first dropout layer. Everything before
    /// that point is identical across Monte Carlo passes.
    Matrix stochastic_prefix(const Frame& frame) const {
        TokenGrid grid = patchify(frame);
        run_layers(grid.data, 1, cfg_.first_dropout_layer() - 1, nullptr, nullptr);
        return std::move(grid.data);
    }

    /// Logit tap of one pass, resumed from a shared prefix and stopped right
    /// after the last tapped attention logits. Equal to the tap returned by
    /// encode_stochastic for the same pass seed.
    LogitTap tap_from_prefix(const Matrix& prefix, std::uint64_t pass_seed) const {
        Matrix x = prefix;
        Rng rng(pass_rng_seed(pass_seed));
        LogitTap tap{Vector::Zero(x.rows())};
        run_layers(x, cfg_.first_dropout_layer(), cfg_.last_tap_layer(), &rng, &tap, true);
        require_finite(tap.s, "tap_from_prefix");
        return tap;
    }

    /// Post-softmax attention of one head at a 1-based layer, deterministic pass.
    Matrix attention_probabilities(const Frame& frame, int layer, int head) const {
        if (layer < 1 || layer > cfg_.depth || head < 0 || head >= cfg_.heads) {
            throw UsageError("attention_probabilities: layer or head out of range");
        }
        TokenGrid grid = patchify(frame);
        run_layers(grid.data, 1, layer - 1, nullptr, nullptr);
        Matrix h = grid.data;
        normalize(h);
        const Matrix qkv = h * layers_[static_cast<std::size_t>(layer - 1)].wqkv;
        const int dh = cfg_.d_v / cfg_.heads;
        const Matrix q = qkv.middleCols(head * dh, dh);
        const Matrix k = qkv.middleCols(cfg_.d_v + head * dh, dh);
        Matrix logits = (q * k.transpose()) / std::sqrt(static_cast<double>(dh));
        softmax_rows(logits);
        return logits;
    }

private:
    struct Layer {
        Matrix wqkv;
        Matrix wo;
        Matrix w1;
        Matrix w2;
    };

    std::uint64_t pass_rng_seed(std::uint64_t pass_seed) const {
        return mix_seed(cfg_.seed ^ fnv1a("mc-dropout"), pass_seed);
    }

    void normalize(Matrix& m) const {
        if (cfg_.frame_norm) {
            frame_norm_rows(m);
        } else {
            layer_norm_rows(m);
        }
    }

    static void softmax_rows(Matrix& m) {
        for (Eigen::Index i = 0; i < m.rows(); ++i) {
            auto row = m.row(i);
            row.array() -= row.maxCoeff();
            row = row.array().exp().matrix();
            row /= row.sum();
        }
    }

    // Inverted dropout. Keep decisions use 16-bit slices of each 64-bit draw,
    // so the rate is quantized to 1/65536.
    void dropout(Matrix& m, Rng& rng) const {
        const double p = cfg_.dropout_rate;
        if (p <= 0.0) return;
        const auto threshold = static_cast<std::uint32_t>(std::lround(p * 65536.0));
        const double scale = 1.0 / (1.0 - p);
        double* v = m.data();
        const Eigen::Index n = m.size();
        Eigen::Index i = 0;
        while (i < n) {
            std::uint64_t bits = rng();
            for (int slice = 0; slice < 4 && i < n; ++slice, ++i) {
                const auto u = static_cast<std::uint32_t>(bits & 0xffffu);
                bits >>= 16;
                v[i] = u < threshold ? 0.0 : v[i] * scale;
            }
        }
    }

    // Per-token mean over heads and keys of the pre-softmax logits, written as
    // q_i . mean_j(k_j) / sqrt(dh) so the tap-only path does not need the
    // N x N logit matrix.
    Vector tap_logits(const Matrix& qkv) const {
        const int d = cfg_.d_v;
        const int dh = d / cfg_.heads;
        Vector s = Vector::Zero(qkv.rows());
        for (int h = 0; h < cfg_.heads; ++h) {
            const Vector kbar = qkv.middleCols(d + h * dh, dh).colwise().mean().transpose();
            s += qkv.middleCols(h * dh, dh) * kbar;
        }
        return s / (cfg_.heads * std::sqrt(static_cast<double>(dh)));
    }

    // Runs 1-based layers [first, last] in place on x. With rng set, applies
    // dropout in configured layers; with tap set, accumulates tapped logits.
    // stop_after_tap ends the final layer once its logits are tapped.
    void run_layers(Matrix& x, int first, int last, Rng* rng, LogitTap* tap, bool stop_after_tap = false) const {
        const int d = cfg_.d_v;
        const int dh = d / cfg_.heads;
        const double inv_sqrt_dh = 1.0 / std::sqrt(static_cast<double>(dh));
        const int n_taps = cfg_.aggregate_taps ? static_cast<int>(cfg_.dropout_layers.size()) : 1;
        for (int l = first; l <= last; ++l) {
            const Layer& layer = layers_[static_cast<std::size_t>(l - 1)];
            const bool drop = rng != nullptr && cfg_.drops(l);

            Matrix h = x;
            normalize(h);
            if (drop) dropout(h, *rng);
            const Matrix qkv = h * layer.wqkv;

            const bool tapped = tap != nullptr && (cfg_.aggregate_taps ? cfg_.drops(l) : l == cfg_.tap_layer);
            if (tapped) tap->s += tap_logits(qkv) / n_taps;
            if (stop_after_tap && l == last) return;

            Matrix attn_out(x.rows(), d);
            for (int hd = 0; hd < cfg_.heads; ++hd) {
                Matrix logits = (qkv.middleCols(hd * dh, dh) * qkv.middleCols(d + hd * dh, dh).transpose()) *
                                inv_sqrt_dh;
                softmax_rows(logits);
                attn_out.middleCols(hd * dh, dh).noalias() = logits * qkv.middleCols(2 * d + hd * dh, dh);
            }
            x.noalias() += cfg_.residual_gain * (attn_out * layer.wo);

            Matrix h2 = x;
            normalize(h2);
            Matrix a = h2 * layer.w1;
            gelu_tanh_inplace(a);
            if (drop) dropout(a, *rng);
            x.noalias() += cfg_.residual_gain * (a * layer.w2);
        }
    }

    EncoderConfig cfg_;
    Matrix patch_w_;
    std::vector<Layer> layers_;
};

inline TokenGrid patchify(const Frame& frame, const EncoderConfig& config) { return Encoder(config).patchify(frame); }
inline TokenGrid encode(const Frame& frame, const EncoderConfig& config) { return Encoder(config).encode(frame); }
inline std::pair<TokenGrid, LogitTap> encode_stochastic(const Frame& frame, const EncoderConfig& config,
                                                        std::uint64_t pass_seed) {
    return Encoder(config).encode_stochastic(frame, pass_seed);
}

}  // namespace prunekit
