#pragma once

// Downstream stand-in for a memory-based segmenter: click prompts, a bounded
// bank of pruned token grids, a one-block cross-attention decoder and the
// FLOP / byte ledger.

#include <chrono>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "prunekit/distance.hpp"
#include "prunekit/encoder.hpp"
#include "prunekit/error.hpp"
#include "prunekit/image.hpp"
#include "prunekit/linalg.hpp"
#include "prunekit/rng.hpp"

namespace prunekit {

inline constexpr std::size_t kDefaultBankCapacity = 7;

enum class Polarity { positive, negative };

inline const char* to_string(Polarity p) { return p == Polarity::positive ? "positive" : "negative"; }

struct ClickPrompt {
    int x = 0;
    int y = 0;
    Polarity polarity = Polarity::positive;
    int frame_index = 0;

    bool operator==(const ClickPrompt&) const = default;
};

/// Foreground pixel farthest from the background (image outside counts as
/// background); ties go to the first pixel in row-major order.
inline ClickPrompt representative_click(const BinaryMap& mask, int frame_index = 0,
                                        Polarity polarity = Polarity::positive) {
    if (mask.data.empty() || mask.empty()) throw DataError("representative_click: mask has no foreground");
    const auto d2 = foreground_edt_squared(mask);
    std::size_t best = 0;
    double best_d = -1.0;
    for (std::size_t i = 0; i < d2.size(); ++i) {
        if (mask.data[i] && d2[i] > best_d) {
            best_d = d2[i];
            best = i;
        }
    }
    return {static_cast<int>(best % static_cast<std::size_t>(mask.width)),
            static_cast<int>(best / static_cast<std::size_t>(mask.width)), polarity, frame_index};
}

struct PromptEmbedding {
    Vector z;
};

struct PromptEncoderConfig {
    int d_v = 768;
    int width = 224;
    int height = 224;
    double position_scale = 100.0;
    std::uint64_t seed = 0;
};

/// Seeded vectors added to a click's positional code, one per polarity.
inline Vector polarity_vector(const PromptEncoderConfig& cfg, Polarity p) {
    Rng rng(mix_seed(cfg.seed ^ fnv1a("polarity"), p == Polarity::positive ? 1 : 2));
    return unit_gaussian_vector(rng, cfg.d_v);
}

/// Sinusoidal code of (x / width, y / height) over d_v channels (x in the
/// first half, y in the second) plus the polarity vector.
inline PromptEmbedding encode_prompt(const ClickPrompt& click, const PromptEncoderConfig& cfg) {
    if (cfg.d_v < 4 || cfg.d_v % 4 != 0) throw UsageError("encode_prompt: d_v must be a positive multiple of 4");
    if (click.x < 0 || click.y < 0 || click.x >= cfg.width || click.y >= cfg.height) {
        throw DataError("encode_prompt: click (" + std::to_string(click.x) + ", " + std::to_string(click.y) +
                        ") outside " + std::to_string(cfg.width) + "x" + std::to_string(cfg.height));
    }
    const double u = cfg.position_scale * click.x / cfg.width;
    const double v = cfg.position_scale * click.y / cfg.height;
    // grid_positional_encoding puts its first argument in the first half.
    Vector z = grid_positional_encoding(u, v, cfg.d_v);
    z += polarity_vector(cfg, click.polarity);
    return {z};
}

struct MemoryEntry {
    int frame_index = 0;
    TokenGrid tokens;     // pruned grid as produced by the router
    IndexList retained;   // source cells of tokens.data rows
    Vector labels;        // +1 object, -1 background, per retained token
    Matrix features;      // decoder keys, one normalized row per token
    bool pinned = false;
};

/// FIFO store of past frames. The first entry written is the prompt frame and
/// is never evicted.
struct MemoryBank {
    std::size_t capacity = kDefaultBankCapacity;
    std::vector<MemoryEntry> entries;
    std::size_t byte_count = 0;

    bool empty() const { return entries.empty(); }
    std::size_t size() const { return entries.size(); }

    std::size_t token_count() const {
        std::size_t n = 0;
        for (const auto& e : entries) n += e.tokens.n_tokens();
        return n;
    }

    static std::size_t entry_bytes(const MemoryEntry& e) {
        return e.tokens.n_tokens() * static_cast<std::size_t>(e.tokens.d_v()) * sizeof(float);
    }
};

inline void memory_write(MemoryBank& bank, MemoryEntry entry) {
    if (bank.capacity < 1) throw UsageError("memory_write: capacity must be at least 1");
    entry.pinned = bank.entries.empty();
    bank.byte_count += MemoryBank::entry_bytes(entry);
    bank.entries.push_back(std::move(entry));
    while (bank.entries.size() > bank.capacity) {
        auto victim = bank.entries.begin();
        while (victim != bank.entries.end() && victim->pinned) ++victim;
        if (victim == bank.entries.end()) break;
        bank.byte_count -= MemoryBank::entry_bytes(*victim);
        bank.entries.erase(victim);
    }
}

struct CostLedger {
    std::uint64_t flops_attention = 0;
    std::uint64_t flops_total = 0;
    std::size_t peak_memory_tokens = 0;
    std::size_t peak_memory_bytes = 0;
    std::map<std::string, double> wall_clock_ms;
    std::vector<std::uint64_t> frame_attention_flops;  // per frame, including re-decodes
    std::vector<std::size_t> frame_memory_bytes;       // bank bytes after each frame's write

    void add_time(const std::string& stage, double ms) { wall_clock_ms[stage] += ms; }

    void observe(const MemoryBank& bank) {
        peak_memory_tokens = std::max(peak_memory_tokens, bank.token_count());
        peak_memory_bytes = std::max(peak_memory_bytes, bank.byte_count);
    }

    double total_ms() const {
        double t = 0.0;
        for (const auto& [k, v] : wall_clock_ms) t += v;
        return t;
    }
};

class StageTimer {
public:
    StageTimer(CostLedger& ledger, std::string stage)
        : ledger_(ledger), stage_(std::move(stage)), start_(std::chrono::steady_clock::now()) {}
    ~StageTimer() {
        ledger_.add_time(stage_,
                         std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start_).count());
    }
    StageTimer(const StageTimer&) = delete;
    StageTimer& operator=(const StageTimer&) = delete;

private:
    CostLedger& ledger_;
    std::string stage_;
    std::chrono::steady_clock::time_point start_;
};

struct DecoderConfig {
    double beta = 12.0;       // attention inverse temperature
    double sink_score = 0.6;  // cosine level of the background sink key
    double prompt_mix = 0.25; // weight of the prompt code in the prompt key
    std::uint64_t seed = 0;
};

/// Per-video decoder state: the centering vector taken from the prompt frame
/// and the direction that values are written along.
struct DecoderContext {
    DecoderConfig cfg;
    Vector mu;
    Vector object_dir;
    int height = 0;
    int width = 0;

    Matrix features(const Matrix& tokens) const {
        Matrix f = tokens.rowwise() - mu.transpose();
        for (Eigen::Index i = 0; i < f.rows(); ++i) {
            const double n = f.row(i).norm();
            if (n > 1e-12) f.row(i) /= n;
        }
        return f;
    }
};

inline DecoderContext make_decoder_context(const TokenGrid& prompt_frame, int height, int width,
                                           const DecoderConfig& cfg) {
    if (prompt_frame.n_tokens() == 0) throw DataError("decoder: prompt frame has no tokens");
    if (height % prompt_frame.grid_h != 0 || width % prompt_frame.grid_w != 0 ||
        height / prompt_frame.grid_h != width / prompt_frame.grid_w) {
        throw DataError("decoder: frame " + std::to_string(height) + "x" + std::to_string(width) +
                        " is not a square-patch multiple of grid " + std::to_string(prompt_frame.grid_h) + "x" +
                        std::to_string(prompt_frame.grid_w));
    }
    DecoderContext ctx;
    ctx.cfg = cfg;
    ctx.mu = prompt_frame.data.colwise().mean().transpose();
    Rng rng(mix_seed(cfg.seed ^ fnv1a("object-direction")));
    ctx.object_dir = unit_gaussian_vector(rng, prompt_frame.data.cols());
    ctx.height = height;
    ctx.width = width;
    return ctx;
}

/// A click as the decoder sees it: key feature and signed value.
struct PromptToken {
    Vector key;
    double polarity = 1.0;
};

/// Key = normalize(f(token under the click) + prompt_mix * z / |z|). The dense
/// grid is used so a click on a cell the router dropped still has a feature.
inline PromptToken make_prompt_token(const DecoderContext& ctx, const TokenGrid& dense, const ClickPrompt& click,
                                     const PromptEmbedding& z) {
    if (!dense.dense()) throw DataError("make_prompt_token: needs the dense token grid");
    if (z.z.size() != dense.data.cols()) throw DataError("make_prompt_token: prompt width differs from tokens");
    const int patch = ctx.height / dense.grid_h;
    if (click.x < 0 || click.y < 0 || click.x >= ctx.width || click.y >= ctx.height) {
        throw DataError("make_prompt_token: click outside the frame");
    }
    const auto cell = static_cast<Eigen::Index>((click.y / patch) * dense.grid_w + click.x / patch);
    Vector key = ctx.features(dense.data.row(cell)).row(0).transpose();
    key += ctx.cfg.prompt_mix * z.z / z.z.norm();
    key /= key.norm();
    return {key, click.polarity == Polarity::positive ? 1.0 : -1.0};
}

struct MaskPrediction {
    Matrix logits;  // grid_h x grid_w, -inf on pruned cells
    BinaryMap mask;
    int frame_index = 0;
};

/// Attention FLOPs of one decode: one Q x K x d score product.
constexpr std::uint64_t attention_flops(std::uint64_t q, std::uint64_t k, std::uint64_t d) { return 2 * q * k * d; }

/// One cross-attention block followed by a similarity head.
///
/// Queries are the pruned tokens and the prompt tokens; keys are every bank
/// token and the prompt tokens, plus a sink key with a fixed score and a
/// background value. Values lie along the object direction with the sign of
/// the stored label (or prompt polarity). The logit of a token is the dot
/// product of its refined feature with the first prompt's refined feature.
inline MaskPrediction decode(const TokenGrid& pruned, std::span<const PromptToken> prompts, const MemoryBank& bank,
                             const DecoderContext& ctx, CostLedger& ledger, bool first_frame) {
    if (pruned.n_tokens() == 0) throw DataError("decode: no retained tokens");
    if (prompts.empty()) throw UsageError("decode: at least one prompt token is required");
    if (bank.empty() && !first_frame) {
        throw UsageError("decode: memory bank is empty after the first frame (write each frame before the next)");
    }
    const Eigen::Index d = pruned.data.cols();
    if (ctx.mu.size() != d) throw DataError("decode: token width differs from decoder context");
    if (pruned.source_index.size() != pruned.n_tokens()) throw DataError("decode: pruned grid lacks source indices");

    const auto n_q_tok = static_cast<Eigen::Index>(pruned.n_tokens());
    const auto n_p = static_cast<Eigen::Index>(prompts.size());
    const auto n_bank = static_cast<Eigen::Index>(bank.token_count());
    const Eigen::Index q = n_q_tok + n_p;
    const Eigen::Index k = n_bank + n_p;

    Matrix queries(q, d);
    queries.topRows(n_q_tok) = ctx.features(pruned.data);
    Matrix keys(k, d);
    Vector value_sign(k);
    Eigen::Index row = 0;
    for (const auto& e : bank.entries) {
        const auto n = e.features.rows();
        keys.middleRows(row, n) = e.features;
        value_sign.segment(row, n) = e.labels;
        row += n;
    }
    for (Eigen::Index p = 0; p < n_p; ++p) {
        const auto& pt = prompts[static_cast<std::size_t>(p)];
        if (pt.key.size() != d) throw DataError("decode: prompt key width differs from tokens");
        queries.row(n_q_tok + p) = pt.key.transpose();
        keys.row(n_bank + p) = pt.key.transpose();
        value_sign[n_bank + p] = pt.polarity;
    }

    const double beta = ctx.cfg.beta;
    const double sink = beta * ctx.cfg.sink_score;
    Matrix scores = beta * (queries * keys.transpose());
    Matrix values = value_sign * ctx.object_dir.transpose();

    // Softmax over the keys and the sink, then mix.
    Matrix attn(q, k);
    Vector sink_weight(q);
    for (Eigen::Index i = 0; i < q; ++i) {
        const double m = std::max(scores.row(i).maxCoeff(), sink);
        attn.row(i) = (scores.row(i).array() - m).exp().matrix();
        const double s = std::exp(sink - m);
        const double z = attn.row(i).sum() + s;
        attn.row(i) /= z;
        sink_weight[i] = s / z;
    }
    Matrix refined = attn * values;
    refined -= sink_weight * ctx.object_dir.transpose();

    const Vector reference = refined.row(n_q_tok).transpose();
    const Vector token_logits = refined.topRows(n_q_tok) * reference;

    const auto uq = static_cast<std::uint64_t>(q);
    const auto uk = static_cast<std::uint64_t>(k);
    const auto ud = static_cast<std::uint64_t>(d);
    const std::uint64_t attn_flops = attention_flops(uq, uk, ud);
    ledger.flops_attention += attn_flops;
    // score product, value mix, similarity head
    ledger.flops_total += attn_flops + 2 * uq * uk * ud + 2 * static_cast<std::uint64_t>(n_q_tok) * ud;

    MaskPrediction out;
    out.frame_index = pruned.frame_index;
    out.logits = Matrix::Constant(pruned.grid_h, pruned.grid_w, -std::numeric_limits<double>::infinity());
    for (Eigen::Index i = 0; i < n_q_tok; ++i) {
        const std::size_t cell = pruned.source_index[static_cast<std::size_t>(i)];
        out.logits(static_cast<Eigen::Index>(cell) / pruned.grid_w, static_cast<Eigen::Index>(cell) % pruned.grid_w) =
            token_logits[i];
    }
    if (!token_logits.allFinite()) throw NumericError("decode: non-finite logits");

    const int patch = ctx.height / pruned.grid_h;
    out.mask = BinaryMap(ctx.height, ctx.width);
    for (int y = 0; y < ctx.height; ++y) {
        for (int x = 0; x < ctx.width; ++x) out.mask.at(y, x) = out.logits(y / patch, x / patch) > 0.0 ? 1 : 0;
    }
    return out;
}

/// Bank entry for a decoded frame: labels are the logit signs at the
/// retained cells.
inline MemoryEntry make_memory_entry(const TokenGrid& pruned, const MaskPrediction& pred, const DecoderContext& ctx) {
    MemoryEntry e;
    e.frame_index = pruned.frame_index;
    e.tokens = pruned;
    e.retained = pruned.source_index;
    e.labels.resize(static_cast<Eigen::Index>(pruned.n_tokens()));
    for (std::size_t i = 0; i < pruned.n_tokens(); ++i) {
        const std::size_t cell = pruned.source_index[i];
        const double l = pred.logits(static_cast<Eigen::Index>(cell) / pruned.grid_w,
                                     static_cast<Eigen::Index>(cell) % pruned.grid_w);
        e.labels[static_cast<Eigen::Index>(i)] = l > 0.0 ? 1.0 : -1.0;
    }
    e.features = ctx.features(pruned.data);
    return e;
}

}  // namespace prunekit
