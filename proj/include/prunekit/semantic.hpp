#pragma once

// Text-prompt embeddings and the closed-form projection that carries the
// text vector into visual-token space.

#include <cctype>
#include <cstdint>
#include <string>
#include <string_view>

#include "prunekit/encoder.hpp"
#include "prunekit/linalg.hpp"
#include "prunekit/rng.hpp"

namespace prunekit {

inline constexpr int kTextDim = 512;
inline constexpr double kDefaultRidgeLambda = 1e-3;
inline constexpr std::uint64_t kDefaultEmbedSeed = 7;

/// Lowercased, trimmed, internal whitespace runs collapsed to one space.
inline std::string normalize_prompt(std::string_view text) {
    std::string out;
    out.reserve(text.size());
    bool pending_space = false;
    for (unsigned char c : text) {
        if (std::isspace(c)) {
            pending_space = !out.empty();
            continue;
        }
        if (pending_space) out.push_back(' ');
        pending_space = false;
        out.push_back(static_cast<char>(std::tolower(c)));
    }
    return out;
}

struct TextPrompt {
    std::string text;

    explicit TextPrompt(std::string t) : text(std::move(t)) {
        if (normalize_prompt(text).empty()) throw UsageError("TextPrompt: prompt is empty after trimming");
    }
};

struct TextEmbedding {
    Vector data;
    bool unit_norm = false;

    int d_t() const { return static_cast<int>(data.size()); }
};

/// Deterministic stand-in for a text encoder: a unit Gaussian vector seeded by
/// a hash of the normalized prompt and embed_seed.
inline TextEmbedding offline_embed(const TextPrompt& prompt, std::uint64_t embed_seed = kDefaultEmbedSeed,
                                   int d_t = kTextDim) {
    if (d_t < 1) throw UsageError("offline_embed: d_t must be positive");
    Rng rng(mix_seed(fnv1a(normalize_prompt(prompt.text)), embed_seed));
    return {unit_gaussian_vector(rng, d_t), true};
}

struct SemanticProjection {
    Matrix w_t;  // d_v x d_t
    double lambda = kDefaultRidgeLambda;
    int fit_frame_index = 0;
};

struct AlignedText {
    Vector e_text_aligned;  // length d_v
};

/// Least-squares map from token space to text space that sends every token of
/// x_vit toward e_text: argmin_W ||X W - 1 e^T||^2 + lambda ||W||^2.
inline SemanticProjection fit_text_projection(const TokenGrid& x_vit, const TextEmbedding& e_text,
                                              double lambda = kDefaultRidgeLambda) {
    if (!(lambda > 0.0)) throw UsageError("fit_text_projection: lambda must be positive");
    if (e_text.data.size() == 0) throw DataError("fit_text_projection: empty text embedding");
    require_finite(x_vit.data, "fit_text_projection: tokens");
    const Matrix target = Matrix::Ones(x_vit.data.rows(), 1) * e_text.data.transpose();
    return {ridge_lsq(x_vit.data, target, lambda), lambda, x_vit.frame_index};
}

/// e'_text = W_t e_text, a d_v-length vector.
inline AlignedText align_text(const SemanticProjection& proj, const TextEmbedding& e_text) {
    if (proj.w_t.cols() != e_text.data.size()) {
        throw DataError("align_text: projection expects d_t = " + std::to_string(proj.w_t.cols()) +
                        ", embedding has " + std::to_string(e_text.data.size()));
    }
    return {proj.w_t * e_text.data};
}

}  // namespace prunekit
