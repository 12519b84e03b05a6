#pragma once

// Monte Carlo dropout uncertainty per token and its projection into token
// feature space.

#include <cstdint>
#include <span>
#include <vector>

#include "prunekit/encoder.hpp"
#include "prunekit/linalg.hpp"
#include "prunekit/semantic.hpp"

namespace prunekit {

inline constexpr int kDefaultMcPasses = 5;

struct UncertaintyMap {
    Vector sigma_norm;    // min-max normalized standard deviation, in [0, 1]
    int passes = 0;
    Vector raw_variance;  // population variance of the tapped logits
};

/// Variance over passes, square root, then min-max normalization across
/// tokens. Split out from mc_uncertainty so hand-built taps can be fed in.
inline UncertaintyMap uncertainty_from_taps(std::span<const LogitTap> taps) {
    if (taps.size() < 2) throw UsageError("mc_uncertainty: need T >= 2 passes");
    std::vector<Vector> samples;
    samples.reserve(taps.size());
    for (const auto& t : taps) samples.push_back(t.s);
    UncertaintyMap out;
    out.passes = static_cast<int>(taps.size());
    out.raw_variance = population_variance(samples);
    out.sigma_norm = minmax_normalize(out.raw_variance.cwiseSqrt());
    return out;
}

/// T stochastic passes with seeds base_seed .. base_seed + T - 1. Passes share
/// the deterministic layers in front of the first dropout layer; pass that
/// prefix in when the caller already has it from Encoder::encode.
inline UncertaintyMap mc_uncertainty(const Encoder& encoder, const Frame& frame, int passes,
                                     std::uint64_t base_seed, const Matrix* prefix = nullptr) {
    if (passes < 2) throw UsageError("mc_uncertainty: need T >= 2 passes, got " + std::to_string(passes));
    Matrix own_prefix;
    if (prefix == nullptr) {
        own_prefix = encoder.stochastic_prefix(frame);
        prefix = &own_prefix;
    }
    std::vector<LogitTap> taps;
    taps.reserve(static_cast<std::size_t>(passes));
    for (int t = 0; t < passes; ++t) {
        taps.push_back(encoder.tap_from_prefix(*prefix, base_seed + static_cast<std::uint64_t>(t)));
    }
    return uncertainty_from_taps(taps);
}

inline UncertaintyMap mc_uncertainty(const Frame& frame, const EncoderConfig& config, int passes,
                                     std::uint64_t base_seed) {
    return mc_uncertainty(Encoder(config), frame, passes, base_seed);
}

struct UncertaintyProjection {
    Vector w_u;  // length d_v
    double lambda = kDefaultRidgeLambda;
};

/// Ridge regression of the normalized uncertainty on the token embeddings.
inline UncertaintyProjection fit_uncertainty_projection(const TokenGrid& x_vit, const Vector& sigma_norm,
                                                        double lambda = kDefaultRidgeLambda) {
    if (!(lambda > 0.0)) throw UsageError("fit_uncertainty_projection: lambda must be positive");
    if (static_cast<Eigen::Index>(x_vit.n_tokens()) != sigma_norm.size()) {
        throw DataError("fit_uncertainty_projection: " + std::to_string(x_vit.n_tokens()) + " tokens but " +
                        std::to_string(sigma_norm.size()) + " uncertainty values");
    }
    const Matrix target = sigma_norm;
    const Matrix w = ridge_lsq(x_vit.data, target, lambda);
    return {w.col(0), lambda};
}

struct UncertaintyFeatures {
    Matrix u;  // N x d_v, row i = sigma_norm[i] * w_u
};

inline UncertaintyFeatures uncertainty_features(const Vector& sigma_norm, const UncertaintyProjection& proj) {
    require_finite(sigma_norm, "uncertainty_features: sigma");
    require_finite(proj.w_u, "uncertainty_features: w_u");
    return {sigma_norm * proj.w_u.transpose()};
}

}  // namespace prunekit
