#pragma once

// Region (Jaccard) and contour (boundary F) accuracy for binary masks.

#include <cmath>
#include <span>
#include <vector>

#include "prunekit/distance.hpp"
#include "prunekit/image.hpp"

namespace prunekit {

/// |S n G| / |S u G|; 1 when both masks are empty.
inline double jaccard(const BinaryMap& s, const BinaryMap& g) {
    require_same_dims(s, g, "jaccard");
    std::size_t inter = 0;
    std::size_t uni = 0;
    for (std::size_t i = 0; i < s.data.size(); ++i) {
        inter += (s.data[i] && g.data[i]);
        uni += (s.data[i] || g.data[i]);
    }
    return uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

/// Foreground pixels with at least one 4-neighbor in the background; pixels on
/// the image border count as touching background.
inline BinaryMap boundary_pixels(const BinaryMap& m) {
    BinaryMap b(m.height, m.width);
    for (int y = 0; y < m.height; ++y) {
        for (int x = 0; x < m.width; ++x) {
            if (!m.at(y, x)) continue;
            const bool edge = y == 0 || x == 0 || y == m.height - 1 || x == m.width - 1 || !m.at(y - 1, x) ||
                              !m.at(y + 1, x) || !m.at(y, x - 1) || !m.at(y, x + 1);
            b.at(y, x) = edge ? 1 : 0;
        }
    }
    return b;
}

/// Default contour tolerance: 0.8% of the image diagonal, rounded up.
inline double default_boundary_tolerance(int height, int width) {
    return std::ceil(0.008 * std::hypot(static_cast<double>(height), static_cast<double>(width)));
}

struct BoundaryScore {
    double precision = 0.0;
    double recall = 0.0;
    double f = 0.0;
};

/// Contour precision/recall/F with a pixel tolerance.
inline BoundaryScore boundary_score(const BinaryMap& s, const BinaryMap& g, double tol) {
    require_same_dims(s, g, "boundary_f");
    if (!(tol >= 0.0)) throw UsageError("boundary_f: tolerance must be nonnegative");
    const BinaryMap bs = boundary_pixels(s);
    const BinaryMap bg = boundary_pixels(g);
    const std::size_t ns = bs.count();
    const std::size_t ng = bg.count();
    if (ns == 0 && ng == 0) return {1.0, 1.0, 1.0};
    if (ns == 0 || ng == 0) return {0.0, 0.0, 0.0};

    const double tol2 = tol * tol;
    const auto dist_to_g = squared_distance_to_sites(bg);
    const auto dist_to_s = squared_distance_to_sites(bs);
    std::size_t matched_s = 0;
    std::size_t matched_g = 0;
    for (std::size_t i = 0; i < bs.data.size(); ++i) {
        if (bs.data[i] && dist_to_g[i] <= tol2) ++matched_s;
        if (bg.data[i] && dist_to_s[i] <= tol2) ++matched_g;
    }
    BoundaryScore out;
    out.precision = static_cast<double>(matched_s) / static_cast<double>(ns);
    out.recall = static_cast<double>(matched_g) / static_cast<double>(ng);
    const double denom = out.precision + out.recall;
    out.f = denom > 0.0 ? 2.0 * out.precision * out.recall / denom : 0.0;
    return out;
}

inline double boundary_f(const BinaryMap& s, const BinaryMap& g, double tol) { return boundary_score(s, g, tol).f; }

inline double boundary_f(const BinaryMap& s, const BinaryMap& g) {
    return boundary_f(s, g, default_boundary_tolerance(s.height, s.width));
}

struct FrameScore {
    double j = 0.0;
    double f = 0.0;
    double jf = 0.0;
};

inline FrameScore frame_score(const BinaryMap& s, const BinaryMap& g) {
    FrameScore fs;
    fs.j = jaccard(s, g);
    fs.f = boundary_f(s, g);
    fs.jf = 0.5 * (fs.j + fs.f);
    return fs;
}

struct SequenceScore {
    std::vector<FrameScore> frames;
    double mean_j = 0.0;
    double mean_f = 0.0;
    double mean_jf = 0.0;
};

/// Per-frame J, F and (J + F) / 2, averaged over frames.
inline SequenceScore jf_score(std::span<const BinaryMap> predicted, std::span<const BinaryMap> truth) {
    if (predicted.empty()) throw DataError("jf_score: empty mask lists");
    if (predicted.size() != truth.size()) throw DataError("jf_score: prediction and truth lists differ in length");
    SequenceScore out;
    for (std::size_t t = 0; t < predicted.size(); ++t) {
        const FrameScore fs = frame_score(predicted[t], truth[t]);
        out.mean_j += fs.j;
        out.mean_f += fs.f;
        out.frames.push_back(fs);
    }
    const double n = static_cast<double>(predicted.size());
    out.mean_j /= n;
    out.mean_f /= n;
    out.mean_jf = 0.5 * (out.mean_j + out.mean_f);
    return out;
}

/// Multi-object form: outer index is the object, inner the frame; the mean
/// runs over every (frame, object) pair.
inline double jf_score_objects(std::span<const std::vector<BinaryMap>> predicted,
                               std::span<const std::vector<BinaryMap>> truth) {
    if (predicted.empty() || predicted.size() != truth.size()) throw DataError("jf_score: object lists differ");
    double sum = 0.0;
    std::size_t pairs = 0;
    for (std::size_t o = 0; o < predicted.size(); ++o) {
        const auto seq = jf_score(predicted[o], truth[o]);
        for (const auto& fs : seq.frames) sum += fs.jf;
        pairs += seq.frames.size();
    }
    return sum / static_cast<double>(pairs);
}

}  // namespace prunekit
