#pragma once

// Synthetic video generator with exact ground truth: one target shape moving
// over a textured background, optional distractors and a high-frequency
// noise band.

#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "prunekit/error.hpp"
#include "prunekit/image.hpp"
#include "prunekit/rng.hpp"

namespace prunekit {

enum class ShapeKind { disk, square, ring };
enum class MotionKind { linear, circular };

inline const char* to_string(ShapeKind s) {
    switch (s) {
        case ShapeKind::disk: return "disk";
        case ShapeKind::square: return "square";
        case ShapeKind::ring: return "ring";
    }
    return "?";
}

inline ShapeKind parse_shape(const std::string& s) {
    if (s == "disk") return ShapeKind::disk;
    if (s == "square") return ShapeKind::square;
    if (s == "ring") return ShapeKind::ring;
    throw UsageError("unknown shape kind '" + s + "' (expected disk|square|ring)");
}

using Color = std::array<double, 3>;

struct SceneConfig {
    int n_frames = 90;
    int height = 224;
    int width = 224;
    ShapeKind shape = ShapeKind::disk;
    double size = 30.0;        // radius (disk, ring outer) or half side (square)
    double inner_ratio = 0.4;  // ring inner radius / outer radius
    MotionKind motion = MotionKind::linear;
    double start_x = 112.0;
    double start_y = 112.0;
    double velocity_x = 0.5;   // px per frame (linear)
    double velocity_y = 0.25;
    double orbit_radius = 30.0;    // circular
    double angular_velocity = 0.05;  // rad per frame
    int distractors = 1;
    bool noise_band = true;
    Color target_color{0.85, 0.15, 0.15};
    int grid_snap = 0;  // >0: target bounding box snapped to this pixel lattice
    std::uint64_t seed = 0;
};

struct VideoSequence {
    std::vector<Frame> frames;
    std::vector<std::optional<BinaryMap>> gt_masks;
    std::vector<int> object_count;
    int band_row_begin = 0;  // noise band rows [begin, end); empty when absent
    int band_row_end = 0;

    std::size_t size() const { return frames.size(); }
};

namespace detail {

struct Placed {
    ShapeKind shape;
    double cx, cy, size, inner_ratio;
    Color color;
};

// Signed distance to the shape boundary, negative inside.
inline double shape_sdf(const Placed& s, double x, double y) {
    const double dx = x - s.cx;
    const double dy = y - s.cy;
    switch (s.shape) {
        case ShapeKind::disk: return std::hypot(dx, dy) - s.size;
        case ShapeKind::square: {
            const double qx = std::abs(dx) - s.size;
            const double qy = std::abs(dy) - s.size;
            const double outside = std::hypot(std::max(qx, 0.0), std::max(qy, 0.0));
            return outside + std::min(std::max(qx, qy), 0.0);
        }
        case ShapeKind::ring: {
            const double r = std::hypot(dx, dy);
            const double mid = 0.5 * s.size * (1.0 + s.inner_ratio);
            const double half = 0.5 * s.size * (1.0 - s.inner_ratio);
            return std::abs(r - mid) - half;
        }
    }
    return 1.0;
}

inline double extent(const Placed& s) { return s.size; }

inline void draw(Frame& f, const Placed& s) {
    const int x0 = std::max(0, static_cast<int>(std::floor(s.cx - s.size - 2)));
    const int x1 = std::min(f.width - 1, static_cast<int>(std::ceil(s.cx + s.size + 2)));
    const int y0 = std::max(0, static_cast<int>(std::floor(s.cy - s.size - 2)));
    const int y1 = std::min(f.height - 1, static_cast<int>(std::ceil(s.cy + s.size + 2)));
    for (int y = y0; y <= y1; ++y) {
        for (int x = x0; x <= x1; ++x) {
            // Coverage from the signed distance at the pixel center, one pixel ramp.
            const double cov = std::clamp(0.5 - shape_sdf(s, x + 0.5, y + 0.5), 0.0, 1.0);
            if (cov <= 0.0) continue;
            for (int c = 0; c < 3; ++c) f.at(y, x, c) = (1.0 - cov) * f.at(y, x, c) + cov * s.color[static_cast<std::size_t>(c)];
        }
    }
}

inline BinaryMap rasterize(int h, int w, const Placed& s) {
    BinaryMap m(h, w);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) m.at(y, x) = shape_sdf(s, x + 0.5, y + 0.5) <= 0.0 ? 1 : 0;
    }
    return m;
}

struct Track {
    double x0, y0, vx, vy;
    bool circular;
    double orbit, omega, phase;

    std::array<double, 2> at(int t) const {
        if (circular) {
            const double a = phase + omega * t;
            return {x0 + orbit * std::cos(a), y0 + orbit * std::sin(a)};
        }
        return {x0 + vx * t, y0 + vy * t};
    }
};

// Moves the center so that the box [c - ext, c + ext] starts on the lattice.
inline std::array<double, 2> snap_center(std::array<double, 2> p, double ext, int snap) {
    if (snap <= 0) return p;
    for (auto& v : p) v = snap * std::round((v - ext) / snap) + ext;
    return p;
}

inline bool track_inside(const Track& tr, double ext, int n, int h, int w, int snap = 0) {
    for (int t = 0; t < n; ++t) {
        const auto p = snap_center(tr.at(t), ext, snap);
        if (p[0] - ext < 0 || p[0] + ext > w || p[1] - ext < 0 || p[1] + ext > h) return false;
    }
    return true;
}

}  // namespace detail

/// Renders a sequence deterministically from cfg.seed. Throws UsageError when
/// the target path leaves the frame.
inline VideoSequence generate_scene(const SceneConfig& cfg) {
    if (cfg.n_frames < 1 || cfg.height < 8 || cfg.width < 8 || cfg.size <= 0) {
        throw UsageError("generate_scene: invalid frame count, dims or size");
    }
    if (cfg.shape == ShapeKind::ring && !(cfg.inner_ratio > 0.0 && cfg.inner_ratio < 1.0)) {
        throw UsageError("generate_scene: ring inner_ratio must lie in (0, 1)");
    }
    const bool circ = cfg.motion == MotionKind::circular;
    const detail::Track target_track{cfg.start_x, cfg.start_y, cfg.velocity_x, cfg.velocity_y,
                                     circ, cfg.orbit_radius, cfg.angular_velocity, 0.0};
    if (cfg.grid_snap < 0) throw UsageError("generate_scene: grid_snap must be nonnegative");
    if (!detail::track_inside(target_track, cfg.size, cfg.n_frames, cfg.height, cfg.width, cfg.grid_snap)) {
        throw UsageError("generate_scene: target shape leaves the frame");
    }

    Rng rng(mix_seed(cfg.seed, fnv1a("scene")));
    std::uniform_real_distribution<double> u01(0.0, 1.0);

    // Background: muted base color with smooth sinusoidal texture and light
    // per-pixel grain.
    Color base{0.35 + 0.2 * u01(rng), 0.4 + 0.2 * u01(rng), 0.35 + 0.2 * u01(rng)};
    struct Wave { double fx, fy, ph, amp; int ch; };
    std::vector<Wave> waves;
    for (int i = 0; i < 6; ++i) {
        waves.push_back({(u01(rng) - 0.5) * 0.12, (u01(rng) - 0.5) * 0.12, u01(rng) * 6.283, 0.04 + 0.04 * u01(rng),
                         static_cast<int>(u01(rng) * 3) % 3});
    }
    Frame background(cfg.height, cfg.width);
    std::normal_distribution<double> grain(0.0, 0.015);
    for (int y = 0; y < cfg.height; ++y) {
        for (int x = 0; x < cfg.width; ++x) {
            for (int c = 0; c < 3; ++c) {
                double v = base[static_cast<std::size_t>(c)];
                for (const auto& w : waves) {
                    if (w.ch == c) v += w.amp * std::sin(w.fx * x + w.fy * y + w.ph);
                }
                background.at(y, x, c) = std::clamp(v + grain(rng), 0.0, 1.0);
            }
        }
    }

    // Noise band: a horizontal strip of random two-pixel checker cells.
    int band_y0 = -1;
    int band_y1 = -1;
    if (cfg.noise_band) {
        const int band_h = cfg.height / 7;
        band_y0 = static_cast<int>(u01(rng) * (cfg.height - band_h));
        band_y1 = band_y0 + band_h;
    }

    // Distractors: same shape family, never the target color.
    static constexpr std::array<Color, 4> palette{{{0.15, 0.25, 0.85}, {0.15, 0.75, 0.25}, {0.9, 0.85, 0.2},
                                                   {0.6, 0.2, 0.75}}};
    struct Distractor { detail::Track track; double size; ShapeKind shape; Color color; };
    std::vector<Distractor> distractors;
    for (int i = 0; i < cfg.distractors; ++i) {
        const double size = cfg.size * (0.6 + 0.4 * u01(rng));
        Distractor d{};
        bool ok = false;
        for (int attempt = 0; attempt < 200 && !ok; ++attempt) {
            d.track = {size + u01(rng) * (cfg.width - 2 * size), size + u01(rng) * (cfg.height - 2 * size),
                       (u01(rng) - 0.5) * 0.8, (u01(rng) - 0.5) * 0.8, false, 0, 0, 0};
            d.size = size;
            ok = detail::track_inside(d.track, size, cfg.n_frames, cfg.height, cfg.width);
            // Keep distractors clear of the target so the target is never occluded.
            for (int t = 0; ok && t < cfg.n_frames; t += 5) {
                const auto a = d.track.at(t);
                const auto b = detail::snap_center(target_track.at(t), cfg.size, cfg.grid_snap);
                if (std::hypot(a[0] - b[0], a[1] - b[1]) < size + cfg.size + 12) ok = false;
            }
        }
        if (!ok) continue;
        d.shape = static_cast<int>(u01(rng) * 2) == 0 ? ShapeKind::disk : ShapeKind::square;
        d.color = palette[static_cast<std::size_t>(i) % palette.size()];
        distractors.push_back(d);
    }

    VideoSequence seq;
    seq.frames.reserve(static_cast<std::size_t>(cfg.n_frames));
    for (int t = 0; t < cfg.n_frames; ++t) {
        Frame f = background;
        if (cfg.noise_band) {
            Rng band_rng(mix_seed(cfg.seed, fnv1a("band") + static_cast<std::uint64_t>(t)));
            std::uniform_real_distribution<double> bu(0.0, 1.0);
            for (int y = band_y0; y < band_y1; y += 2) {
                for (int x = 0; x < cfg.width; x += 2) {
                    Color c{bu(band_rng), bu(band_rng), bu(band_rng)};
                    for (int yy = y; yy < std::min(y + 2, band_y1); ++yy) {
                        for (int xx = x; xx < std::min(x + 2, cfg.width); ++xx) {
                            for (int ch = 0; ch < 3; ++ch) f.at(yy, xx, ch) = c[static_cast<std::size_t>(ch)];
                        }
                    }
                }
            }
        }
        for (const auto& d : distractors) {
            const auto p = d.track.at(t);
            detail::draw(f, {d.shape, p[0], p[1], d.size, cfg.inner_ratio, d.color});
        }
        const auto p = detail::snap_center(target_track.at(t), cfg.size, cfg.grid_snap);
        const detail::Placed target{cfg.shape, p[0], p[1], cfg.size, cfg.inner_ratio, cfg.target_color};
        detail::draw(f, target);
        seq.frames.push_back(std::move(f));
        seq.gt_masks.emplace_back(detail::rasterize(cfg.height, cfg.width, target));
        seq.object_count.push_back(1);
    }
    if (cfg.noise_band) {
        seq.band_row_begin = band_y0;
        seq.band_row_end = band_y1;
    }
    return seq;
}

}  // namespace prunekit
