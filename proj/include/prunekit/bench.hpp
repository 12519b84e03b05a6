#pragma once

// Scene suites, router training on generated scenes, and the retention /
// MC-pass / signal sweep with CSV and JSON reports.

#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include "prunekit/io.hpp"
#include "prunekit/metrics.hpp"
#include "prunekit/pipeline.hpp"
#include "prunekit/router.hpp"
#include "prunekit/scene.hpp"

namespace prunekit {

/// easy: squares whose edges stay on the 16 px token lattice, so a perfect
/// token labeling scores J&F = 1. The others are free-moving shapes.
enum class SuiteKind { easy, disk, square, ring };

inline const char* to_string(SuiteKind k) {
    switch (k) {
        case SuiteKind::easy: return "easy";
        case SuiteKind::disk: return "disk";
        case SuiteKind::square: return "square";
        case SuiteKind::ring: return "ring";
    }
    return "?";
}

inline SuiteKind parse_suite(const std::string& s) {
    if (s == "easy") return SuiteKind::easy;
    if (s == "disk") return SuiteKind::disk;
    if (s == "square") return SuiteKind::square;
    if (s == "ring") return SuiteKind::ring;
    throw UsageError("unknown scene '" + s + "' (expected easy|disk|square|ring)");
}

/// Scene `seed` of a suite: random start and velocity, resampled until the
/// target stays inside the frame.
inline SceneConfig suite_scene(SuiteKind kind, std::uint64_t seed, int frames) {
    if (frames < 1) throw UsageError("suite_scene: frames must be positive");
    SceneConfig c;
    c.n_frames = frames;
    c.seed = seed;
    switch (kind) {
        case SuiteKind::easy:
            c.shape = ShapeKind::square;
            c.size = 24.0;
            c.grid_snap = 16;
            break;
        case SuiteKind::disk: c.shape = ShapeKind::disk; break;
        case SuiteKind::square: c.shape = ShapeKind::square; break;
        case SuiteKind::ring:
            c.shape = ShapeKind::ring;
            c.size = 36.0;
            break;
    }
    Rng rng(mix_seed(seed, fnv1a("suite")));
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int attempt = 0; attempt < 1000; ++attempt) {
        c.start_x = c.size + 8 + u(rng) * (c.width - 2 * c.size - 16);
        c.start_y = c.size + 8 + u(rng) * (c.height - 2 * c.size - 16);
        c.velocity_x = (u(rng) - 0.5) * 1.2;
        c.velocity_y = (u(rng) - 0.5) * 1.2;
        const detail::Track tr{c.start_x, c.start_y, c.velocity_x, c.velocity_y, false, 0, 0, 0};
        if (detail::track_inside(tr, c.size, frames, c.height, c.width, c.grid_snap)) return c;
    }
    throw UsageError("suite_scene: no in-frame track found for " + std::to_string(frames) + " frames");
}

// --- router training --------------------------------------------------------

/// One labeled example per frame: fused tokens and ground-truth cell labels.
inline std::vector<LabeledTokens> router_examples(const VideoSequence& video, const VideoFeatures& feats,
                                                  const PipelineConfig& cfg, double label_threshold) {
    std::vector<LabeledTokens> out;
    for (std::size_t t = 0; t < video.size(); ++t) {
        if (!video.gt_masks[t]) continue;
        const auto& f = feats.frames[t];
        out.push_back({fused_tokens(f.x, feats.text, f.unc.sigma_norm, cfg.signals, cfg.ridge_lambda).h,
                       token_labels(*video.gt_masks[t], cfg.encoder.patch, label_threshold)});
    }
    return out;
}

struct RouterTrainingSpec {
    SuiteKind suite = SuiteKind::easy;
    std::vector<std::uint64_t> scene_seeds{1000, 1001, 1002, 1003};
    int frames = 20;
    RouterTrainConfig train;
};

/// Trains on generated scenes (text + uncertainty fusion) and returns the
/// weights rounded to storage precision.
inline RouterTrainResult train_router_on_scenes(const RouterTrainingSpec& spec, const TextEmbedding& e_text,
                                                PipelineConfig cfg) {
    cfg.signals = SignalSet::text_uncertainty;
    std::vector<LabeledTokens> data;
    for (auto seed : spec.scene_seeds) {
        const auto video = generate_scene(suite_scene(spec.suite, seed, spec.frames));
        const auto feats = compute_features(video, e_text, nullptr, cfg);
        auto ex = router_examples(video, feats, cfg, spec.train.label_overlap_threshold);
        for (auto& e : ex) data.push_back(std::move(e));
    }
    auto res = train_router(data, spec.train);
    res.weights = quantize_f32(res.weights);
    return res;
}

// --- sweep -------------------------------------------------------------------

struct BenchConfig {
    std::vector<std::uint64_t> seeds{0, 1, 2};
    std::vector<double> rhos{1.0, 0.5, 0.3, 0.1};
    std::vector<int> passes{4, 5, 6};
    std::vector<SignalSet> signals{SignalSet::text_uncertainty};
    SuiteKind suite = SuiteKind::easy;
    int frames = 90;
    PipelineConfig pipeline;
    TextEmbedding e_text;
    const RouterWeights* router = nullptr;

    void validate() const {
        if (seeds.empty() || rhos.empty() || passes.empty() || signals.empty()) {
            throw UsageError("bench: every grid axis needs at least one value");
        }
        for (double r : rhos) {
            if (!(r > 0.0 && r <= 1.0)) throw UsageError("bench: retention ratios must lie in (0, 1]");
        }
        for (int t : passes) {
            if (t < 2) throw UsageError("bench: MC pass counts must be at least 2");
        }
        if (frames < 1) throw UsageError("bench: frames must be positive");
        if (e_text.data.size() == 0) throw UsageError("bench: text embedding is empty");
    }
};

struct BenchRow {
    std::uint64_t seed = 0;
    double rho = 0.0;
    int passes = 0;
    SignalSet signals = SignalSet::text_uncertainty;
    double mean_j = 0.0;
    double mean_f = 0.0;
    double mean_jf = 0.0;
    double fps = 0.0;
    std::uint64_t attn_flops = 0;
    std::size_t peak_mem_bytes = 0;
    std::size_t clicks = 0;
    std::string error;  // empty on success
};

/// Runs every (seed, T, signals, rho) cell. Features are computed once per
/// (seed, T, signals) and shared by the rho cells; a failing cell is
/// recorded and the sweep continues.
inline std::vector<BenchRow> run_benchmark(const BenchConfig& cfg,
                                           const std::function<void(const BenchRow&)>& on_row = {}) {
    cfg.validate();
    std::vector<BenchRow> rows;
    auto emit = [&](BenchRow r) {
        if (on_row) on_row(r);
        rows.push_back(std::move(r));
    };
    for (auto seed : cfg.seeds) {
        VideoSequence video;
        std::string scene_error;
        try {
            video = generate_scene(suite_scene(cfg.suite, seed, cfg.frames));
        } catch (const Error& e) {
            scene_error = e.what();
        }
        std::vector<BinaryMap> truth;
        for (const auto& g : video.gt_masks) {
            if (g) truth.push_back(*g);
        }
        for (int passes : cfg.passes) {
            for (auto sig : cfg.signals) {
                PipelineConfig pc = cfg.pipeline;
                pc.mc_passes = passes;
                pc.signals = sig;
                pc.mc_seed = mix_seed(seed, fnv1a("mc"));
                VideoFeatures feats;
                std::string feat_error = scene_error;
                if (feat_error.empty()) {
                    try {
                        feats = compute_features(video, cfg.e_text, cfg.router, pc);
                    } catch (const Error& e) {
                        feat_error = e.what();
                    }
                }
                for (double rho : cfg.rhos) {
                    BenchRow row;
                    row.seed = seed;
                    row.rho = rho;
                    row.passes = passes;
                    row.signals = sig;
                    if (!feat_error.empty()) {
                        row.error = feat_error;
                        emit(row);
                        continue;
                    }
                    try {
                        PipelineConfig cell = pc;
                        cell.prune.retention_ratio = rho;
                        const auto res = propagate(video, cfg.e_text, cfg.router, cell, std::nullopt, &feats);
                        if (truth.size() == res.masks.size()) {
                            const auto s = jf_score(res.masks, truth);
                            row.mean_j = s.mean_j;
                            row.mean_f = s.mean_f;
                            row.mean_jf = s.mean_jf;
                        }
                        row.fps = res.fps();
                        row.attn_flops = res.ledger.flops_attention;
                        row.peak_mem_bytes = res.ledger.peak_memory_bytes;
                        row.clicks = res.refinement.total_clicks();
                    } catch (const Error& e) {
                        row.error = e.what();
                    }
                    emit(row);
                }
            }
        }
    }
    return rows;
}

inline std::string bench_csv_header() {
    return "seed,rho,T,signals,mean_J,mean_F,mean_JF,fps,attn_flops,peak_mem_bytes,clicks,error\n";
}

inline std::string bench_csv_row(const BenchRow& r) {
    std::ostringstream s;
    s.precision(17);
    std::string err = r.error;
    for (auto& c : err) {
        if (c == ',' || c == '\n' || c == '"') c = ' ';
    }
    s << r.seed << ',' << r.rho << ',' << r.passes << ',' << to_string(r.signals) << ',' << r.mean_j << ','
      << r.mean_f << ',' << r.mean_jf << ',' << r.fps << ',' << r.attn_flops << ',' << r.peak_mem_bytes << ','
      << r.clicks << ',' << err << '\n';
    return s.str();
}

inline std::string bench_csv(const std::vector<BenchRow>& rows) {
    std::string out = bench_csv_header();
    for (const auto& r : rows) out += bench_csv_row(r);
    return out;
}

/// Per (rho, T, signals) cell: mean and population standard deviation of
/// each numeric column over the successful seeds.
inline Json bench_summary(const std::vector<BenchRow>& rows) {
    using Key = std::tuple<double, int, int>;
    std::map<Key, std::vector<const BenchRow*>> cells;
    std::vector<Key> order;
    for (const auto& r : rows) {
        const Key k{r.rho, r.passes, static_cast<int>(r.signals)};
        if (!cells.contains(k)) order.push_back(k);
        cells[k].push_back(&r);
    }
    Json out = Json::array();
    for (const auto& k : order) {
        const auto& rs = cells[k];
        std::vector<const BenchRow*> ok;
        for (auto* r : rs) {
            if (r->error.empty()) ok.push_back(r);
        }
        Json cell;
        cell["rho"] = std::get<0>(k);
        cell["T"] = std::get<1>(k);
        cell["signals"] = to_string(static_cast<SignalSet>(std::get<2>(k)));
        cell["seeds"] = ok.size();
        cell["failures"] = rs.size() - ok.size();
        auto stat = [&](const char* name, auto get) {
            double m = 0.0;
            for (auto* r : ok) m += static_cast<double>(get(*r));
            m = ok.empty() ? 0.0 : m / static_cast<double>(ok.size());
            double v = 0.0;
            for (auto* r : ok) v += std::pow(static_cast<double>(get(*r)) - m, 2);
            v = ok.empty() ? 0.0 : v / static_cast<double>(ok.size());
            cell[name] = {{"mean", m}, {"std", std::sqrt(v)}};
        };
        stat("mean_J", [](const BenchRow& r) { return r.mean_j; });
        stat("mean_F", [](const BenchRow& r) { return r.mean_f; });
        stat("mean_JF", [](const BenchRow& r) { return r.mean_jf; });
        stat("fps", [](const BenchRow& r) { return r.fps; });
        stat("attn_flops", [](const BenchRow& r) { return r.attn_flops; });
        stat("peak_mem_bytes", [](const BenchRow& r) { return r.peak_mem_bytes; });
        stat("clicks", [](const BenchRow& r) { return r.clicks; });
        out.push_back(cell);
    }
    return out;
}

}  // namespace prunekit
