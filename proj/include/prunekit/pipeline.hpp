#pragma once

// Frame-by-frame propagation: encode, MC-dropout uncertainty, projections,
// fusion, router scoring, top-k pruning, decoding, memory write, and the
// simulated click refinement loop.

#include <algorithm>
#include <chrono>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "prunekit/encoder.hpp"
#include "prunekit/memory.hpp"
#include "prunekit/metrics.hpp"
#include "prunekit/router.hpp"
#include "prunekit/scene.hpp"
#include "prunekit/semantic.hpp"
#include "prunekit/uncertainty.hpp"

namespace prunekit {

struct RefinementConfig {
    bool enabled = true;
    double threshold = 0.80;
    int max_rounds = 10;  // per sequence, the seed round included
    int clicks_per_round = 3;
    double min_clearance = 8.0;  // px; thinner error regions are not clicked

    void validate() const {
        if (!(threshold >= 0.0 && threshold <= 1.0)) throw UsageError("refinement threshold must lie in [0, 1]");
        if (max_rounds < 1) throw UsageError("max rounds must be at least 1 (the seed round)");
        if (clicks_per_round < 1) throw UsageError("clicks per round must be at least 1");
        if (!(min_clearance >= 0.0)) throw UsageError("click clearance must be nonnegative");
    }
};

struct ClickRecord {
    int round = 0;
    ClickPrompt click;
    double jf_before = 0.0;
    double jf_after = 0.0;
};

struct RefinementLog {
    std::vector<ClickRecord> clicks;  // seed click first
    int rounds_used = 0;

    std::size_t total_clicks() const { return clicks.size(); }
    std::size_t refinement_clicks() const { return clicks.empty() ? 0 : clicks.size() - 1; }
};

/// Corrective clicks for one frame: EDT-argmax points of the false-negative
/// (positive click) and false-positive (negative click) components, largest
/// component first.
inline std::vector<ClickPrompt> propose_clicks(const BinaryMap& pred, const BinaryMap& gt, int frame_index,
                                               int max_clicks, double min_clearance) {
    require_same_dims(pred, gt, "propose_clicks");
    struct Candidate {
        std::size_t area;
        std::size_t first;
        ClickPrompt click;
    };
    std::vector<Candidate> cands;
    for (const Polarity pol : {Polarity::positive, Polarity::negative}) {
        BinaryMap err(gt.height, gt.width);
        for (std::size_t i = 0; i < err.data.size(); ++i) {
            err.data[i] = pol == Polarity::positive ? (gt.data[i] && !pred.data[i]) : (pred.data[i] && !gt.data[i]);
        }
        if (err.empty()) continue;
        const auto d2 = foreground_edt_squared(err);
        for (const auto& comp : connected_components(err)) {
            int best = comp.pixels.front();
            for (int p : comp.pixels) {
                const auto up = static_cast<std::size_t>(p);
                const auto ub = static_cast<std::size_t>(best);
                if (d2[up] > d2[ub] || (d2[up] == d2[ub] && p < best)) best = p;
            }
            if (d2[static_cast<std::size_t>(best)] < min_clearance * min_clearance) continue;
            const int first = *std::min_element(comp.pixels.begin(), comp.pixels.end());
            cands.push_back({comp.pixels.size(), static_cast<std::size_t>(first),
                             {best % gt.width, best / gt.width, pol, frame_index}});
        }
    }
    std::stable_sort(cands.begin(), cands.end(), [](const Candidate& a, const Candidate& b) {
        if (a.area != b.area) return a.area > b.area;
        return a.first < b.first;
    });
    std::vector<ClickPrompt> out;
    for (std::size_t i = 0; i < cands.size() && out.size() < static_cast<std::size_t>(max_clicks); ++i) {
        out.push_back(cands[i].click);
    }
    return out;
}

/// Round bookkeeping shared by simulate_refinement and propagate.
class RefinementSession {
public:
    explicit RefinementSession(RefinementConfig cfg) : cfg_(cfg) { cfg_.validate(); }

    void record_seed(const ClickPrompt& seed) {
        log_.rounds_used = 1;
        log_.clicks.push_back({1, seed, 0.0, 0.0});
    }

    bool wants_round(double jf) const { return cfg_.enabled && jf < cfg_.threshold && log_.rounds_used < cfg_.max_rounds; }

    std::vector<ClickPrompt> propose(const BinaryMap& pred, const BinaryMap& gt, int frame_index) const {
        return propose_clicks(pred, gt, frame_index, cfg_.clicks_per_round, cfg_.min_clearance);
    }

    void record_round(std::span<const ClickPrompt> clicks, double jf_before, double jf_after) {
        ++log_.rounds_used;
        for (const auto& c : clicks) log_.clicks.push_back({log_.rounds_used, c, jf_before, jf_after});
    }

    const RefinementLog& log() const { return log_; }
    const RefinementConfig& config() const { return cfg_; }

private:
    RefinementConfig cfg_;
    RefinementLog log_;
};

using RefinePredictor = std::function<BinaryMap(int frame, std::span<const ClickPrompt> clicks)>;

struct RefinementOutcome {
    std::vector<BinaryMap> masks;
    RefinementLog log;
};

/// Replays the refinement policy over already-predicted masks: frames whose
/// J&F falls below the threshold get one round of clicks and are re-predicted.
/// The seed click (if any) occupies round 1.
inline RefinementOutcome simulate_refinement(std::vector<BinaryMap> masks, std::span<const BinaryMap> truth,
                                             const RefinementConfig& cfg, const RefinePredictor& predictor,
                                             std::optional<ClickPrompt> seed = std::nullopt) {
    if (masks.size() != truth.size()) throw DataError("simulate_refinement: mask and truth lists differ in length");
    RefinementSession session(cfg);
    if (seed) {
        session.record_seed(*seed);
    } else if (!masks.empty()) {
        session.record_seed(representative_click(truth.front(), 0));
    }
    for (std::size_t t = 0; t < masks.size(); ++t) {
        const double jf = frame_score(masks[t], truth[t]).jf;
        if (!session.wants_round(jf)) continue;
        const auto clicks = session.propose(masks[t], truth[t], static_cast<int>(t));
        if (clicks.empty()) continue;
        masks[t] = predictor(static_cast<int>(t), clicks);
        session.record_round(clicks, jf, frame_score(masks[t], truth[t]).jf);
    }
    return {std::move(masks), session.log()};
}

enum class SignalSet { text_only, text_uncertainty };

inline const char* to_string(SignalSet s) { return s == SignalSet::text_only ? "text" : "text+unc"; }

inline SignalSet parse_signal_set(const std::string& s) {
    if (s == "text") return SignalSet::text_only;
    if (s == "text+unc") return SignalSet::text_uncertainty;
    throw UsageError("unknown signal set '" + s + "' (expected text|text+unc)");
}

struct PipelineConfig {
    EncoderConfig encoder;
    int mc_passes = kDefaultMcPasses;
    std::uint64_t mc_seed = 0;
    double ridge_lambda = kDefaultRidgeLambda;
    PruneConfig prune;
    SignalSet signals = SignalSet::text_uncertainty;
    DecoderConfig decoder;
    std::size_t bank_capacity = kDefaultBankCapacity;
    RefinementConfig refine;
    std::uint64_t prompt_seed = 0;

    void validate() const {
        encoder.validate();
        if (mc_passes < 2) throw UsageError("mc passes must be at least 2, got " + std::to_string(mc_passes));
        prune.validate();
        if (bank_capacity < 1) throw UsageError("bank capacity must be at least 1");
        refine.validate();
    }
};

/// The retention-independent part of a frame's processing, with the time
/// each stage took.
struct FrameFeatures {
    TokenGrid x;
    UncertaintyMap unc;
    Vector alpha;
    double encode_ms = 0.0;
    double mc_ms = 0.0;
    double score_ms = 0.0;
};

/// H = [X | e'_text | U]; the uncertainty block is zero for text-only scoring.
inline FusedTokens fused_tokens(const TokenGrid& x, const AlignedText& text, const Vector& sigma_norm, SignalSet signals,
                                double lambda) {
    if (signals == SignalSet::text_only) return fuse(x, text, {Matrix::Zero(x.data.rows(), x.data.cols())});
    return fuse(x, text, uncertainty_features(sigma_norm, fit_uncertainty_projection(x, sigma_norm, lambda)));
}

/// Encoder, MC-dropout, projections, fusion and router scoring for one video.
/// W_t is fitted on the first frame passed to run().
class FeatureStage {
public:
    FeatureStage(const PipelineConfig& cfg, const TextEmbedding& e_text, const RouterWeights* router)
        : cfg_(cfg), encoder_(cfg.encoder), e_text_(e_text), router_(router) {
        cfg_.validate();
    }

    FrameFeatures run(const Frame& frame, int frame_index) {
        using clock = std::chrono::steady_clock;
        FrameFeatures f;
        Matrix prefix;
        auto t0 = clock::now();
        f.x = encoder_.encode(frame, &prefix);
        f.x.frame_index = frame_index;
        auto t1 = clock::now();
        f.unc = mc_uncertainty(encoder_, frame, cfg_.mc_passes, cfg_.mc_seed, &prefix);
        auto t2 = clock::now();
        if (!text_) {
            text_ = align_text(fit_text_projection(f.x, e_text_, cfg_.ridge_lambda), e_text_);
            text_ms_ = std::chrono::duration<double, std::milli>(clock::now() - t2).count();
            t2 = clock::now();
        }
        const bool use_unc = cfg_.signals == SignalSet::text_uncertainty;
        if (router_ != nullptr) {
            f.alpha = score(fused_tokens(f.x, *text_, f.unc.sigma_norm, cfg_.signals, cfg_.ridge_lambda), *router_);
        } else {
            f.alpha = heuristic_score(f.x, *text_, use_unc ? f.unc.sigma_norm : Vector::Zero(f.x.data.rows()));
        }
        auto t3 = clock::now();
        f.encode_ms = std::chrono::duration<double, std::milli>(t1 - t0).count();
        f.mc_ms = std::chrono::duration<double, std::milli>(t2 - t1).count();
        f.score_ms = std::chrono::duration<double, std::milli>(t3 - t2).count();
        return f;
    }

    const AlignedText& text() const {
        if (!text_) throw UsageError("FeatureStage: no frame processed yet");
        return *text_;
    }
    double text_ms() const { return text_ms_; }

private:
    PipelineConfig cfg_;
    Encoder encoder_;
    TextEmbedding e_text_;
    const RouterWeights* router_;
    std::optional<AlignedText> text_;
    double text_ms_ = 0.0;
};

/// Features of every frame. Runs that differ only in retention, decoder or
/// refinement settings can share one of these; the stored stage times are
/// charged to each run's ledger.
struct VideoFeatures {
    std::vector<FrameFeatures> frames;
    AlignedText text;
    double text_ms = 0.0;
};

inline VideoFeatures compute_features(const VideoSequence& video, const TextEmbedding& e_text,
                                      const RouterWeights* router, const PipelineConfig& cfg) {
    FeatureStage stage(cfg, e_text, router);
    VideoFeatures out;
    out.frames.reserve(video.size());
    for (std::size_t t = 0; t < video.size(); ++t) {
        try {
            out.frames.push_back(stage.run(video.frames[t], static_cast<int>(t)));
        } catch (const Error& e) {
            throw Error(e.code(), "frame " + std::to_string(t) + ": " + e.what());
        }
    }
    out.text = stage.text();
    out.text_ms = stage.text_ms();
    return out;
}

struct PropagationResult {
    std::vector<MaskPrediction> predictions;
    std::vector<BinaryMap> masks;
    std::vector<IndexList> retained;
    CostLedger ledger;
    RefinementLog refinement;
    std::vector<double> frame_jf;  // final per-frame J&F; empty without ground truth

    double fps() const {
        const double ms = ledger.total_ms();
        return ms > 0.0 ? 1000.0 * static_cast<double>(masks.size()) / ms : 0.0;
    }
};

/// Runs the whole pipeline over a video. The seed click defaults to the
/// representative point of frame 0's ground truth. Refinement needs ground
/// truth and is skipped on frames without it. Without router weights the
/// heuristic score ranks tokens.
inline PropagationResult propagate(const VideoSequence& video, const TextEmbedding& e_text, const RouterWeights* router,
                                   const PipelineConfig& cfg, std::optional<ClickPrompt> seed_click = std::nullopt,
                                   const VideoFeatures* cache = nullptr) {
    cfg.validate();
    if (video.size() == 0) throw DataError("propagate: empty video");
    if (cache != nullptr && cache->frames.size() != video.size()) {
        throw DataError("propagate: feature cache covers " + std::to_string(cache->frames.size()) + " of " +
                        std::to_string(video.size()) + " frames");
    }
    if (!seed_click) {
        if (video.gt_masks.empty() || !video.gt_masks[0] || video.gt_masks[0]->empty()) {
            throw UsageError("propagate: frame 0 has no ground-truth mask and no seed click was given");
        }
        seed_click = representative_click(*video.gt_masks[0], 0);
    }
    if (seed_click->polarity != Polarity::positive) throw UsageError("propagate: the seed click must be positive");

    const int height = video.frames[0].height;
    const int width = video.frames[0].width;
    const PromptEncoderConfig prompt_cfg{cfg.encoder.d_v, width, height, 100.0, cfg.prompt_seed};

    PropagationResult res;
    CostLedger& ledger = res.ledger;
    RefinementSession session(cfg.refine);
    session.record_seed(*seed_click);
    MemoryBank bank;
    bank.capacity = cfg.bank_capacity;
    std::optional<FeatureStage> stage;
    if (cache == nullptr) stage.emplace(cfg, e_text, router);

    DecoderContext ctx;
    PromptToken seed_token;

    for (std::size_t t = 0; t < video.size(); ++t) {
        const int ti = static_cast<int>(t);
        try {
            FrameFeatures local;
            const FrameFeatures* ff = nullptr;
            if (cache != nullptr) {
                ff = &cache->frames[t];
            } else {
                local = stage->run(video.frames[t], ti);
                ff = &local;
            }
            if (t == 0) ledger.add_time("text_projection", cache != nullptr ? cache->text_ms : stage->text_ms());
            ledger.add_time("encode", ff->encode_ms);
            ledger.add_time("mc_dropout", ff->mc_ms);
            ledger.add_time("score", ff->score_ms);
            const TokenGrid& x = ff->x;

            if (t == 0) {
                StageTimer timer(ledger, "prompt");
                ctx = make_decoder_context(x, height, width, cfg.decoder);
                seed_token = make_prompt_token(ctx, x, *seed_click, encode_prompt(*seed_click, prompt_cfg));
            }

            PruneResult pr;
            {
                StageTimer timer(ledger, "prune");
                pr = prune(x, ff->alpha, cfg.prune);
            }
            const std::uint64_t flops_before = ledger.flops_attention;
            std::vector<PromptToken> prompts{seed_token};
            MaskPrediction pred;
            {
                StageTimer timer(ledger, "decode");
                pred = decode(pr.pruned, prompts, bank, ctx, ledger, t == 0);
            }

            double jf = -1.0;
            const bool has_gt = t < video.gt_masks.size() && video.gt_masks[t].has_value();
            if (has_gt) {
                const BinaryMap& gt = *video.gt_masks[t];
                jf = frame_score(pred.mask, gt).jf;
                if (session.wants_round(jf)) {
                    const auto clicks = session.propose(pred.mask, gt, ti);
                    if (!clicks.empty()) {
                        StageTimer timer(ledger, "decode");
                        for (const auto& c : clicks) {
                            prompts.push_back(make_prompt_token(ctx, x, c, encode_prompt(c, prompt_cfg)));
                        }
                        pred = decode(pr.pruned, prompts, bank, ctx, ledger, t == 0);
                    }
                    if (!clicks.empty()) {
                        const double after = frame_score(pred.mask, gt).jf;
                        session.record_round(clicks, jf, after);
                        jf = after;
                    }
                }
                res.frame_jf.push_back(jf);
            }

            {
                StageTimer timer(ledger, "memory");
                memory_write(bank, make_memory_entry(pr.pruned, pred, ctx));
            }
            ledger.observe(bank);
            ledger.frame_attention_flops.push_back(ledger.flops_attention - flops_before);
            ledger.frame_memory_bytes.push_back(bank.byte_count);

            res.masks.push_back(pred.mask);
            res.predictions.push_back(std::move(pred));
            res.retained.push_back(std::move(pr.retained));
        } catch (const Error& e) {
            throw Error(e.code(), "frame " + std::to_string(t) + ": " + e.what());
        }
    }
    res.refinement = session.log();
    return res;
}

}  // namespace prunekit
