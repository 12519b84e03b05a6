// prunekit command-line driver: prune, propagate, bench, eval, train-router.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "prunekit/bench.hpp"
#include "prunekit/container.hpp"
#include "prunekit/embed_provider.hpp"
#include "prunekit/io.hpp"
#include "prunekit/metrics.hpp"
#include "prunekit/pipeline.hpp"

namespace fs = std::filesystem;
using namespace prunekit;

namespace {

struct CommonOptions {
    double rho = kDefaultRetention;
    int mc_passes = kDefaultMcPasses;
    std::string dropout_layers = "3,4,5";
    int tap_layer = 5;
    std::string retention_rule = "ceil";
    bool offline_embed = false;
    std::uint64_t embed_seed = kDefaultEmbedSeed;
    std::string embed_url;
    std::string prompt = "red object";
    std::string embedding_file;
    std::uint64_t seed = 0;
    std::uint64_t model_seed = 1;
    std::string out_dir = "prunekit_out";
    std::string router_weights;
    double refine_threshold = 0.80;
    int max_rounds = 10;
    int clicks_per_round = 3;
    bool no_refine = false;
    int d_v = 768;
    std::string signals = "text+unc";
};

std::vector<int> parse_int_list(const std::string& s, const char* what) {
    std::vector<int> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        const auto dash = item.find('-');
        try {
            if (dash != std::string::npos && dash > 0) {
                const int a = std::stoi(item.substr(0, dash));
                const int b = std::stoi(item.substr(dash + 1));
                for (int v = a; v <= b; ++v) out.push_back(v);
            } else {
                out.push_back(std::stoi(item));
            }
        } catch (const std::exception&) {
            throw UsageError(std::string(what) + ": cannot parse '" + item + "'");
        }
    }
    if (out.empty()) throw UsageError(std::string(what) + ": empty list");
    return out;
}

std::vector<double> parse_double_list(const std::string& s, const char* what) {
    std::vector<double> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        try {
            out.push_back(std::stod(item));
        } catch (const std::exception&) {
            throw UsageError(std::string(what) + ": cannot parse '" + item + "'");
        }
    }
    if (out.empty()) throw UsageError(std::string(what) + ": empty list");
    return out;
}

void add_common(CLI::App* app, CommonOptions& o, bool pipeline) {
    app->add_option("--rho", o.rho, "retention ratio in (0, 1]")->capture_default_str();
    app->add_option("--retention-rule", o.retention_rule, "ceil|floor|round")->capture_default_str();
    app->add_flag("--offline-embed", o.offline_embed, "use the deterministic offline text embedder");
    app->add_option("--embed-seed", o.embed_seed, "offline embedder seed")->capture_default_str();
    app->add_option("--embed-url", o.embed_url, "embedding provider base URL (else $PRUNEKIT_EMBED_URL)");
    app->add_option("--prompt", o.prompt, "text prompt")->capture_default_str();
    app->add_option("--embedding", o.embedding_file, "precomputed text embedding container [d_t]");
    app->add_option("--seed", o.seed, "run seed")->capture_default_str();
    app->add_option("--model-seed", o.model_seed, "encoder weight seed")->capture_default_str();
    app->add_option("--out-dir", o.out_dir, "output directory")->capture_default_str();
    app->add_option("--router-weights", o.router_weights, "router weight container (sidecar at <file>.json)");
    app->add_option("--signals", o.signals, "text|text+unc")->capture_default_str();
    app->add_option("--d-v", o.d_v, "token width of the built-in encoder")->capture_default_str();
    if (pipeline) {
        app->add_option("--mc-passes", o.mc_passes, "MC-dropout passes T (>= 2)")->capture_default_str();
        app->add_option("--dropout-layers", o.dropout_layers, "1-based layers with dropout, e.g. 3,4,5 or 3-5")
            ->capture_default_str();
        app->add_option("--tap-layer", o.tap_layer, "layer whose attention logits are tapped")->capture_default_str();
        app->add_option("--refine-threshold", o.refine_threshold, "per-frame J&F refinement trigger")
            ->capture_default_str();
        app->add_option("--max-rounds", o.max_rounds, "refinement rounds per sequence, seed round included")
            ->capture_default_str();
        app->add_option("--clicks-per-round", o.clicks_per_round, "clicks per refinement round")->capture_default_str();
        app->add_flag("--no-refine", o.no_refine, "disable simulated refinement");
    }
}

PipelineConfig pipeline_config(const CommonOptions& o) {
    PipelineConfig pc;
    pc.encoder.d_v = o.d_v;
    pc.encoder.seed = o.model_seed;
    pc.encoder.dropout_layers = parse_int_list(o.dropout_layers, "--dropout-layers");
    pc.encoder.tap_layer = o.tap_layer;
    pc.mc_passes = o.mc_passes;
    pc.mc_seed = mix_seed(o.seed, fnv1a("mc"));
    pc.prune.retention_ratio = o.rho;
    pc.prune.rule = parse_retention_rule(o.retention_rule);
    pc.signals = parse_signal_set(o.signals);
    pc.decoder.seed = o.model_seed;
    pc.prompt_seed = o.model_seed;
    pc.refine.enabled = !o.no_refine;
    pc.refine.threshold = o.refine_threshold;
    pc.refine.max_rounds = o.max_rounds;
    pc.refine.clicks_per_round = o.clicks_per_round;
    pc.refine.min_clearance = pc.encoder.patch / 2.0;
    pc.validate();
    return pc;
}

TextEmbedding text_embedding(const CommonOptions& o) {
    if (!o.embedding_file.empty()) {
        const Vector v = to_vector(read_container(o.embedding_file));
        return {v, std::abs(v.norm() - 1.0) < 1e-5};
    }
    ProviderConfig pc;
    pc.offline = o.offline_embed;
    pc.embed_seed = o.embed_seed;
    pc.url = o.embed_url;
    if (!pc.offline && resolve_embed_url(pc).empty()) {
        throw UsageError("no text embedding source: pass --offline-embed, --embed-url, --embedding, or set "
                         "PRUNEKIT_EMBED_URL");
    }
    return embed_text(TextPrompt(o.prompt), pc);
}

std::optional<RouterWeights> router_from(const CommonOptions& o) {
    if (o.router_weights.empty()) return std::nullopt;
    return load_router(o.router_weights);
}

Json common_json(const CommonOptions& o) {
    return Json{{"rho", o.rho},
                {"retention_rule", o.retention_rule},
                {"mc_passes", o.mc_passes},
                {"dropout_layers", o.dropout_layers},
                {"tap_layer", o.tap_layer},
                {"signals", o.signals},
                {"d_v", o.d_v},
                {"prompt", o.prompt},
                {"offline_embed", o.offline_embed},
                {"embed_seed", o.embed_seed},
                {"refine", !o.no_refine},
                {"refine_threshold", o.refine_threshold},
                {"max_rounds", o.max_rounds},
                {"clicks_per_round", o.clicks_per_round},
                {"router_weights", o.router_weights}};
}

std::string frame_name(const char* prefix, std::size_t t, const char* ext) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%s_%04zu%s", prefix, t, ext);
    return buf;
}

// Binary PPM (P6, maxval 255) frames for --frame-dir.
Frame read_ppm(const fs::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw DataError(path.string() + ": cannot open");
    std::string magic;
    int w = 0, h = 0, maxval = 0;
    f >> magic >> w >> h >> maxval;
    if (magic != "P6" || w <= 0 || h <= 0 || maxval != 255) throw DataError(path.string() + ": expected P6 with maxval 255");
    f.get();
    std::vector<unsigned char> buf(static_cast<std::size_t>(w) * h * 3);
    f.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
    if (f.gcount() != static_cast<std::streamsize>(buf.size())) throw DataError(path.string() + ": truncated PPM payload");
    Frame fr(h, w);
    for (std::size_t i = 0; i < buf.size(); ++i) fr.pixels[i] = buf[i] / 255.0;
    return fr;
}

VideoSequence load_frame_dir(const fs::path& dir) {
    if (!fs::is_directory(dir)) throw DataError(dir.string() + ": not a directory");
    std::vector<fs::path> frames;
    for (const auto& e : fs::directory_iterator(dir)) {
        if (e.path().extension() == ".ppm") frames.push_back(e.path());
    }
    std::sort(frames.begin(), frames.end());
    if (frames.empty()) throw DataError(dir.string() + ": no .ppm frames");
    VideoSequence v;
    for (const auto& p : frames) {
        v.frames.push_back(read_ppm(p));
        const fs::path mask = p.parent_path() / (p.stem().string() + ".pgm");
        if (fs::exists(mask)) {
            v.gt_masks.emplace_back(read_pgm(mask));
        } else {
            v.gt_masks.emplace_back(std::nullopt);
        }
        v.object_count.push_back(1);
    }
    return v;
}

// --- prune ------------------------------------------------------------------

struct PruneOptions {
    std::string tokens;
    std::string sigma;
    std::string scene = "easy";
    int frame_index = 0;
    int grid_w = 0;
};

int cmd_prune(const CommonOptions& o, const PruneOptions& p) {
    PipelineConfig pc = pipeline_config(o);
    const TextEmbedding e = text_embedding(o);
    TokenGrid x;
    Vector sigma;
    std::vector<std::string> inputs;
    if (!p.tokens.empty()) {
        x.data = to_matrix(read_container(p.tokens));
        inputs.push_back(p.tokens);
        const auto n = static_cast<int>(x.data.rows());
        if (x.data.cols() != o.d_v) {
            throw DataError(p.tokens + ": token width " + std::to_string(x.data.cols()) + " does not match --d-v " +
                            std::to_string(o.d_v));
        }
        int gw = p.grid_w;
        if (gw == 0) {
            gw = static_cast<int>(std::lround(std::sqrt(static_cast<double>(n))));
            if (gw * gw != n) throw DataError(p.tokens + ": " + std::to_string(n) + " tokens is not a square grid; pass --grid-w");
        }
        if (gw < 1 || n % gw != 0) throw DataError(p.tokens + ": --grid-w does not divide the token count");
        x.grid_w = gw;
        x.grid_h = n / gw;
        x.source_index = TokenGrid::identity_index(static_cast<std::size_t>(n));
        if (!p.sigma.empty()) {
            sigma = to_vector(read_container(p.sigma));
            inputs.push_back(p.sigma);
            if (sigma.size() != n) throw DataError(p.sigma + ": length does not match the token count");
        } else {
            sigma = Vector::Zero(n);
            if (pc.signals == SignalSet::text_uncertainty) {
                std::cerr << "note: no --sigma given for a token container; scoring uses text only\n";
                pc.signals = SignalSet::text_only;
            }
        }
    } else {
        SceneConfig sc = suite_scene(parse_suite(p.scene), o.seed, p.frame_index + 1);
        const auto video = generate_scene(sc);
        const Encoder enc(pc.encoder);
        Matrix prefix;
        x = enc.encode(video.frames.back(), &prefix);
        sigma = mc_uncertainty(enc, video.frames.back(), pc.mc_passes, pc.mc_seed, &prefix).sigma_norm;
        inputs.push_back("scene:" + p.scene);
    }

    const AlignedText text = align_text(fit_text_projection(x, e, pc.ridge_lambda), e);
    const auto router = router_from(o);
    Vector alpha;
    if (router) {
        alpha = score(fused_tokens(x, text, sigma, pc.signals, pc.ridge_lambda), *router);
    } else {
        alpha = heuristic_score(x, text, pc.signals == SignalSet::text_uncertainty ? sigma : Vector::Zero(sigma.size()));
    }
    const PruneResult pr = prune(x, alpha, pc.prune);

    const fs::path out(o.out_dir);
    fs::create_directories(out);
    Json idx;
    idx["n_tokens"] = x.n_tokens();
    idx["k"] = pr.retained.size();
    idx["rho"] = o.rho;
    idx["retention_rule"] = o.retention_rule;
    idx["retained"] = pr.retained;
    write_text(out / "retained.json", idx.dump(2) + "\n");
    write_container(out / "alpha.tpk", to_tensor(alpha));
    write_container(out / "pruned.tpk", to_tensor(pr.pruned.data));

    RunManifest m;
    m.command = "prune";
    m.config = common_json(o);
    m.config["signals_used"] = to_string(pc.signals);
    m.seeds = Json{{"seed", o.seed}, {"model_seed", o.model_seed}, {"embed_seed", o.embed_seed}};
    m.inputs = inputs;
    m.outputs = {"retained.json", "alpha.tpk", "pruned.tpk"};
    write_text(out / "manifest.json", emit_manifest(m));
    std::cout << "retained " << pr.retained.size() << " of " << x.n_tokens() << " tokens -> " << out.string() << "\n";
    return 0;
}

// --- propagate ----------------------------------------------------------------

struct PropagateOptions {
    std::string scene = "easy";
    int frames = 90;
    std::string frame_dir;
    std::vector<int> click;
};

int cmd_propagate(const CommonOptions& o, const PropagateOptions& p) {
    const PipelineConfig pc = pipeline_config(o);
    const TextEmbedding e = text_embedding(o);
    VideoSequence video;
    std::string source;
    if (!p.frame_dir.empty()) {
        video = load_frame_dir(p.frame_dir);
        source = p.frame_dir;
    } else {
        video = generate_scene(suite_scene(parse_suite(p.scene), o.seed, p.frames));
        source = "scene:" + p.scene;
    }
    std::optional<ClickPrompt> seed_click;
    if (!p.click.empty()) {
        if (p.click.size() != 2) throw UsageError("--click expects x y");
        seed_click = ClickPrompt{p.click[0], p.click[1], Polarity::positive, 0};
    }
    const auto router = router_from(o);
    const auto res = propagate(video, e, router ? &*router : nullptr, pc, seed_click);

    const fs::path out(o.out_dir);
    fs::create_directories(out / "masks");
    std::vector<std::string> outputs;
    for (std::size_t t = 0; t < res.masks.size(); ++t) {
        const std::string name = "masks/" + frame_name("mask", t, ".pgm");
        write_pgm(out / name, res.masks[t]);
        outputs.push_back(name);
    }
    Json ledger = to_json(res.ledger, res.masks.size());
    std::vector<BinaryMap> truth;
    for (const auto& g : video.gt_masks) {
        if (g) truth.push_back(*g);
    }
    if (truth.size() == res.masks.size()) {
        const auto s = jf_score(res.masks, truth);
        ledger["mean_J"] = s.mean_j;
        ledger["mean_F"] = s.mean_f;
        ledger["mean_JF"] = s.mean_jf;
    }
    write_text(out / "ledger.json", ledger.dump(2) + "\n");
    write_text(out / "refinement.json", to_json(res.refinement).dump(2) + "\n");
    outputs.push_back("ledger.json");
    outputs.push_back("refinement.json");

    RunManifest m;
    m.command = "propagate";
    m.config = common_json(o);
    m.config["scene"] = p.scene;
    m.config["frames"] = video.size();
    m.seeds = Json{{"seed", o.seed}, {"model_seed", o.model_seed}, {"embed_seed", o.embed_seed}};
    m.inputs = {source};
    m.outputs = outputs;
    write_text(out / "manifest.json", emit_manifest(m));
    std::cout << "propagated " << res.masks.size() << " frames, clicks " << res.refinement.total_clicks();
    if (ledger.contains("mean_JF")) std::cout << ", mean J&F " << ledger["mean_JF"].get<double>();
    std::cout << ", fps " << res.fps() << " -> " << out.string() << "\n";
    return 0;
}

// --- bench ---------------------------------------------------------------------

struct BenchOptions {
    int seeds = 3;
    std::uint64_t first_seed = 0;
    std::string rhos = "1.0,0.5,0.3,0.1";
    std::string passes = "4,5,6";
    std::string signal_grid = "text+unc";
    std::string suite = "easy";
    int frames = 90;
};

int cmd_bench(const CommonOptions& o, const BenchOptions& b) {
    BenchConfig bc;
    bc.pipeline = pipeline_config(o);
    bc.e_text = text_embedding(o);
    if (b.seeds < 1) throw UsageError("--seeds must be positive");
    bc.seeds.clear();
    for (int i = 0; i < b.seeds; ++i) bc.seeds.push_back(b.first_seed + static_cast<std::uint64_t>(i));
    bc.rhos = parse_double_list(b.rhos, "--rhos");
    bc.passes = parse_int_list(b.passes, "--passes");
    bc.signals.clear();
    std::stringstream ss(b.signal_grid);
    std::string item;
    while (std::getline(ss, item, ',')) bc.signals.push_back(parse_signal_set(item));
    bc.suite = parse_suite(b.suite);
    bc.frames = b.frames;
    const auto router = router_from(o);
    bc.router = router ? &*router : nullptr;

    const fs::path out(o.out_dir);
    fs::create_directories(out);
    std::ofstream csv(out / "bench.csv");
    if (!csv) throw DataError((out / "bench.csv").string() + ": cannot open for writing");
    csv << bench_csv_header();
    std::size_t failures = 0;
    const auto rows = run_benchmark(bc, [&](const BenchRow& r) {
        csv << bench_csv_row(r) << std::flush;
        if (!r.error.empty()) ++failures;
        std::cerr << "seed " << r.seed << " rho " << r.rho << " T " << r.passes << " " << to_string(r.signals)
                  << (r.error.empty() ? "" : " FAILED: " + r.error) << "\n";
    });
    Json summary;
    summary["config"] = common_json(o);
    summary["suite"] = b.suite;
    summary["frames"] = b.frames;
    summary["seeds"] = bc.seeds;
    summary["cells"] = bench_summary(rows);
    write_text(out / "bench_summary.json", summary.dump(2) + "\n");

    RunManifest m;
    m.command = "bench";
    m.config = common_json(o);
    m.config["suite"] = b.suite;
    m.config["rhos"] = b.rhos;
    m.config["passes"] = b.passes;
    m.config["signals_grid"] = b.signal_grid;
    m.config["frames"] = b.frames;
    m.seeds = Json{{"seeds", bc.seeds}, {"model_seed", o.model_seed}, {"embed_seed", o.embed_seed}};
    m.outputs = {"bench.csv", "bench_summary.json"};
    write_text(out / "manifest.json", emit_manifest(m));
    std::cout << rows.size() << " rows (" << failures << " failed) -> " << out.string() << "\n";
    return failures == 0 ? 0 : static_cast<int>(ExitCode::data);
}

// --- eval ------------------------------------------------------------------------

struct EvalOptions {
    std::string pred_dir;
    std::string gt_dir;
    std::string out_dir;
};

int cmd_eval(const EvalOptions& e) {
    std::vector<fs::path> preds;
    if (!fs::is_directory(e.pred_dir)) throw DataError(e.pred_dir + ": not a directory");
    if (!fs::is_directory(e.gt_dir)) throw DataError(e.gt_dir + ": not a directory");
    for (const auto& ent : fs::directory_iterator(e.pred_dir)) {
        if (ent.path().extension() == ".pgm") preds.push_back(ent.path());
    }
    std::sort(preds.begin(), preds.end());
    if (preds.empty()) throw DataError(e.pred_dir + ": no .pgm masks");
    std::vector<BinaryMap> s, g;
    for (const auto& p : preds) {
        const fs::path gt = fs::path(e.gt_dir) / p.filename();
        if (!fs::exists(gt)) throw DataError(gt.string() + ": ground truth missing for " + p.filename().string());
        s.push_back(read_pgm(p));
        g.push_back(read_pgm(gt));
    }
    const auto score = jf_score(s, g);
    std::ostringstream csv;
    csv.precision(17);
    csv << "frame,J,F,JF\n";
    for (std::size_t i = 0; i < preds.size(); ++i) {
        csv << preds[i].filename().string() << ',' << score.frames[i].j << ',' << score.frames[i].f << ','
            << score.frames[i].jf << '\n';
    }
    Json summary{{"frames", preds.size()}, {"mean_J", score.mean_j}, {"mean_F", score.mean_f}, {"mean_JF", score.mean_jf}};
    if (!e.out_dir.empty()) {
        fs::create_directories(e.out_dir);
        write_text(fs::path(e.out_dir) / "eval.csv", csv.str());
        write_text(fs::path(e.out_dir) / "eval_summary.json", summary.dump(2) + "\n");
    } else {
        std::cout << csv.str();
    }
    std::cout << "mean J " << score.mean_j << " F " << score.mean_f << " J&F " << score.mean_jf << "\n";
    return 0;
}

// --- train-router ------------------------------------------------------------------

struct TrainOptions {
    std::string suite = "easy";
    int scenes = 4;
    int frames = 20;
    int epochs = 20;
    double lr = 0.05;
    std::string output = "router.tpk";
};

int cmd_train_router(const CommonOptions& o, const TrainOptions& t) {
    PipelineConfig pc = pipeline_config(o);
    const TextEmbedding e = text_embedding(o);
    RouterTrainingSpec spec;
    spec.suite = parse_suite(t.suite);
    spec.frames = t.frames;
    if (t.scenes < 1) throw UsageError("--scenes must be positive");
    spec.scene_seeds.clear();
    for (int i = 0; i < t.scenes; ++i) spec.scene_seeds.push_back(1000 + o.seed * 1000 + static_cast<std::uint64_t>(i));
    spec.train.epochs = t.epochs;
    spec.train.learning_rate = t.lr;
    spec.train.seed = o.seed;
    const auto res = train_router_on_scenes(spec, e, pc);

    const fs::path out(o.out_dir);
    fs::create_directories(out);
    Json training{{"suite", t.suite},
                  {"scene_seeds", spec.scene_seeds},
                  {"frames", t.frames},
                  {"epochs", t.epochs},
                  {"learning_rate", t.lr},
                  {"momentum", spec.train.momentum},
                  {"batch_size", spec.train.batch_size},
                  {"final_loss", res.final_loss},
                  {"d_v", o.d_v},
                  {"model_seed", o.model_seed}};
    save_router(out / t.output, res.weights, training);
    RunManifest m;
    m.command = "train-router";
    m.config = common_json(o);
    m.config["training"] = training;
    m.seeds = Json{{"seed", o.seed}, {"model_seed", o.model_seed}, {"embed_seed", o.embed_seed}};
    m.outputs = {t.output, t.output + ".json"};
    write_text(out / "manifest.json", emit_manifest(m));
    std::cout << "trained router, final loss " << res.final_loss << " -> " << (out / t.output).string() << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"prunekit: text- and uncertainty-guided token pruning for memory-based video segmentation"};
    app.require_subcommand(1);

    CommonOptions prune_o, prop_o, bench_o, train_o;
    PruneOptions prune_p;
    PropagateOptions prop_p;
    BenchOptions bench_p;
    EvalOptions eval_p;
    TrainOptions train_p;

    auto* prune_cmd = app.add_subcommand("prune", "score and prune one frame's tokens");
    add_common(prune_cmd, prune_o, true);
    prune_cmd->add_option("--tokens", prune_p.tokens, "token container [N, d_v]");
    prune_cmd->add_option("--sigma", prune_p.sigma, "normalized uncertainty container [N]");
    prune_cmd->add_option("--grid-w", prune_p.grid_w, "grid width when N is not square");
    prune_cmd->add_option("--scene", prune_p.scene, "without --tokens: encode a frame of this scene")->capture_default_str();
    prune_cmd->add_option("--frame-index", prune_p.frame_index, "frame of the scene to encode")->capture_default_str();

    auto* prop_cmd = app.add_subcommand("propagate", "segment a video with pruned-token memory");
    add_common(prop_cmd, prop_o, true);
    prop_cmd->add_option("--scene", prop_p.scene, "easy|disk|square|ring")->capture_default_str();
    prop_cmd->add_option("--frames", prop_p.frames, "scene length")->capture_default_str();
    prop_cmd->add_option("--frame-dir", prop_p.frame_dir, "directory of .ppm frames (optional same-stem .pgm masks)");
    prop_cmd->add_option("--click", prop_p.click, "seed click x y on frame 0")->expected(2);

    auto* bench_cmd = app.add_subcommand("bench", "retention / MC-pass / signal sweep");
    add_common(bench_cmd, bench_o, true);
    bench_cmd->add_option("--seeds", bench_p.seeds, "number of scene seeds")->capture_default_str();
    bench_cmd->add_option("--first-seed", bench_p.first_seed, "first scene seed")->capture_default_str();
    bench_cmd->add_option("--rhos", bench_p.rhos, "retention grid")->capture_default_str();
    bench_cmd->add_option("--passes", bench_p.passes, "MC pass grid")->capture_default_str();
    bench_cmd->add_option("--signal-grid", bench_p.signal_grid, "comma list of text|text+unc")->capture_default_str();
    bench_cmd->add_option("--scene", bench_p.suite, "easy|disk|square|ring")->capture_default_str();
    bench_cmd->add_option("--frames", bench_p.frames, "frames per scene")->capture_default_str();

    auto* eval_cmd = app.add_subcommand("eval", "score a mask directory against ground truth");
    eval_cmd->add_option("--pred-dir", eval_p.pred_dir, "predicted .pgm masks")->required();
    eval_cmd->add_option("--gt-dir", eval_p.gt_dir, "ground-truth .pgm masks with the same names")->required();
    eval_cmd->add_option("--out-dir", eval_p.out_dir, "write eval.csv and eval_summary.json here");

    auto* train_cmd = app.add_subcommand("train-router", "fit router weights on generated scenes");
    add_common(train_cmd, train_o, true);
    train_cmd->add_option("--scene", train_p.suite, "training scene suite")->capture_default_str();
    train_cmd->add_option("--scenes", train_p.scenes, "number of training scenes")->capture_default_str();
    train_cmd->add_option("--frames", train_p.frames, "frames per training scene")->capture_default_str();
    train_cmd->add_option("--epochs", train_p.epochs, "training epochs")->capture_default_str();
    train_cmd->add_option("--lr", train_p.lr, "learning rate")->capture_default_str();
    train_cmd->add_option("--output", train_p.output, "weights file name inside --out-dir")->capture_default_str();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : static_cast<int>(ExitCode::usage);
    }

    try {
        if (*prune_cmd) return cmd_prune(prune_o, prune_p);
        if (*prop_cmd) return cmd_propagate(prop_o, prop_p);
        if (*bench_cmd) return cmd_bench(bench_o, bench_p);
        if (*eval_cmd) return cmd_eval(eval_p);
        if (*train_cmd) return cmd_train_router(train_o, train_p);
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return static_cast<int>(e.code());
    } catch (const fs::filesystem_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return static_cast<int>(ExitCode::data);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return static_cast<int>(ExitCode::numeric);
    }
    return static_cast<int>(ExitCode::usage);
}
