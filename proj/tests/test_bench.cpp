#include <gtest/gtest.h>

#include <sstream>

#include "prunekit/bench.hpp"

using namespace prunekit;

namespace {

BenchConfig tiny() {
    BenchConfig c;
    c.seeds = {0, 1};
    c.passes = {2, 3};
    c.frames = 2;
    c.pipeline.encoder.d_v = 32;
    c.e_text = offline_embed(TextPrompt("red object"));
    return c;
}

}  // namespace

TEST(Bench, GridRowCountAndCsv) {
    const auto cfg = tiny();
    int streamed = 0;
    const auto rows = run_benchmark(cfg, [&](const BenchRow&) { ++streamed; });
    EXPECT_EQ(rows.size(), 2u * 4 * 2);
    EXPECT_EQ(streamed, 16);
    for (const auto& r : rows) {
        EXPECT_TRUE(r.error.empty()) << r.error;
        EXPECT_GT(r.fps, 0.0);
        EXPECT_GE(r.mean_jf, 0.0);
        EXPECT_LE(r.mean_jf, 1.0);
    }
    const auto csv = bench_csv(rows);
    std::istringstream in(csv);
    std::string line;
    int lines = 0;
    std::getline(in, line);
    EXPECT_EQ(line, "seed,rho,T,signals,mean_J,mean_F,mean_JF,fps,attn_flops,peak_mem_bytes,clicks,error");
    while (std::getline(in, line)) {
        ++lines;
        EXPECT_EQ(std::count(line.begin(), line.end(), ','), 11);
    }
    EXPECT_EQ(lines, 16);
    const auto summary = bench_summary(rows);
    EXPECT_EQ(summary.size(), 8u);
    EXPECT_EQ(summary[0]["seeds"], 2);
}

TEST(Bench, FullRetentionCellEqualsDenseRun) {
    auto cfg = tiny();
    cfg.seeds = {4};
    cfg.passes = {5};
    cfg.rhos = {1.0};
    const auto rows = run_benchmark(cfg);
    ASSERT_EQ(rows.size(), 1u);
    const auto video = generate_scene(suite_scene(cfg.suite, 4, cfg.frames));
    PipelineConfig pc = cfg.pipeline;
    pc.prune.retention_ratio = 1.0;
    pc.mc_seed = mix_seed(4, fnv1a("mc"));
    const auto res = propagate(video, cfg.e_text, nullptr, pc);
    std::vector<BinaryMap> truth;
    for (const auto& g : video.gt_masks) truth.push_back(*g);
    EXPECT_EQ(rows[0].mean_jf, jf_score(res.masks, truth).mean_jf);
    EXPECT_EQ(rows[0].attn_flops, res.ledger.flops_attention);
}

TEST(Bench, InvalidGridsRejected) {
    auto cfg = tiny();
    cfg.rhos = {};
    EXPECT_THROW(run_benchmark(cfg), UsageError);
    cfg = tiny();
    cfg.rhos = {1.5};
    EXPECT_THROW(run_benchmark(cfg), UsageError);
    cfg = tiny();
    cfg.passes = {1};
    EXPECT_THROW(run_benchmark(cfg), UsageError);
}

TEST(Bench, FailingCellIsRecorded) {
    auto cfg = tiny();
    cfg.seeds = {0};
    cfg.passes = {2};
    cfg.pipeline.encoder.patch = 15;  // frames are not divisible
    const auto rows = run_benchmark(cfg);
    ASSERT_EQ(rows.size(), 4u);
    for (const auto& r : rows) EXPECT_FALSE(r.error.empty());
    EXPECT_NE(bench_csv_row(rows[0]).find("frame 0"), std::string::npos);
}

TEST(Suites, ParseAndScenes) {
    EXPECT_EQ(parse_suite("ring"), SuiteKind::ring);
    EXPECT_THROW(parse_suite("blob"), UsageError);
    const auto a = suite_scene(SuiteKind::disk, 3, 90);
    const auto b = suite_scene(SuiteKind::disk, 3, 90);
    EXPECT_EQ(a.start_x, b.start_x);
    EXPECT_NE(a.start_x, suite_scene(SuiteKind::disk, 4, 90).start_x);
}
