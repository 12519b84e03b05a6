#include <gtest/gtest.h>

#include <cmath>

#include "prunekit/memory.hpp"
#include "prunekit/bench.hpp"
#include "prunekit/scene.hpp"

using namespace prunekit;

TEST(Scene, DiskLinearMotionShapesAndArea) {
    SceneConfig c;
    c.shape = ShapeKind::disk;
    const auto v = generate_scene(c);
    ASSERT_EQ(v.frames.size(), 90u);
    ASSERT_EQ(v.gt_masks.size(), 90u);
    const double a0 = static_cast<double>(v.gt_masks[0]->count());
    EXPECT_NEAR(a0, M_PI * c.size * c.size, 0.02 * a0);
    for (const auto& m : v.gt_masks) {
        ASSERT_TRUE(m.has_value());
        EXPECT_EQ(m->height, 224);
        EXPECT_NEAR(static_cast<double>(m->count()), a0, 0.01 * a0);
    }
    for (const auto& f : v.frames) {
        for (double p : f.pixels) {
            ASSERT_GE(p, 0.0);
            ASSERT_LE(p, 1.0);
        }
    }
}

TEST(Scene, SameSeedIsBitIdentical) {
    SceneConfig c;
    c.n_frames = 5;
    c.seed = 4;
    const auto a = generate_scene(c);
    const auto b = generate_scene(c);
    EXPECT_EQ(a.frames, b.frames);
    EXPECT_EQ(a.gt_masks, b.gt_masks);
    c.seed = 5;
    EXPECT_NE(generate_scene(c).frames, a.frames);
}

TEST(Scene, RingCentroidOffMaskClickOnMask) {
    SceneConfig c;
    c.shape = ShapeKind::ring;
    c.n_frames = 1;
    const auto v = generate_scene(c);
    const auto& m = *v.gt_masks[0];
    double sx = 0, sy = 0;
    for (int y = 0; y < m.height; ++y) {
        for (int x = 0; x < m.width; ++x) {
            if (m.at(y, x)) {
                sx += x;
                sy += y;
            }
        }
    }
    const double n = static_cast<double>(m.count());
    EXPECT_EQ(m.at(static_cast<int>(std::lround(sy / n)), static_cast<int>(std::lround(sx / n))), 0);
    const auto click = representative_click(m);
    EXPECT_EQ(m.at(click.y, click.x), 1);
}

TEST(Scene, NoiseBandAndValidation) {
    SceneConfig c;
    c.n_frames = 1;
    const auto v = generate_scene(c);
    EXPECT_LT(v.band_row_begin, v.band_row_end);
    c.noise_band = false;
    const auto w = generate_scene(c);
    EXPECT_EQ(w.band_row_begin, w.band_row_end);
    c.n_frames = 0;
    EXPECT_THROW(generate_scene(c), UsageError);
    c.n_frames = 1;
    c.grid_snap = -1;
    EXPECT_THROW(generate_scene(c), UsageError);
}

TEST(Scene, EasySuiteIsTokenAligned) {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        const auto v = generate_scene(suite_scene(SuiteKind::easy, seed, 90));
        for (const auto& m : v.gt_masks) {
            // every 16x16 cell is either fully inside or fully outside
            for (int gy = 0; gy < 14; ++gy) {
                for (int gx = 0; gx < 14; ++gx) {
                    int c = 0;
                    for (int y = 0; y < 16; ++y) {
                        for (int x = 0; x < 16; ++x) c += m->at(gy * 16 + y, gx * 16 + x);
                    }
                    ASSERT_TRUE(c == 0 || c == 256) << "seed " << seed;
                }
            }
        }
    }
}
