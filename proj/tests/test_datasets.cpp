#include <algorithm>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>

#include <gtest/gtest.h>

#include "drnet/datasets.hpp"
#include "test_util.hpp"

using namespace drnet;

namespace {

struct Box {
    int x0 = 1 << 30, y0 = 1 << 30, x1 = -1, y1 = -1;
    bool empty() const { return x1 < 0; }
    int w() const { return x1 - x0 + 1; }
    int h() const { return y1 - y0 + 1; }
};

Box ink_box(const Glyph& g) {
    Box b;
    for (int y = 0; y < kGlyphSize; ++y)
        for (int x = 0; x < kGlyphSize; ++x)
            if (g.pixels[y * kGlyphSize + x]) {
                b.x0 = std::min(b.x0, x), b.x1 = std::max(b.x1, x);
                b.y0 = std::min(b.y0, y), b.y1 = std::max(b.y1, y);
            }
    return b;
}

Box channel_box(std::span<const float> frame, int channel, int canvas) {
    Box b;
    const auto plane = std::size_t(canvas) * canvas;
    for (int y = 0; y < canvas; ++y)
        for (int x = 0; x < canvas; ++x)
            if (frame[channel * plane + std::size_t(y) * canvas + x] > 0.0f) {
                b.x0 = std::min(b.x0, x), b.x1 = std::max(b.x1, x);
                b.y0 = std::min(b.y0, y), b.y1 = std::max(b.y1, y);
            }
    return b;
}

} // namespace

TEST(MovingDigits, SingleClipShapeAndColors) {
    const auto ds = gen_moving_digits(1, 2, 7);
    ASSERT_EQ(ds.size(), 1u);
    EXPECT_EQ(ds.shape(), (ClipShape{2, 3, 64, 64}));
    for (float v : ds.clip(0).pixels) {
        ASSERT_GE(v, 0.0f);
        ASSERT_LE(v, 1.0f);
    }
}

TEST(MovingDigits, SameSeedIsBitwiseIdentical) {
    EXPECT_EQ(gen_moving_digits(6, 10, 7), gen_moving_digits(6, 10, 7));
    EXPECT_NE(gen_moving_digits(6, 10, 7).clips(), gen_moving_digits(6, 10, 8).clips());
    EXPECT_EQ(gen_rotating_shapes(3, 5, 4, 2), gen_rotating_shapes(3, 5, 4, 2));
}

TEST(MovingDigits, RejectsBadArguments) {
    MovingDigitsParams p;
    p.palette = {{255, 0, 0}};
    EXPECT_THROW(gen_moving_digits(1, 4, 1, p), ConfigError);
    EXPECT_THROW(gen_moving_digits(1, 1, 1), ConfigError);
}

TEST(StepBounce, ReflectsAtRightBorder) {
    const auto s = step_bounce({35.0, 2.0}, 36.0);
    EXPECT_DOUBLE_EQ(s.pos, 35.0);
    EXPECT_DOUBLE_EQ(s.vel, -2.0);
}

TEST(StepBounce, ReflectsAtLeftBorder) {
    const auto s = step_bounce({0.5, -2.0}, 36.0);
    EXPECT_DOUBLE_EQ(s.pos, 1.5);
    EXPECT_DOUBLE_EQ(s.vel, 2.0);
}

TEST(StepBounce, StaysInsideForAnyStartAndSpeed) {
    Rng rng(3);
    std::uniform_real_distribution<double> pos(0.0, 36.0), vel(-3.0, 3.0);
    for (int i = 0; i < 20000; ++i) {
        AxisState s{pos(rng), vel(rng)};
        for (int t = 0; t < 5; ++t) {
            s = step_bounce(s, 36.0);
            ASSERT_GE(s.pos, 0.0);
            ASSERT_LE(s.pos, 36.0);
        }
    }
}

TEST(MovingDigits, EachDigitStaysFullyInsideTheCanvas) {
    // One digit per pure colour channel: a clipped glyph would shrink its ink box.
    MovingDigitsParams p;
    p.palette = {{255, 0, 0}, {0, 255, 0}};
    p.digit_pool = {8};
    p.max_speed = 6.0;
    const auto glyph = ink_box(GlyphBank::builtin().digit(8).front());
    const auto ds = gen_moving_digits(20, 40, 11, p);
    for (std::size_t c = 0; c < ds.size(); ++c)
        for (std::size_t t = 0; t < ds.shape().frames; ++t)
            for (int ch = 0; ch < 2; ++ch) {
                const auto b = channel_box(ds.frame(c, t), ch, p.canvas);
                ASSERT_FALSE(b.empty());
                ASSERT_EQ(b.w(), glyph.w()) << "clip " << c << " frame " << t;
                ASSERT_EQ(b.h(), glyph.h()) << "clip " << c << " frame " << t;
            }
}

TEST(MovingDigits, TwoDigitsHaveDistinctPaletteColors) {
    // Primaries only, so overlapping strokes never blend into a palette colour.
    MovingDigitsParams p;
    p.palette = {{255, 0, 0}, {0, 255, 0}, {0, 0, 255}};
    const auto& palette = p.palette;
    const auto ds = gen_moving_digits(30, 10, 5, p);
    const auto plane = std::size_t(64) * 64;
    for (std::size_t c = 0; c < ds.size(); ++c) {
        std::set<std::size_t> seen;
        for (std::size_t t = 0; t < ds.shape().frames; ++t) {
            const auto f = ds.frame(c, t);
            for (std::size_t i = 0; i < plane; ++i)
                for (std::size_t k = 0; k < palette.size(); ++k)
                    if (f[i] == palette[k].r / 255.0f && f[plane + i] == palette[k].g / 255.0f &&
                        f[2 * plane + i] == palette[k].b / 255.0f)
                        seen.insert(k);
        }
        EXPECT_EQ(seen.size(), 2u) << "clip " << c;
    }
}

TEST(MovingDigits, LabelsAreCanonicalAndDense) {
    EXPECT_THROW(moving_digits_label(0, 1, 2, 2, 10, 6), ConfigError);
    EXPECT_EQ(moving_digits_label(3, 5, 1, 4, 10, 6), moving_digits_label(5, 3, 4, 1, 10, 6));
    std::set<std::uint32_t> labels;
    for (int a = 0; a < 3; ++a)
        for (int b = 0; b < 3; ++b)
            for (int ca = 0; ca < 4; ++ca)
                for (int cb = 0; cb < 4; ++cb)
                    if (ca != cb) labels.insert(moving_digits_label(a, b, ca, cb, 3, 4));
    EXPECT_EQ(labels.size(), moving_digits_num_classes(3, 4));
    EXPECT_EQ(*labels.rbegin(), moving_digits_num_classes(3, 4) - 1);
    const auto ds = gen_moving_digits(50, 2, 9);
    for (const auto& clip : ds.clips()) EXPECT_LT(clip.content_label, ds.num_classes());
}

TEST(RotatingShapes, ShapeContract) {
    const auto ds = gen_rotating_shapes(4, 8, 4, 1);
    ASSERT_EQ(ds.size(), 4u);
    EXPECT_EQ(ds.shape().frames, 8u);
    std::set<std::uint32_t> labels;
    for (const auto& c : ds.clips()) labels.insert(c.content_label);
    EXPECT_GE(labels.size(), 2u);
    EXPECT_THROW(gen_rotating_shapes(4, 8, 1, 1), ConfigError);
}

TEST(RotatingShapes, ZeroIncrementGivesIdenticalFrames) {
    RotatingShapesParams p;
    p.min_increment = p.max_increment = 0.0;
    const auto ds = gen_rotating_shapes(3, 6, 4, 2, p);
    for (std::size_t c = 0; c < ds.size(); ++c)
        for (std::size_t t = 1; t < 6; ++t) {
            const auto a = ds.frame(c, 0), b = ds.frame(c, t);
            ASSERT_TRUE(std::equal(a.begin(), a.end(), b.begin()));
        }
}

TEST(RotatingShapes, FullRevolutionReturnsToFirstFrame) {
    constexpr std::size_t T = 8;
    RotatingShapesParams p;
    p.min_increment = p.max_increment = 360.0 / T;
    const auto clip = gen_rotating_shapes(5, T, 4, 3, p);
    const auto extended = gen_rotating_shapes(5, T + 1, 4, 3, p);
    for (std::size_t c = 0; c < clip.size(); ++c) {
        const auto first = clip.frame(c, 0), next = extended.frame(c, T);
        EXPECT_TRUE(std::equal(first.begin(), first.end(), next.begin())) << "clip " << c;
        const auto second = clip.frame(c, 1);
        EXPECT_FALSE(std::equal(first.begin(), first.end(), second.begin())) << "clip " << c;
    }
}

TEST(Sampling, ZeroOffsetReturnsOneFrame) {
    const auto ds = gen_moving_digits(3, 6, 1);
    Rng rng(1);
    for (int i = 0; i < 100; ++i) {
        const auto s = sample_frame_pair(ds, 0, rng);
        EXPECT_EQ(s.offset_k, 0u);
        EXPECT_EQ(s.x_t.data(), s.x_tk.data());
    }
}

TEST(Sampling, MaximalOffsetPinsStart) {
    const auto ds = gen_moving_digits(2, 5, 1);
    Rng rng(2);
    int hits = 0;
    for (int i = 0; i < 2000; ++i) {
        const auto s = sample_frame_pair(ds, 4, rng);
        if (s.offset_k == 4) {
            ++hits;
            EXPECT_EQ(s.t, 0u);
        }
        EXPECT_LT(s.t + s.offset_k, 5u);
        EXPECT_EQ(s.x_t.data(), ds.frame(s.clip, s.t).data());
        EXPECT_EQ(s.x_tk.data(), ds.frame(s.clip, s.t + s.offset_k).data());
    }
    EXPECT_GT(hits, 0);
    EXPECT_THROW(sample_frame_pair(ds, 5, rng), ConfigError);
}

TEST(Sampling, OffsetIsUniform) {
    const auto ds = gen_moving_digits(2, 10, 1);
    Rng rng(4);
    std::array<int, 4> counts{};
    constexpr int draws = 10000;
    for (int i = 0; i < draws; ++i) ++counts.at(sample_frame_pair(ds, 3, rng).offset_k);
    for (int c : counts) EXPECT_NEAR(c / double(draws), 0.25, 0.02);
}

TEST(Sampling, CrossClipWithTwoClipsIsTheOther) {
    const auto ds = gen_moving_digits(2, 6, 1);
    Rng rng(5);
    for (int i = 0; i < 200; ++i) {
        const auto p = sample_pose_pair_frames(ds, 3, rng);
        EXPECT_NE(p.cross_clip, p.same.clip);
        EXPECT_EQ(p.cross_frame.data(), ds.frame(p.cross_clip, p.same.t + p.same.offset_k).data());
    }
    const auto one = gen_moving_digits(1, 6, 1);
    EXPECT_THROW(sample_pose_pair_frames(one, 3, rng), SamplingError);
}

TEST(Sampling, CrossClipPartnerIsUniform) {
    const auto ds = gen_moving_digits(10, 4, 1);
    Rng rng(6);
    // Per anchor clip, the partner must be uniform over the other nine.
    std::map<std::size_t, std::map<std::size_t, int>> counts;
    std::map<std::size_t, int> totals;
    constexpr int draws = 20000;
    for (int i = 0; i < draws; ++i) {
        const auto p = sample_pose_pair_frames(ds, 2, rng);
        ASSERT_NE(p.cross_clip, p.same.clip);
        ++counts[p.same.clip][p.cross_clip];
        ++totals[p.same.clip];
    }
    for (const auto& [anchor, partners] : counts) {
        EXPECT_EQ(partners.size(), 9u);
        for (const auto& [j, n] : partners) EXPECT_NEAR(n / double(totals[anchor]), 1.0 / 9.0, 0.05);
    }

    // Pooled over anchors with the spec's 1,000 draws.
    std::map<std::size_t, int> offsets;
    for (int i = 0; i < 1000; ++i) {
        const auto p = sample_pose_pair_frames(ds, 2, rng);
        ++offsets[(p.cross_clip + 10 - p.same.clip) % 10];
    }
    EXPECT_EQ(offsets.count(0), 0u);
    for (const auto& [d, n] : offsets) EXPECT_NEAR(n / 1000.0, 1.0 / 9.0, 0.05);
}

TEST(Container, RoundTripIsBitwise) {
    const test::TempDir dir;
    const auto ds = gen_moving_digits(4, 5, 3);
    write_clipset(ds, dir / "a.drcs");
    EXPECT_EQ(read_clipset(dir / "a.drcs"), ds);

    ClipDataset floats({3, 1, 4, 4}, 2, PixelType::float32);
    Rng rng(1);
    std::uniform_real_distribution<float> u(0.0f, 1.0f);
    for (std::uint32_t i = 0; i < 3; ++i) {
        VideoClip c;
        c.clip_id = i;
        c.content_label = i % 2;
        for (int k = 0; k < 48; ++k) c.pixels.push_back(u(rng));
        floats.add_clip(c);
    }
    write_clipset(floats, dir / "f.drcs");
    EXPECT_EQ(read_clipset(dir / "f.drcs"), floats);
}

TEST(Container, CorruptionIsReported) {
    const test::TempDir dir;
    const auto path = dir / "c.drcs";
    write_clipset(gen_moving_digits(2, 3, 1), path);
    auto bytes = test::read_bytes(path);

    const auto expect_error = [&](std::string data, const std::string& what) {
        const auto bad = dir / "bad.drcs";
        test::write_bytes(bad, data);
        try {
            read_clipset(bad);
            ADD_FAILURE() << "expected " << what;
        } catch (const FormatError& e) {
            EXPECT_NE(std::string(e.what()).find(what), std::string::npos) << e.what();
        }
    };

    auto magic = bytes;
    magic[0] = 'X';
    expect_error(magic, "bad magic");

    auto version = bytes;
    version[4] = 9;
    expect_error(version, "version");

    auto three = bytes;
    three[8] = 3; // header claims 3 clips, payload holds 2
    expect_error(three, "truncated payload");

    expect_error(bytes.substr(0, 20), "truncated header");
    expect_error(bytes + "x", "trailing bytes");
}
