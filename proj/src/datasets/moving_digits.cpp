#include <algorithm>
#include <cmath>
#include <numbers>
#include <set>

#include "drnet/datasets.hpp"
#include "seeding.hpp"

namespace drnet {

namespace {

struct DigitTrack {
    int slot = 0;  // index into the digit pool
    int color = 0; // index into the palette
    const Glyph* glyph = nullptr;
    AxisState x, y;
    // orbit regime
    double cx = 0, cy = 0, radius = 0, phase = 0, omega = 0;
};

void validate(std::size_t num_clips, std::size_t frames, const MovingDigitsParams& p) {
    if (num_clips < 1) throw ConfigError("num_clips must be >= 1");
    if (frames < 2) throw ConfigError("frames_per_clip must be >= 2");
    std::set<std::uint32_t> distinct;
    for (const auto& c : p.palette) distinct.insert((std::uint32_t(c.r) << 16) | (std::uint32_t(c.g) << 8) | c.b);
    if (distinct.size() < 2) throw ConfigError("palette needs at least 2 distinct colors");
    if (distinct.size() != p.palette.size()) throw ConfigError("palette colors must be distinct");
    if (p.digit_pool.empty()) throw ConfigError("digit pool is empty");
    for (int d : p.digit_pool)
        if (d < 0 || d > 9) throw ConfigError("digit pool entries must be in [0,9]");
    if (p.canvas < kGlyphSize) throw ConfigError("canvas must be at least 28 pixels");
    if (!(p.min_speed >= 0.0 && p.min_speed <= p.max_speed)) throw ConfigError("invalid speed range");
}

double limit_of(const MovingDigitsParams& p) { return double(p.canvas - kGlyphSize); }

DigitTrack init_track(int slot, int color, const GlyphBank& glyphs, const MovingDigitsParams& p, Rng& rng) {
    DigitTrack d;
    d.slot = slot;
    d.color = color;
    const auto& options = glyphs.digit(p.digit_pool[slot]);
    d.glyph = &options[std::uniform_int_distribution<std::size_t>(0, options.size() - 1)(rng)];

    const double limit = limit_of(p);
    std::uniform_real_distribution<double> pos(0.0, limit);
    std::uniform_real_distribution<double> speed(p.min_speed, p.max_speed);
    std::bernoulli_distribution flip(0.5);
    d.x = {pos(rng), speed(rng) * (flip(rng) ? -1.0 : 1.0)};
    d.y = {pos(rng), speed(rng) * (flip(rng) ? -1.0 : 1.0)};

    d.radius = std::uniform_real_distribution<double>(0.15 * limit, 0.45 * limit)(rng);
    d.cx = std::uniform_real_distribution<double>(d.radius, limit - d.radius)(rng);
    d.cy = std::uniform_real_distribution<double>(d.radius, limit - d.radius)(rng);
    d.phase = std::uniform_real_distribution<double>(0.0, 2.0 * std::numbers::pi)(rng);
    d.omega = std::uniform_real_distribution<double>(0.25, 0.5)(rng) * (flip(rng) ? -1.0 : 1.0);
    return d;
}

std::pair<int, int> position_at(const DigitTrack& d, MotionRegime regime, std::size_t t, const AxisState& x,
                                const AxisState& y, double limit) {
    double px = x.pos, py = y.pos;
    if (regime == MotionRegime::orbit) {
        const double a = d.phase + d.omega * double(t);
        px = d.cx + d.radius * std::cos(a);
        py = d.cy + d.radius * std::sin(a);
    }
    const auto snap = [limit](double v) { return int(std::clamp(std::lround(v), 0L, long(limit))); };
    return {snap(px), snap(py)};
}

void composite(std::vector<float>& frame, int canvas, const Glyph& glyph, const Rgb& color, int px, int py) {
    const std::uint8_t rgb[3] = {color.r, color.g, color.b};
    const std::size_t plane = std::size_t(canvas) * canvas;
    for (int gy = 0; gy < kGlyphSize; ++gy)
        for (int gx = 0; gx < kGlyphSize; ++gx) {
            const int g = glyph.pixels[gy * kGlyphSize + gx];
            if (g == 0) continue;
            const std::size_t idx = std::size_t(py + gy) * canvas + (px + gx);
            for (int c = 0; c < 3; ++c) {
                const int v = (g * rgb[c] + 127) / 255;
                float& dst = frame[c * plane + idx];
                dst = std::max(dst, float(v) / 255.0f);
            }
        }
}

VideoClip make_clip(std::uint32_t id, std::size_t frames, std::uint64_t seed, const MovingDigitsParams& p,
                    MotionRegime regime, const GlyphBank& glyphs, std::uint32_t label_override, bool use_override) {
    Rng rng(detail::mix_seed(seed, id));
    const int nd = int(p.digit_pool.size());
    const int nc = int(p.palette.size());
    std::uniform_int_distribution<int> pick_slot(0, nd - 1);
    const int slot_a = pick_slot(rng);
    const int slot_b = pick_slot(rng);
    int color_a = std::uniform_int_distribution<int>(0, nc - 1)(rng);
    int color_b = std::uniform_int_distribution<int>(0, nc - 2)(rng);
    if (color_b >= color_a) ++color_b;

    std::array<DigitTrack, 2> tracks = {init_track(slot_a, color_a, glyphs, p, rng),
                                        init_track(slot_b, color_b, glyphs, p, rng)};

    const int canvas = p.canvas;
    const double limit = limit_of(p);
    const std::size_t frame_size = std::size_t(3) * canvas * canvas;

    VideoClip clip;
    clip.clip_id = id;
    clip.content_label = use_override ? label_override : moving_digits_label(slot_a, slot_b, color_a, color_b, nd, nc);
    clip.pixels.assign(frame_size * frames, 0.0f);

    for (std::size_t t = 0; t < frames; ++t) {
        std::vector<float> frame(frame_size, 0.0f);
        for (auto& d : tracks) {
            const auto [px, py] = position_at(d, regime, t, d.x, d.y, limit);
            composite(frame, canvas, *d.glyph, p.palette[d.color], px, py);
            if (regime == MotionRegime::bounce) {
                d.x = step_bounce(d.x, limit);
                d.y = step_bounce(d.y, limit);
            }
        }
        std::copy(frame.begin(), frame.end(), clip.pixels.begin() + t * frame_size);
    }
    return clip;
}

nlohmann::json params_json(const MovingDigitsParams& p, const GlyphBank& glyphs) {
    nlohmann::json palette = nlohmann::json::array();
    for (const auto& c : p.palette) palette.push_back(detail::hex_color(c));
    static const char* regimes[] = {"bounce", "orbit", "fixed"};
    return {{"canvas", p.canvas},        {"palette", palette},         {"digit_pool", p.digit_pool},
            {"min_speed", p.min_speed}, {"max_speed", p.max_speed},   {"motion", regimes[int(p.motion)]},
            {"glyphs", glyphs.source()}};
}

} // namespace

std::vector<Rgb> default_palette() {
    return {{255, 0, 0}, {0, 255, 0}, {0, 0, 255}, {255, 255, 0}, {255, 0, 255}, {0, 255, 255}};
}

AxisState step_bounce(AxisState s, double limit) {
    s.pos += s.vel;
    if (s.pos > limit) {
        s.pos = 2.0 * limit - s.pos;
        s.vel = -s.vel;
    } else if (s.pos < 0.0) {
        s.pos = -s.pos;
        s.vel = -s.vel;
    }
    // Speeds above the limit could overshoot twice; clamp keeps the box inside.
    s.pos = std::clamp(s.pos, 0.0, limit);
    return s;
}

std::uint32_t moving_digits_label(int slot_a, int slot_b, int color_a, int color_b, int pool_size,
                                  int palette_size) {
    if (color_a == color_b) throw ConfigError("digits in one clip must have distinct colors");
    if (color_a > color_b) {
        std::swap(slot_a, slot_b);
        std::swap(color_a, color_b);
    }
    const int nc = palette_size;
    const int pair = color_a * nc - color_a * (color_a + 1) / 2 + (color_b - color_a - 1);
    const int pairs = nc * (nc - 1) / 2;
    return std::uint32_t((slot_a * pool_size + slot_b) * pairs + pair);
}

std::uint32_t moving_digits_num_classes(int pool_size, int palette_size) {
    return std::uint32_t(pool_size * pool_size * (palette_size * (palette_size - 1) / 2));
}

ClipDataset gen_moving_digits(std::size_t num_clips, std::size_t frames_per_clip, std::uint64_t seed,
                              const MovingDigitsParams& params, const GlyphBank& glyphs) {
    validate(num_clips, frames_per_clip, params);
    const int nd = int(params.digit_pool.size());
    const int nc = int(params.palette.size());
    const std::uint32_t classes = moving_digits_num_classes(nd, nc);

    ClipDataset ds({std::uint32_t(frames_per_clip), 3, std::uint32_t(params.canvas), std::uint32_t(params.canvas)},
                   classes);
    for (std::size_t i = 0; i < num_clips; ++i)
        ds.add_clip(make_clip(std::uint32_t(i), frames_per_clip, seed, params, params.motion, glyphs, 0, false));

    ds.metadata.generator = "moving-digits";
    ds.metadata.seed = seed;
    ds.metadata.params = params_json(params, glyphs);
    ds.metadata.class_names.resize(classes);
    for (int a = 0; a < nd; ++a)
        for (int b = 0; b < nd; ++b)
            for (int ca = 0; ca < nc; ++ca)
                for (int cb = ca + 1; cb < nc; ++cb)
                    ds.metadata.class_names[moving_digits_label(a, b, ca, cb, nd, nc)] =
                        std::to_string(params.digit_pool[a]) + "@" + detail::hex_color(params.palette[ca]) + "+" +
                        std::to_string(params.digit_pool[b]) + "@" + detail::hex_color(params.palette[cb]);
    return ds;
}

ClipDataset gen_motion_regimes(std::size_t num_clips, std::size_t frames_per_clip, std::uint64_t seed,
                               const MovingDigitsParams& params, const GlyphBank& glyphs) {
    validate(num_clips, frames_per_clip, params);
    ClipDataset ds({std::uint32_t(frames_per_clip), 3, std::uint32_t(params.canvas), std::uint32_t(params.canvas)}, 3);
    Rng regime_rng(detail::mix_seed(seed, ~0ULL));
    std::uniform_int_distribution<int> pick(0, 2);
    for (std::size_t i = 0; i < num_clips; ++i) {
        const int regime = pick(regime_rng);
        ds.add_clip(make_clip(std::uint32_t(i), frames_per_clip, seed, params, MotionRegime(regime), glyphs,
                              std::uint32_t(regime), true));
    }
    ds.metadata.generator = "motion-regimes";
    ds.metadata.seed = seed;
    ds.metadata.params = params_json(params, glyphs);
    ds.metadata.params.erase("motion");
    ds.metadata.class_names = {"bounce", "orbit", "fixed"};
    return ds;
}

} // namespace drnet
