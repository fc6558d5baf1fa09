#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "drnet/errors.hpp"

namespace drnet {

using Rng = std::mt19937_64;

// Decorrelated sub-seed for stream `stream` of a run seeded with `seed`.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);

struct ClipShape {
    std::uint32_t frames = 0;   // T
    std::uint32_t channels = 0; // C
    std::uint32_t height = 0;   // H
    std::uint32_t width = 0;    // W

    std::size_t frame_size() const { return std::size_t(channels) * height * width; }
    std::size_t clip_size() const { return frame_size() * frames; }
    bool operator==(const ClipShape&) const = default;
};

enum class PixelType : std::uint8_t { uint8 = 0, float32 = 1 };

// One video: T frames stored contiguously, frame-major then channel-major then
// row-major. Pixel values lie in [0,1].
struct VideoClip {
    std::vector<float> pixels;
    std::uint32_t content_label = 0;
    std::uint32_t clip_id = 0;

    bool operator==(const VideoClip&) const = default;
};

struct DatasetMetadata {
    std::string generator;
    std::uint64_t seed = 0;
    nlohmann::json params = nlohmann::json::object();
    std::vector<std::string> class_names;

    bool operator==(const DatasetMetadata&) const = default;
};

class ClipDataset {
public:
    ClipDataset() = default;
    ClipDataset(ClipShape shape, std::uint32_t num_classes, PixelType dtype = PixelType::uint8);

    const ClipShape& shape() const { return shape_; }
    std::uint32_t num_classes() const { return num_classes_; }
    PixelType pixel_type() const { return dtype_; }
    std::size_t size() const { return clips_.size(); }
    bool empty() const { return clips_.empty(); }

    const std::vector<VideoClip>& clips() const { return clips_; }
    const VideoClip& clip(std::size_t i) const { return clips_.at(i); }
    std::span<const float> frame(std::size_t clip, std::size_t t) const;

    // Validates the clip against the dataset invariants before appending.
    void add_clip(VideoClip clip);

    DatasetMetadata metadata;

    bool operator==(const ClipDataset&) const = default;

private:
    ClipShape shape_;
    std::uint32_t num_classes_ = 0;
    PixelType dtype_ = PixelType::uint8;
    std::vector<VideoClip> clips_;
};

// A subset of clips (re-numbered from zero), e.g. for train/test splits.
ClipDataset subset(const ClipDataset& dataset, std::span<const std::size_t> clip_indices);

// ---------------------------------------------------------------------------
// Glyphs and generators
// ---------------------------------------------------------------------------

inline constexpr int kGlyphSize = 28;

struct Glyph {
    std::array<std::uint8_t, kGlyphSize * kGlyphSize> pixels{};
};

// Digit glyphs grouped by digit value. The built-in bank holds one rasterized
// glyph per digit; an MNIST bank holds every training image.
class GlyphBank {
public:
    static GlyphBank builtin();
    // Reads an idx3-ubyte image file and the matching idx1-ubyte label file.
    static GlyphBank load_mnist(const std::filesystem::path& images, const std::filesystem::path& labels);

    const std::vector<Glyph>& digit(int d) const { return glyphs_.at(d); }
    std::string source() const { return source_; }

private:
    std::array<std::vector<Glyph>, 10> glyphs_;
    std::string source_;
};

struct Rgb {
    std::uint8_t r = 0, g = 0, b = 0;
    bool operator==(const Rgb&) const = default;
};

std::vector<Rgb> default_palette();

enum class MotionRegime { bounce, orbit, fixed };

struct MovingDigitsParams {
    std::vector<Rgb> palette = default_palette();
    std::vector<int> digit_pool = {0, 1, 2, 3, 4, 5, 6, 7, 8, 9};
    int canvas = 64;
    double min_speed = 1.0;
    double max_speed = 3.0;
    MotionRegime motion = MotionRegime::bounce;
};

// Position/velocity of one glyph's top-left corner along one axis.
struct AxisState {
    double pos = 0.0;
    double vel = 0.0;
};

// Advances one axis by one frame, reflecting off [0, limit].
AxisState step_bounce(AxisState s, double limit);

// Class id of an ordered (digit_a, digit_b, color_a, color_b) combination,
// canonicalized so that digit_a carries the lower palette index.
std::uint32_t moving_digits_label(int digit_a_slot, int digit_b_slot, int color_a, int color_b,
                                  int pool_size, int palette_size);
std::uint32_t moving_digits_num_classes(int pool_size, int palette_size);

ClipDataset gen_moving_digits(std::size_t num_clips, std::size_t frames_per_clip, std::uint64_t seed,
                              const MovingDigitsParams& params = {},
                              const GlyphBank& glyphs = GlyphBank::builtin());

// Moving digits whose label is the motion regime (bounce, orbit, fixed) rather
// than the digit identity. Used to train the action classifier.
ClipDataset gen_motion_regimes(std::size_t num_clips, std::size_t frames_per_clip, std::uint64_t seed,
                               const MovingDigitsParams& params = {},
                               const GlyphBank& glyphs = GlyphBank::builtin());

struct RotatingShapesParams {
    int canvas = 64;
    // Per-frame azimuth increment range in degrees.
    double min_increment = 5.0;
    double max_increment = 30.0;
};

std::string shape_name(int shape_class);

// Renders one shape class at the given azimuth into a canvas x canvas
// grayscale frame with values in [0,1].
std::vector<float> render_shape(int shape_class, double azimuth_deg, int canvas);

ClipDataset gen_rotating_shapes(std::size_t num_clips, std::size_t frames_per_clip, std::size_t num_shape_classes,
                                std::uint64_t seed, const RotatingShapesParams& params = {});

// ---------------------------------------------------------------------------
// Pair sampling
// ---------------------------------------------------------------------------

struct FramePairSample {
    std::size_t clip = 0;
    std::size_t t = 0;
    std::size_t offset_k = 0;
    std::span<const float> x_t;
    std::span<const float> x_tk;
};

struct PosePairFrames {
    FramePairSample same;       // (x_i^t, x_i^{t+k})
    std::size_t cross_clip = 0; // j != i
    std::span<const float> cross_frame; // x_j^{t+k}
};

FramePairSample sample_frame_pair(const ClipDataset& dataset, std::size_t max_offset, Rng& rng);
PosePairFrames sample_pose_pair_frames(const ClipDataset& dataset, std::size_t max_offset, Rng& rng);

// ---------------------------------------------------------------------------
// Clip container
// ---------------------------------------------------------------------------

void write_clipset(const ClipDataset& dataset, const std::filesystem::path& path);
ClipDataset read_clipset(const std::filesystem::path& path);

std::filesystem::path manifest_path(const std::filesystem::path& container);

} // namespace drnet
