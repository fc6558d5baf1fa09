#include <cmath>
#include <numbers>

#include "drnet/datasets.hpp"
#include "seeding.hpp"

namespace drnet {

namespace {

constexpr int kSuper = 4; // supersamples per axis
constexpr double kAngleQuantum = 1.0 / 256.0; // degrees; keeps t * increment exact

bool inside_regular_polygon(double x, double y, int sides, double radius) {
    // Vertex k sits at angle 90deg + k * 360/sides.
    for (int k = 0; k < sides; ++k) {
        const double a0 = std::numbers::pi / 2 + 2 * std::numbers::pi * k / sides;
        const double a1 = std::numbers::pi / 2 + 2 * std::numbers::pi * (k + 1) / sides;
        const double x0 = radius * std::cos(a0), y0 = radius * std::sin(a0);
        const double x1 = radius * std::cos(a1), y1 = radius * std::sin(a1);
        if ((x1 - x0) * (y - y0) - (y1 - y0) * (x - x0) < 0) return false;
    }
    return true;
}

bool inside_shape(int shape_class, double x, double y, double radius) {
    switch (shape_class) {
    case 0: { // square
        const double h = 0.7 * radius;
        return std::abs(x) <= h && std::abs(y) <= h;
    }
    case 1: return inside_regular_polygon(x, y, 3, radius);
    case 2: { // ellipse, 2:1 so that rotation is visible
        const double a = radius, b = 0.5 * radius;
        return (x * x) / (a * a) + (y * y) / (b * b) <= 1.0;
    }
    case 3: { // cross with one long arm so that it has no 90deg symmetry
        const double w = 0.25 * radius;
        return (std::abs(y) <= w && x >= -0.6 * radius && x <= radius) || (std::abs(x) <= w && std::abs(y) <= 0.6 * radius);
    }
    default: return inside_regular_polygon(x, y, shape_class + 1, radius);
    }
}

} // namespace

std::string shape_name(int shape_class) {
    static const char* names[] = {"square", "triangle", "ellipse", "cross"};
    if (shape_class < 0) throw ConfigError("negative shape class");
    if (shape_class < 4) return names[shape_class];
    return "polygon" + std::to_string(shape_class + 1);
}

std::vector<float> render_shape(int shape_class, double azimuth_deg, int canvas) {
    if (canvas < 8) throw ConfigError("canvas too small");
    double deg = std::fmod(azimuth_deg, 360.0);
    if (deg < 0.0) deg += 360.0;
    const double theta = deg * std::numbers::pi / 180.0;
    const double c = std::cos(theta), s = std::sin(theta);
    const double centre = canvas / 2.0;
    const double radius = 0.35 * canvas;

    std::vector<float> frame(std::size_t(canvas) * canvas);
    for (int py = 0; py < canvas; ++py)
        for (int px = 0; px < canvas; ++px) {
            int hits = 0;
            for (int sy = 0; sy < kSuper; ++sy)
                for (int sx = 0; sx < kSuper; ++sx) {
                    const double x = px + (sx + 0.5) / kSuper - centre;
                    const double y = centre - (py + (sy + 0.5) / kSuper);
                    // rotate the sample point by -theta into shape coordinates
                    const double lx = c * x + s * y;
                    const double ly = -s * x + c * y;
                    hits += inside_shape(shape_class, lx, ly, radius);
                }
            const int level = (hits * 255 + kSuper * kSuper / 2) / (kSuper * kSuper);
            frame[std::size_t(py) * canvas + px] = float(level) / 255.0f;
        }
    return frame;
}

ClipDataset gen_rotating_shapes(std::size_t num_clips, std::size_t frames_per_clip, std::size_t num_shape_classes,
                                std::uint64_t seed, const RotatingShapesParams& params) {
    if (num_clips < 1) throw ConfigError("num_clips must be >= 1");
    if (frames_per_clip < 2) throw ConfigError("frames_per_clip must be >= 2");
    if (num_shape_classes < 2) throw ConfigError("num_shape_classes must be >= 2");
    if (!(params.min_increment >= 0.0 && params.min_increment <= params.max_increment))
        throw ConfigError("invalid azimuth increment range");

    const int canvas = params.canvas;
    ClipDataset ds({std::uint32_t(frames_per_clip), 1, std::uint32_t(canvas), std::uint32_t(canvas)},
                   std::uint32_t(num_shape_classes));
    const auto quantize = [](double deg) { return std::round(deg / kAngleQuantum) * kAngleQuantum; };

    for (std::size_t i = 0; i < num_clips; ++i) {
        Rng rng(detail::mix_seed(seed, i));
        const int cls = std::uniform_int_distribution<int>(0, int(num_shape_classes) - 1)(rng);
        const double start = quantize(std::uniform_real_distribution<double>(0.0, 360.0)(rng));
        double inc = quantize(std::uniform_real_distribution<double>(params.min_increment, params.max_increment)(rng));
        if (std::bernoulli_distribution(0.5)(rng)) inc = -inc;

        VideoClip clip;
        clip.clip_id = std::uint32_t(i);
        clip.content_label = std::uint32_t(cls);
        clip.pixels.reserve(ds.shape().clip_size());
        for (std::size_t t = 0; t < frames_per_clip; ++t) {
            const auto frame = render_shape(cls, start + double(t) * inc, canvas);
            clip.pixels.insert(clip.pixels.end(), frame.begin(), frame.end());
        }
        ds.add_clip(std::move(clip));
    }

    ds.metadata.generator = "rotating-shapes";
    ds.metadata.seed = seed;
    ds.metadata.params = {{"canvas", canvas},
                          {"min_increment", params.min_increment},
                          {"max_increment", params.max_increment},
                          {"num_shape_classes", num_shape_classes}};
    for (std::size_t c = 0; c < num_shape_classes; ++c) ds.metadata.class_names.push_back(shape_name(int(c)));
    return ds;
}

} // namespace drnet
