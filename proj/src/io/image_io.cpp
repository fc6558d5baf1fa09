#include "drnet/image_io.hpp"

#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>

#include <png.h>

#include "drnet/errors.hpp"

namespace drnet {

Image8 to_image8(const torch::Tensor& chw) {
    if (chw.dim() != 3 || (chw.size(0) != 1 && chw.size(0) != 3))
        throw ConfigError("image tensor must be [1|3, H, W]");
    const auto t = chw.detach().to(torch::kFloat32).contiguous();
    Image8 img;
    img.channels = int(t.size(0));
    img.height = int(t.size(1));
    img.width = int(t.size(2));
    img.pixels.resize(std::size_t(img.channels) * img.height * img.width);
    const float* src = t.data_ptr<float>();
    const std::size_t plane = std::size_t(img.height) * img.width;
    for (int c = 0; c < img.channels; ++c)
        for (std::size_t i = 0; i < plane; ++i) {
            const float v = std::clamp(src[c * plane + i], 0.0f, 1.0f);
            img.pixels[i * img.channels + c] = static_cast<std::uint8_t>(std::lround(v * 255.0f));
        }
    return img;
}

torch::Tensor from_image8(const Image8& img) {
    auto t = torch::empty({img.channels, img.height, img.width}, torch::kFloat32);
    float* dst = t.data_ptr<float>();
    const std::size_t plane = std::size_t(img.height) * img.width;
    for (int c = 0; c < img.channels; ++c)
        for (std::size_t i = 0; i < plane; ++i) dst[c * plane + i] = img.pixels[i * img.channels + c] / 255.0f;
    return t;
}

void write_png(const std::filesystem::path& path, const Image8& image) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    png_image png{};
    png.version = PNG_IMAGE_VERSION;
    png.width = png_uint_32(image.width);
    png.height = png_uint_32(image.height);
    png.format = image.channels == 1 ? PNG_FORMAT_GRAY : PNG_FORMAT_RGB;
    if (!png_image_write_to_file(&png, path.c_str(), 0, image.pixels.data(), 0, nullptr))
        throw FormatError("cannot write PNG " + path.string() + ": " + png.message);
}

void write_png(const std::filesystem::path& path, const torch::Tensor& chw) { write_png(path, to_image8(chw)); }

Image8 read_png(const std::filesystem::path& path) {
    png_image png{};
    png.version = PNG_IMAGE_VERSION;
    if (!png_image_begin_read_from_file(&png, path.c_str()))
        throw FormatError("cannot read PNG " + path.string() + ": " + png.message);
    const bool gray = (png.format & PNG_FORMAT_FLAG_COLOR) == 0;
    png.format = gray ? PNG_FORMAT_GRAY : PNG_FORMAT_RGB;
    Image8 img;
    img.width = int(png.width);
    img.height = int(png.height);
    img.channels = gray ? 1 : 3;
    img.pixels.resize(PNG_IMAGE_SIZE(png));
    if (!png_image_finish_read(&png, nullptr, img.pixels.data(), 0, nullptr)) {
        png_image_free(&png);
        throw FormatError("cannot decode PNG " + path.string() + ": " + png.message);
    }
    return img;
}

namespace {

class BitWriter {
public:
    void put(unsigned code, int bits) {
        acc_ |= std::uint32_t(code) << nbits_;
        nbits_ += bits;
        while (nbits_ >= 8) {
            bytes.push_back(std::uint8_t(acc_ & 0xff));
            acc_ >>= 8;
            nbits_ -= 8;
        }
    }
    void finish() {
        if (nbits_ > 0) bytes.push_back(std::uint8_t(acc_ & 0xff));
        acc_ = 0;
        nbits_ = 0;
    }
    std::vector<std::uint8_t> bytes;

private:
    std::uint32_t acc_ = 0;
    int nbits_ = 0;
};

// LZW with 8-bit minimum code size, as GIF image data.
std::vector<std::uint8_t> lzw_encode(const std::vector<std::uint8_t>& indices) {
    constexpr unsigned kClear = 256, kEnd = 257, kMaxCode = 4096;
    std::vector<std::int16_t> dict(kMaxCode * 256, -1);
    BitWriter out;
    int size = 9;
    unsigned next = 258;
    const auto reset = [&] {
        std::fill(dict.begin(), dict.end(), std::int16_t(-1));
        size = 9;
        next = 258;
    };
    out.put(kClear, size);
    if (indices.empty()) {
        out.put(kEnd, size);
        out.finish();
        return out.bytes;
    }
    unsigned prefix = indices[0];
    for (std::size_t i = 1; i < indices.size(); ++i) {
        const unsigned c = indices[i];
        const auto slot = std::size_t(prefix) * 256 + c;
        if (dict[slot] >= 0) {
            prefix = unsigned(dict[slot]);
            continue;
        }
        out.put(prefix, size);
        if (next < kMaxCode) {
            dict[slot] = std::int16_t(next);
            if (next == (1u << size) && size < 12) ++size;
            ++next;
        } else {
            out.put(kClear, size);
            reset();
        }
        prefix = c;
    }
    out.put(prefix, size);
    out.put(kEnd, size);
    out.finish();
    return out.bytes;
}

void put16(std::ofstream& os, unsigned v) {
    os.put(char(v & 0xff));
    os.put(char((v >> 8) & 0xff));
}

} // namespace

void write_gif(const std::filesystem::path& path, const std::vector<torch::Tensor>& frames, int delay_centis) {
    if (frames.empty()) throw ConfigError("GIF needs at least one frame");
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    const auto first = to_image8(frames.front());
    const bool gray = first.channels == 1;

    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw FormatError("cannot write GIF " + path.string());
    os.write("GIF89a", 6);
    put16(os, unsigned(first.width));
    put16(os, unsigned(first.height));
    os.put(char(0xF7)); // global table, 8-bit colour resolution, 256 entries
    os.put(0);
    os.put(0);
    for (int i = 0; i < 256; ++i) {
        std::array<std::uint8_t, 3> rgb{};
        if (gray) {
            rgb = {std::uint8_t(i), std::uint8_t(i), std::uint8_t(i)};
        } else if (i < 216) {
            rgb = {std::uint8_t(i / 36 * 51), std::uint8_t(i / 6 % 6 * 51), std::uint8_t(i % 6 * 51)};
        }
        os.write(reinterpret_cast<const char*>(rgb.data()), 3);
    }
    const char loop[] = {'\x21', '\xFF', '\x0B', 'N', 'E', 'T', 'S', 'C', 'A', 'P', 'E', '2', '.', '0',
                         '\x03', '\x01', '\x00', '\x00', '\x00'};
    os.write(loop, sizeof loop);

    for (const auto& f : frames) {
        const auto img = to_image8(f);
        if (img.width != first.width || img.height != first.height || img.channels != first.channels)
            throw ConfigError("GIF frames must share one shape");
        std::vector<std::uint8_t> idx(std::size_t(img.width) * img.height);
        for (std::size_t i = 0; i < idx.size(); ++i) {
            if (gray) {
                idx[i] = img.pixels[i];
            } else {
                const auto q = [&](int c) { return (img.pixels[i * 3 + c] * 5 + 127) / 255; };
                idx[i] = std::uint8_t(q(0) * 36 + q(1) * 6 + q(2));
            }
        }
        os.put('\x21');
        os.put(char(0xF9));
        os.put(4);
        os.put(0);
        put16(os, unsigned(delay_centis));
        os.put(0);
        os.put(0);

        os.put('\x2C');
        put16(os, 0);
        put16(os, 0);
        put16(os, unsigned(img.width));
        put16(os, unsigned(img.height));
        os.put(0);
        os.put(8);
        const auto data = lzw_encode(idx);
        for (std::size_t i = 0; i < data.size(); i += 255) {
            const auto n = std::min<std::size_t>(255, data.size() - i);
            os.put(char(n));
            os.write(reinterpret_cast<const char*>(data.data() + i), std::streamsize(n));
        }
        os.put(0);
    }
    os.put('\x3B');
    if (!os) throw FormatError("failed writing GIF " + path.string());
}

void write_frame_dump(const std::filesystem::path& dir, const std::vector<torch::Tensor>& frames,
                      const std::string& gif_name) {
    std::filesystem::create_directories(dir);
    char name[32];
    for (std::size_t i = 0; i < frames.size(); ++i) {
        std::snprintf(name, sizeof name, "frame_%05zu.png", i);
        write_png(dir / name, frames[i]);
    }
    if (!frames.empty()) write_gif(dir / gif_name, frames);
}

} // namespace drnet
