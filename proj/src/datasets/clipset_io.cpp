#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

#include "drnet/datasets.hpp"

namespace drnet {

namespace {

constexpr char kMagic[4] = {'D', 'R', 'C', 'S'};
constexpr std::uint32_t kVersion = 1;
constexpr std::size_t kHeaderBytes = 32;

static_assert(std::endian::native == std::endian::little, "clip container I/O assumes a little-endian host");

void put_u32(std::string& buf, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) buf.push_back(char((v >> (8 * i)) & 0xff));
}

std::uint32_t get_u32(const unsigned char* p) {
    return std::uint32_t(p[0]) | (std::uint32_t(p[1]) << 8) | (std::uint32_t(p[2]) << 16) | (std::uint32_t(p[3]) << 24);
}

} // namespace

std::filesystem::path manifest_path(const std::filesystem::path& container) {
    auto p = container;
    p += ".json";
    return p;
}

void write_clipset(const ClipDataset& dataset, const std::filesystem::path& path) {
    const auto& shape = dataset.shape();
    std::string header;
    header.append(kMagic, 4);
    put_u32(header, kVersion);
    put_u32(header, std::uint32_t(dataset.size()));
    put_u32(header, shape.frames);
    put_u32(header, shape.channels);
    put_u32(header, shape.height);
    put_u32(header, shape.width);
    header.push_back(char(dataset.pixel_type()));
    header.append(3, '\0');

    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw FormatError("cannot open for writing: " + path.string());
    out.write(header.data(), std::streamsize(header.size()));

    std::vector<std::uint8_t> bytes;
    for (const auto& clip : dataset.clips()) {
        std::string label;
        put_u32(label, clip.content_label);
        out.write(label.data(), 4);
        if (dataset.pixel_type() == PixelType::uint8) {
            bytes.resize(clip.pixels.size());
            for (std::size_t i = 0; i < bytes.size(); ++i)
                bytes[i] = std::uint8_t(std::lround(clip.pixels[i] * 255.0f));
            out.write(reinterpret_cast<const char*>(bytes.data()), std::streamsize(bytes.size()));
        } else {
            out.write(reinterpret_cast<const char*>(clip.pixels.data()),
                      std::streamsize(clip.pixels.size() * sizeof(float)));
        }
    }
    if (!out) throw FormatError("write failed: " + path.string());

    nlohmann::json manifest = {{"generator", dataset.metadata.generator},
                               {"seed", dataset.metadata.seed},
                               {"params", dataset.metadata.params},
                               {"class_names", dataset.metadata.class_names},
                               {"num_classes", dataset.num_classes()}};
    std::ofstream side(manifest_path(path), std::ios::trunc);
    side << manifest.dump(2) << "\n";
    if (!side) throw FormatError("cannot write manifest for " + path.string());
}

ClipDataset read_clipset(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("cannot open clip container: " + path.string());
    const std::uintmax_t file_size = std::filesystem::file_size(path);

    unsigned char header[kHeaderBytes];
    if (!in.read(reinterpret_cast<char*>(header), kHeaderBytes)) throw FormatError("truncated header");
    if (std::memcmp(header, kMagic, 4) != 0) throw FormatError("bad magic");
    const std::uint32_t version = get_u32(header + 4);
    if (version != kVersion) throw FormatError("unsupported version " + std::to_string(version));
    const std::uint32_t num_clips = get_u32(header + 8);
    ClipShape shape{get_u32(header + 12), get_u32(header + 16), get_u32(header + 20), get_u32(header + 24)};
    const std::uint8_t dtype = header[28];
    if (dtype > 1) throw FormatError("bad dtype " + std::to_string(dtype));
    if (shape.frames < 2) throw FormatError("bad frame count T=" + std::to_string(shape.frames));
    if (shape.channels == 0 || shape.height == 0 || shape.width == 0) throw FormatError("bad frame dimensions");

    const std::uintmax_t value_bytes = dtype == 0 ? 1 : 4;
    const std::uintmax_t per_clip = 4 + std::uintmax_t(shape.clip_size()) * value_bytes;
    const std::uintmax_t expected = kHeaderBytes + per_clip * num_clips;
    if (file_size < expected) throw FormatError("truncated payload");
    if (file_size > expected) throw FormatError("trailing bytes after payload");

    struct RawClip {
        std::uint32_t label;
        std::vector<float> pixels;
    };
    std::vector<RawClip> raw(num_clips);
    std::uint32_t max_label = 0;
    std::vector<unsigned char> buf(shape.clip_size() * value_bytes);
    for (auto& clip : raw) {
        unsigned char label[4];
        if (!in.read(reinterpret_cast<char*>(label), 4)) throw FormatError("truncated payload");
        clip.label = get_u32(label);
        max_label = std::max(max_label, clip.label);
        if (!in.read(reinterpret_cast<char*>(buf.data()), std::streamsize(buf.size())))
            throw FormatError("truncated payload");
        clip.pixels.resize(shape.clip_size());
        if (dtype == 0) {
            for (std::size_t i = 0; i < clip.pixels.size(); ++i) clip.pixels[i] = float(buf[i]) / 255.0f;
        } else {
            std::memcpy(clip.pixels.data(), buf.data(), buf.size());
        }
    }

    DatasetMetadata meta;
    std::uint32_t num_classes = num_clips == 0 ? 1 : max_label + 1;
    const auto side_path = manifest_path(path);
    if (std::filesystem::exists(side_path)) {
        std::ifstream side(side_path);
        nlohmann::json j;
        try {
            side >> j;
            meta.generator = j.value("generator", "");
            meta.seed = j.value("seed", std::uint64_t(0));
            meta.params = j.value("params", nlohmann::json::object());
            meta.class_names = j.value("class_names", std::vector<std::string>{});
            num_classes = j.value("num_classes", num_classes);
        } catch (const nlohmann::json::exception& e) {
            throw FormatError("bad manifest " + side_path.string() + ": " + e.what());
        }
        if (num_classes <= max_label && num_clips > 0) throw FormatError("manifest num_classes smaller than labels");
    }

    ClipDataset ds(shape, num_classes, PixelType(dtype));
    ds.metadata = std::move(meta);
    for (std::uint32_t i = 0; i < num_clips; ++i) {
        VideoClip c;
        c.pixels = std::move(raw[i].pixels);
        c.content_label = raw[i].label;
        c.clip_id = i;
        try {
            ds.add_clip(std::move(c));
        } catch (const ConfigError& e) {
            throw FormatError(std::string("invalid clip payload: ") + e.what());
        }
    }
    return ds;
}

} // namespace drnet
