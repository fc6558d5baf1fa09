#include <cstring>
#include <fstream>
#include <sstream>

#include "drnet/training.hpp"

namespace drnet {

namespace {

constexpr char kMagic[4] = {'D', 'R', 'C', 'K'};

template <typename T>
void put_le(std::ostream& os, T v) {
    unsigned char b[sizeof(T)];
    for (std::size_t i = 0; i < sizeof(T); ++i) b[i] = static_cast<unsigned char>((std::uint64_t(v) >> (8 * i)) & 0xff);
    os.write(reinterpret_cast<const char*>(b), sizeof(T));
}

template <typename T>
T get_le(const unsigned char* p) {
    std::uint64_t v = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) v |= std::uint64_t(p[i]) << (8 * i);
    return static_cast<T>(v);
}

std::string read_all(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

} // namespace

DrnetModel ModelCheckpoint::model() const {
    DrnetModel m(config.arch, config.mode, config.seed);
    std::istringstream is(blob);
    torch::serialize::InputArchive archive;
    try {
        archive.load_from(is);
        torch::serialize::InputArchive nets;
        archive.read("networks", nets);
        m.load(nets);
    } catch (const c10::Error& e) {
        throw FormatError(std::string("corrupt checkpoint archive: ") + e.what_without_backtrace());
    }
    return m;
}

nlohmann::json ModelCheckpoint::sidecar() const {
    return {{"format_version", kFormatVersion},
            {"arch", config.arch.to_json()},
            {"dims", {{"dim_hc", config.arch.dim_hc}, {"dim_hp", config.arch.dim_hp}}},
            {"seed", config.seed},
            {"iteration", iteration},
            {"mode", to_string(config.mode)},
            {"config", config.to_json()}};
}

std::filesystem::path checkpoint_sidecar_path(const std::filesystem::path& path) {
    auto p = path;
    p.replace_extension(".json");
    return p;
}

void save_checkpoint(const ModelCheckpoint& ckpt, const std::filesystem::path& path) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    {
        std::ofstream out(path, std::ios::binary | std::ios::trunc);
        if (!out) throw FormatError("cannot write " + path.string());
        out.write(kMagic, 4);
        put_le<std::uint32_t>(out, ModelCheckpoint::kFormatVersion);
        put_le<std::uint64_t>(out, ckpt.blob.size());
        out.write(ckpt.blob.data(), std::streamsize(ckpt.blob.size()));
        if (!out) throw FormatError("failed writing " + path.string());
    }
    std::ofstream side(checkpoint_sidecar_path(path), std::ios::trunc);
    if (!side) throw FormatError("cannot write " + checkpoint_sidecar_path(path).string());
    side << ckpt.sidecar().dump(2) << "\n";
}

ModelCheckpoint load_checkpoint(const std::filesystem::path& path, const std::optional<NetworkSpec>& expected) {
    const auto side_path = checkpoint_sidecar_path(path);
    nlohmann::json side;
    try {
        side = nlohmann::json::parse(read_all(side_path));
    } catch (const nlohmann::json::exception& e) {
        throw FormatError("malformed checkpoint sidecar " + side_path.string() + ": " + e.what());
    }
    const int version = side.value("format_version", -1);
    if (version != ModelCheckpoint::kFormatVersion)
        throw FormatError("unsupported checkpoint version " + std::to_string(version) + " (expected " +
                          std::to_string(ModelCheckpoint::kFormatVersion) + ")");

    ModelCheckpoint ckpt;
    try {
        ckpt.config = TrainConfig::from_json(side.at("config"));
        ckpt.iteration = side.at("iteration").get<std::int64_t>();
        if (NetworkSpec::from_json(side.at("arch")) != ckpt.config.arch)
            throw FormatError("checkpoint sidecar arch disagrees with its config");
    } catch (const nlohmann::json::exception& e) {
        throw FormatError("malformed checkpoint sidecar " + side_path.string() + ": " + e.what());
    }
    if (expected && *expected != ckpt.config.arch)
        throw ConfigError("checkpoint architecture " + ckpt.config.arch.to_json().dump() +
                          " does not match the requested " + expected->to_json().dump());

    const std::string raw = read_all(path);
    constexpr std::size_t header = 16;
    if (raw.size() < header) throw FormatError("truncated checkpoint header in " + path.string());
    const auto* p = reinterpret_cast<const unsigned char*>(raw.data());
    if (std::memcmp(p, kMagic, 4) != 0) throw FormatError("bad checkpoint magic in " + path.string());
    const auto bin_version = get_le<std::uint32_t>(p + 4);
    if (bin_version != std::uint32_t(ModelCheckpoint::kFormatVersion))
        throw FormatError("unsupported checkpoint version " + std::to_string(bin_version));
    const auto size = get_le<std::uint64_t>(p + 8);
    if (raw.size() - header < size) throw FormatError("truncated checkpoint payload in " + path.string());
    if (raw.size() - header > size) throw FormatError("trailing bytes after checkpoint payload in " + path.string());
    ckpt.blob = raw.substr(header);
    ckpt.model(); // validates the archive
    return ckpt;
}

} // namespace drnet
