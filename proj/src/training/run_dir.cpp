#include "drnet/run_dir.hpp"

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <regex>

#include "drnet/errors.hpp"

namespace drnet {

std::filesystem::path runs_root() {
    const char* env = std::getenv("DRNET_RUNS_DIR");
    return (env && *env) ? std::filesystem::path(env) : std::filesystem::path("runs");
}

std::filesystem::path RunDirectory::checkpoint_path(std::int64_t iteration) const {
    char name[48];
    std::snprintf(name, sizeof name, "ckpt_%08lld.bin", static_cast<long long>(iteration));
    return path_ / name;
}

std::optional<std::filesystem::path> RunDirectory::latest_checkpoint() const {
    if (!std::filesystem::is_directory(path_)) return std::nullopt;
    static const std::regex pattern(R"(ckpt_(\d+)\.bin)");
    std::optional<std::filesystem::path> best;
    long long best_iter = -1;
    for (const auto& entry : std::filesystem::directory_iterator(path_)) {
        std::smatch m;
        const auto name = entry.path().filename().string();
        if (!std::regex_match(name, m, pattern)) continue;
        const long long iter = std::stoll(m[1].str());
        if (iter > best_iter) {
            best_iter = iter;
            best = entry.path();
        }
    }
    return best;
}

void RunDirectory::create() const { std::filesystem::create_directories(path_); }

void RunDirectory::write_config(const nlohmann::json& config) const { write_json(config_path(), config); }

nlohmann::json RunDirectory::read_config() const { return read_json(config_path()); }

void write_json(const std::filesystem::path& path, const nlohmann::json& value) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw FormatError("cannot write " + path.string());
    out << value.dump(2) << "\n";
}

nlohmann::json read_json(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw FormatError("cannot open " + path.string());
    try {
        return nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw FormatError("malformed JSON in " + path.string() + ": " + e.what());
    }
}

} // namespace drnet
