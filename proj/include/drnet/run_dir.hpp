#pragma once

#include <filesystem>
#include <optional>
#include <string>

#include <json.hpp>

namespace drnet {

// Root of all run directories: $DRNET_RUNS_DIR, else "runs".
std::filesystem::path runs_root();

// runs/<name>/{config.json, metrics.csv, ckpt_*.bin, ckpt_*.json}
class RunDirectory {
public:
    explicit RunDirectory(std::filesystem::path path) : path_(std::move(path)) {}
    static RunDirectory named(const std::string& name) { return RunDirectory(runs_root() / name); }

    const std::filesystem::path& path() const { return path_; }
    std::filesystem::path config_path() const { return path_ / "config.json"; }
    std::filesystem::path metrics_path() const { return path_ / "metrics.csv"; }
    std::filesystem::path checkpoint_path(std::int64_t iteration) const;
    // Checkpoint with the highest iteration, if any.
    std::optional<std::filesystem::path> latest_checkpoint() const;

    void create() const;
    void write_config(const nlohmann::json& config) const;
    nlohmann::json read_config() const;

private:
    std::filesystem::path path_;
};

// Pretty-printed JSON with a trailing newline, creating parent directories.
void write_json(const std::filesystem::path& path, const nlohmann::json& value);
nlohmann::json read_json(const std::filesystem::path& path);

} // namespace drnet
