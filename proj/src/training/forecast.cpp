#include <algorithm>
#include <sstream>

#include "drnet/training.hpp"

namespace drnet {

namespace {

constexpr std::uint64_t kForecastInitStream = 6;
constexpr std::uint64_t kForecastSamplerStream = 7;

struct EncodedDataset {
    torch::Tensor poses;    // [N, T, pose_dim]
    torch::Tensor contents; // [N, T, content_dim]
};

EncodedDataset encode_dataset(const ClipDataset& data, DrnetModel& model) {
    const auto& s = data.shape();
    const auto n = std::int64_t(data.size());
    const auto t = std::int64_t(s.frames);
    std::vector<std::span<const float>> frames;
    frames.reserve(std::size_t(n * t));
    for (std::size_t c = 0; c < data.size(); ++c)
        for (std::uint32_t f = 0; f < s.frames; ++f) frames.push_back(data.frame(c, f));

    model.eval();
    torch::NoGradGuard no_grad;
    std::vector<torch::Tensor> poses, contents;
    constexpr std::size_t chunk = 64;
    for (std::size_t i = 0; i < frames.size(); i += chunk) {
        const std::vector<std::span<const float>> part(frames.begin() + std::ptrdiff_t(i),
                                                       frames.begin() + std::ptrdiff_t(std::min(frames.size(), i + chunk)));
        const auto x = frames_to_tensor(part, s.channels, s.height, s.width);
        poses.push_back(model.encode_pose(x));
        contents.push_back(model.encode_content(x).code);
    }
    return {torch::cat(poses).reshape({n, t, model.pose_dim()}),
            torch::cat(contents).reshape({n, t, model.content_dim()})};
}

void check_protocol(const ClipDataset& data, std::int64_t observe, std::int64_t predict) {
    if (observe < 1) throw ConfigError("observe_len must be >= 1");
    if (predict < 0) throw ConfigError("predict_len must be >= 0");
    if (observe + predict < 2) throw ConfigError("observe_len + predict_len must be >= 2");
    if (observe + predict > std::int64_t(data.shape().frames))
        throw ConfigError("observe_len + predict_len = " + std::to_string(observe + predict) +
                          " exceeds the clip length " + std::to_string(data.shape().frames));
}

// Training sequences span 20 frames when the clips are long enough, else
// exactly observe + predict; steps past observe + predict stay self-fed.
std::int64_t training_length(const ClipDataset& data, std::int64_t observe, std::int64_t predict) {
    constexpr std::int64_t kPreferred = 20;
    const std::int64_t frames = std::int64_t(data.shape().frames);
    return frames >= kPreferred ? std::max(observe + predict, kPreferred) : observe + predict;
}

} // namespace

void ForecastConfig::validate() const {
    if (observe_len < 1) throw ConfigError("observe_len must be >= 1");
    if (predict_len < 0) throw ConfigError("predict_len must be >= 0");
    if (observe_len + predict_len < 2) throw ConfigError("observe_len + predict_len must be >= 2");
    if (steps < 0) throw ConfigError("steps must be >= 0");
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be > 0");
    if (hidden < 1 || layers < 1) throw ConfigError("forecaster needs hidden >= 1 and layers >= 1");
}

nlohmann::json ForecastConfig::to_json() const {
    return {{"observe_len", observe_len}, {"predict_len", predict_len},      {"steps", steps},
            {"batch_size", batch_size},   {"learning_rate", learning_rate},  {"adam_beta1", adam_betas.first},
            {"adam_beta2", adam_betas.second}, {"hidden", hidden},           {"layers", layers},
            {"seed", seed}};
}

ForecastConfig ForecastConfig::from_json(const nlohmann::json& j) {
    ForecastConfig c;
    c.observe_len = j.value("observe_len", c.observe_len);
    c.predict_len = j.value("predict_len", c.predict_len);
    c.steps = j.value("steps", c.steps);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.learning_rate = j.value("learning_rate", c.learning_rate);
    c.adam_betas.first = j.value("adam_beta1", c.adam_betas.first);
    c.adam_betas.second = j.value("adam_beta2", c.adam_betas.second);
    c.hidden = j.value("hidden", c.hidden);
    c.layers = j.value("layers", c.layers);
    c.seed = j.value("seed", c.seed);
    return c;
}

ForecastModel train_forecast(const ClipDataset& dataset, DrnetModel& model, const ForecastConfig& config,
                             const std::function<void(std::int64_t, double)>& on_step) {
    config.validate();
    check_protocol(dataset, config.observe_len, config.predict_len);
    if (dataset.empty()) throw ConfigError("dataset is empty");

    const auto enc = encode_dataset(dataset, model);
    ForecastModel fm;
    fm.observe_len = config.observe_len;
    fm.predict_len = config.predict_len;
    fm.net = build_forecaster(model.pose_dim(), model.content_dim(), derive_seed(config.seed, kForecastInitStream),
                              config.hidden, config.layers);
    fm.net->train();
    torch::optim::Adam opt(fm.net->parameters(), torch::optim::AdamOptions(config.learning_rate)
                                                     .betas(std::make_tuple(config.adam_betas.first,
                                                                            config.adam_betas.second)));
    Rng rng(derive_seed(config.seed, kForecastSamplerStream));
    const std::int64_t len = training_length(dataset, config.observe_len, config.predict_len);
    const std::int64_t frames = std::int64_t(dataset.shape().frames);
    std::uniform_int_distribution<std::int64_t> pick_clip(0, std::int64_t(dataset.size()) - 1);
    std::uniform_int_distribution<std::int64_t> pick_start(0, frames - len);

    for (std::int64_t step = 0; step < config.steps; ++step) {
        std::vector<std::int64_t> clips(std::size_t(config.batch_size)), starts(std::size_t(config.batch_size));
        for (std::size_t b = 0; b < clips.size(); ++b) {
            clips[b] = pick_clip(rng);
            starts[b] = pick_start(rng);
        }
        std::vector<torch::Tensor> seq_rows, content_rows;
        for (std::size_t b = 0; b < clips.size(); ++b) {
            seq_rows.push_back(enc.poses[clips[b]].narrow(0, starts[b], len));
            content_rows.push_back(enc.contents[clips[b]][starts[b] + config.observe_len - 1]);
        }
        const auto seq = torch::stack(seq_rows);       // [B, L, pose_dim]
        const auto content = torch::stack(content_rows); // [B, content_dim]

        opt.zero_grad();
        std::optional<PoseForecasterImpl::State> state;
        torch::Tensor input = seq.select(1, 0);
        torch::Tensor loss = torch::zeros({});
        for (std::int64_t t = 0; t + 1 < len; ++t) {
            if (t < config.observe_len) input = seq.select(1, t);
            auto [pred, next] = fm.net->step(input, content, state);
            state = next;
            loss = loss + (pred - seq.select(1, t + 1)).pow(2).sum(1).mean();
            input = pred;
        }
        loss = loss / double(len - 1);
        const double value = loss.item<double>();
        if (!std::isfinite(value)) throw TrainingError("non-finite forecast loss at step " + std::to_string(step + 1));
        loss.backward();
        opt.step();
        fm.steps_trained = step + 1;
        if (on_step) on_step(step + 1, value);
    }
    fm.net->eval();
    return fm;
}

ForecastEvaluation evaluate_forecast(const ClipDataset& dataset, DrnetModel& model, ForecastModel& forecast) {
    check_protocol(dataset, forecast.observe_len, forecast.predict_len);
    if (forecast.predict_len < 1) throw ConfigError("evaluation needs predict_len >= 1");
    const auto enc = encode_dataset(dataset, model);
    forecast.net->eval();
    torch::NoGradGuard no_grad;

    const auto o = forecast.observe_len;
    const auto content = enc.contents.select(1, o - 1);
    std::optional<PoseForecasterImpl::State> state;
    torch::Tensor pred;
    for (std::int64_t t = 0; t < o; ++t) {
        auto [p, next] = forecast.net->step(enc.poses.select(1, t), content, state);
        pred = p;
        state = next;
    }
    const auto last = enc.poses.select(1, o - 1);
    double model_sum = 0.0, copy_sum = 0.0;
    for (std::int64_t k = 0; k < forecast.predict_len; ++k) {
        const auto truth = enc.poses.select(1, o + k);
        model_sum += (pred - truth).pow(2).sum(1).mean().item<double>();
        copy_sum += (last - truth).pow(2).sum(1).mean().item<double>();
        auto [p, next] = forecast.net->step(pred, content, state);
        pred = p;
        state = next;
    }
    const double n = double(forecast.predict_len);
    return {model_sum / n, copy_sum / n};
}

void save_forecast(const ForecastModel& forecast, const ForecastConfig& config, const std::filesystem::path& path) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    torch::serialize::OutputArchive archive;
    forecast.net->save(archive);
    archive.save_to(path.string());
    const nlohmann::json side = {{"format_version", ModelCheckpoint::kFormatVersion},
                                 {"kind", "pose_forecaster"},
                                 {"pose_dim", forecast.net->pose_dim()},
                                 {"content_dim", forecast.net->content_dim()},
                                 {"observe_len", forecast.observe_len},
                                 {"predict_len", forecast.predict_len},
                                 {"steps_trained", forecast.steps_trained},
                                 {"config", config.to_json()}};
    std::ofstream out(checkpoint_sidecar_path(path), std::ios::trunc);
    if (!out) throw FormatError("cannot write " + checkpoint_sidecar_path(path).string());
    out << side.dump(2) << "\n";
}

std::pair<ForecastModel, ForecastConfig> load_forecast(const std::filesystem::path& path) {
    std::ifstream in(checkpoint_sidecar_path(path));
    if (!in) throw FormatError("cannot open " + checkpoint_sidecar_path(path).string());
    ForecastModel fm;
    ForecastConfig config;
    std::int64_t pose_dim = 0, content_dim = 0;
    try {
        const auto side = nlohmann::json::parse(in);
        if (side.value("format_version", -1) != ModelCheckpoint::kFormatVersion)
            throw FormatError("unsupported forecaster version");
        if (side.value("kind", "") != "pose_forecaster") throw FormatError("not a pose forecaster sidecar");
        config = ForecastConfig::from_json(side.at("config"));
        pose_dim = side.at("pose_dim").get<std::int64_t>();
        content_dim = side.at("content_dim").get<std::int64_t>();
        fm.observe_len = side.at("observe_len").get<std::int64_t>();
        fm.predict_len = side.at("predict_len").get<std::int64_t>();
        fm.steps_trained = side.at("steps_trained").get<std::int64_t>();
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("malformed forecaster sidecar: ") + e.what());
    }
    fm.net = PoseForecaster(pose_dim, content_dim, config.hidden, config.layers);
    try {
        torch::serialize::InputArchive archive;
        archive.load_from(path.string());
        fm.net->load(archive);
    } catch (const c10::Error& e) {
        throw FormatError(std::string("corrupt forecaster archive: ") + e.what_without_backtrace());
    }
    fm.net->eval();
    return {fm, config};
}

} // namespace drnet
