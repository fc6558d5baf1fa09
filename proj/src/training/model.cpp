#include "drnet/training.hpp"

namespace drnet {

std::string to_string(TrainMode mode) { return mode == TrainMode::drnet ? "drnet" : "ae-lstm"; }

TrainMode train_mode_from_string(const std::string& name) {
    if (name == "drnet") return TrainMode::drnet;
    if (name == "ae-lstm" || name == "ae_lstm") return TrainMode::ae_lstm;
    throw ConfigError("unknown training mode '" + name + "' (expected drnet or ae-lstm)");
}

void TrainConfig::validate() const {
    weights.validate();
    arch.validate();
    if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be > 0");
    if (!(adam_betas.first >= 0.0 && adam_betas.first < 1.0 && adam_betas.second >= 0.0 && adam_betas.second < 1.0))
        throw ConfigError("adam betas must lie in [0,1)");
    if (batch_size < 2) throw ConfigError("batch_size must be >= 2 (batch normalization)");
    if (max_offset < 0) throw ConfigError("max_offset must be >= 0");
    if (steps < 1) throw ConfigError("steps must be >= 1");
    if (disc_updates_per_model_update < 1) throw ConfigError("disc_updates_per_model_update must be >= 1");
    if (log_interval < 1) throw ConfigError("log_interval must be >= 1");
}

nlohmann::json TrainConfig::to_json() const {
    return {{"alpha", weights.alpha},
            {"beta", weights.beta},
            {"learning_rate", learning_rate},
            {"adam_beta1", adam_betas.first},
            {"adam_beta2", adam_betas.second},
            {"batch_size", batch_size},
            {"max_offset", max_offset},
            {"steps", steps},
            {"arch", arch.to_json()},
            {"seed", seed},
            {"disc_updates_per_model_update", disc_updates_per_model_update},
            {"log_interval", log_interval},
            {"mode", to_string(mode)},
            {"include_adversarial", include_adversarial},
            {"shared_offset", shared_offset}};
}

TrainConfig TrainConfig::from_json(const nlohmann::json& j) {
    TrainConfig c;
    c.weights.alpha = j.value("alpha", c.weights.alpha);
    c.weights.beta = j.value("beta", c.weights.beta);
    c.learning_rate = j.value("learning_rate", c.learning_rate);
    c.adam_betas.first = j.value("adam_beta1", c.adam_betas.first);
    c.adam_betas.second = j.value("adam_beta2", c.adam_betas.second);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.max_offset = j.value("max_offset", c.max_offset);
    c.steps = j.value("steps", c.steps);
    if (j.contains("arch")) c.arch = NetworkSpec::from_json(j.at("arch"));
    c.seed = j.value("seed", c.seed);
    c.disc_updates_per_model_update = j.value("disc_updates_per_model_update", c.disc_updates_per_model_update);
    c.log_interval = j.value("log_interval", c.log_interval);
    c.mode = train_mode_from_string(j.value("mode", to_string(c.mode)));
    c.include_adversarial = j.value("include_adversarial", c.include_adversarial);
    c.shared_offset = j.value("shared_offset", c.shared_offset);
    return c;
}

DrnetModel::DrnetModel(const NetworkSpec& spec, TrainMode mode, std::uint64_t seed) : spec_(spec), mode_(mode) {
    spec_.validate();
    if (mode == TrainMode::drnet) {
        content_encoder = build_content_encoder(spec_, derive_seed(seed, 1));
        pose_encoder = build_pose_encoder(spec_, derive_seed(seed, 2));
        discriminator = build_scene_discriminator(spec_.dim_hp, derive_seed(seed, 4));
    } else {
        content_encoder = build_joint_encoder(spec_, derive_seed(seed, 1));
    }
    decoder = build_decoder(spec_, derive_seed(seed, 3));
}

std::int64_t DrnetModel::content_dim() const { return mode_ == TrainMode::drnet ? spec_.dim_hc : 0; }

std::int64_t DrnetModel::pose_dim() const {
    return mode_ == TrainMode::drnet ? spec_.dim_hp : spec_.dim_hc + spec_.dim_hp;
}

EncoderOutput DrnetModel::encode_content(const torch::Tensor& frames) {
    auto out = content_encoder->forward(frames);
    if (mode_ == TrainMode::ae_lstm) out.code = torch::zeros({frames.size(0), 0}, out.code.options());
    return out;
}

torch::Tensor DrnetModel::encode_pose(const torch::Tensor& frames) {
    if (mode_ == TrainMode::ae_lstm) return content_encoder->encode(frames);
    return pose_encoder->encode(frames);
}

torch::Tensor DrnetModel::decode(const torch::Tensor& content, const torch::Tensor& pose, const SkipState& skips) {
    return decoder->forward(content, pose, skips);
}

void DrnetModel::train(bool on) {
    content_encoder->train(on);
    if (pose_encoder) pose_encoder->train(on);
    decoder->train(on);
    if (discriminator) discriminator->train(on);
}

std::vector<torch::Tensor> DrnetModel::model_parameters() const {
    std::vector<torch::Tensor> params = content_encoder->parameters();
    if (pose_encoder)
        for (auto& p : pose_encoder->parameters()) params.push_back(p);
    for (auto& p : decoder->parameters()) params.push_back(p);
    return params;
}

std::vector<torch::Tensor> DrnetModel::discriminator_parameters() const {
    return discriminator ? discriminator->parameters() : std::vector<torch::Tensor>{};
}

void DrnetModel::save(torch::serialize::OutputArchive& archive) const {
    const auto put = [&](const char* key, const torch::nn::Module& m) {
        torch::serialize::OutputArchive sub;
        m.save(sub);
        archive.write(key, sub);
    };
    put("content_encoder", *content_encoder);
    if (pose_encoder) put("pose_encoder", *pose_encoder);
    put("decoder", *decoder);
    if (discriminator) put("discriminator", *discriminator);
}

void DrnetModel::load(torch::serialize::InputArchive& archive) {
    const auto get = [&](const char* key, torch::nn::Module& m) {
        torch::serialize::InputArchive sub;
        archive.read(key, sub);
        m.load(sub);
    };
    get("content_encoder", *content_encoder);
    if (pose_encoder) get("pose_encoder", *pose_encoder);
    get("decoder", *decoder);
    if (discriminator) get("discriminator", *discriminator);
}

} // namespace drnet
