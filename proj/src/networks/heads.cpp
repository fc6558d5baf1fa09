#include <cmath>

#include "drnet/networks.hpp"

namespace drnet {

namespace nn = torch::nn;

SceneDiscriminatorImpl::SceneDiscriminatorImpl(std::int64_t dim_hp, std::int64_t hidden) : dim_hp_(dim_hp) {
    if (dim_hp < 1) throw ConfigError("dim_hp must be >= 1");
    net_ = register_module("net", nn::Sequential(nn::Linear(2 * dim_hp, hidden), nn::ReLU(), nn::Linear(hidden, hidden),
                                                 nn::ReLU(), nn::Linear(hidden, 1)));
}

torch::Tensor SceneDiscriminatorImpl::forward(const torch::Tensor& pose_a, const torch::Tensor& pose_b) {
    if (pose_a.sizes() != pose_b.sizes())
        throw ConfigError("scene discriminator pair has mismatched shapes");
    if (pose_a.dim() != 2 || pose_a.size(1) != dim_hp_)
        throw ConfigError("scene discriminator expects [B, " + std::to_string(dim_hp_) + "] poses");
    return torch::sigmoid(net_->forward(torch::cat({pose_a, pose_b}, 1))).squeeze(1);
}

ClassifierHeadImpl::ClassifierHeadImpl(std::int64_t input_dim, std::int64_t hidden, std::int64_t num_classes,
                                       double dropout)
    : input_dim_(input_dim), num_classes_(num_classes) {
    if (input_dim < 1 || hidden < 1 || num_classes < 1) throw ConfigError("classifier sizes must be >= 1");
    net_ = register_module(
        "net", nn::Sequential(nn::Linear(input_dim, hidden), nn::BatchNorm1d(hidden),
                              nn::LeakyReLU(nn::LeakyReLUOptions().negative_slope(0.2)), nn::Dropout(dropout),
                              nn::Linear(hidden, num_classes)));
}

torch::Tensor ClassifierHeadImpl::forward(const torch::Tensor& features) {
    if (features.dim() != 2 || features.size(1) != input_dim_)
        throw ConfigError("classifier expects [B, " + std::to_string(input_dim_) + "] features");
    return net_->forward(features);
}

PoseForecasterImpl::PoseForecasterImpl(std::int64_t pose_dim, std::int64_t content_dim, std::int64_t hidden,
                                       std::int64_t layers)
    : pose_dim_(pose_dim), content_dim_(content_dim), hidden_(hidden), layers_(layers) {
    if (pose_dim < 1 || content_dim < 0 || hidden < 1 || layers < 1) throw ConfigError("invalid forecaster sizes");
    lstm_ = register_module("lstm", nn::LSTM(nn::LSTMOptions(pose_dim + content_dim, hidden).num_layers(layers)));
    readout_ = register_module("readout", nn::Linear(hidden, pose_dim));
}

std::pair<torch::Tensor, PoseForecasterImpl::State> PoseForecasterImpl::step(const torch::Tensor& pose,
                                                                            const torch::Tensor& content,
                                                                            const std::optional<State>& state) {
    if (pose.dim() != 2 || pose.size(1) != pose_dim_) throw ConfigError("forecaster pose dimension mismatch");
    if (content.dim() != 2 || content.size(1) != content_dim_ || content.size(0) != pose.size(0))
        throw ConfigError("forecaster content dimension mismatch");
    auto input = torch::cat({pose, content}, 1).unsqueeze(0); // [1, B, in]
    auto [out, new_state] = state ? lstm_->forward(input, *state) : lstm_->forward(input);
    auto next = unit_normalize(readout_->forward(out.squeeze(0)));
    return {next, new_state};
}

SceneDiscriminator build_scene_discriminator(std::int64_t dim_hp, std::uint64_t seed) {
    SceneDiscriminator d(dim_hp);
    initialize_parameters(*d, seed);
    return d;
}

ClassifierHead build_classifier(std::int64_t input_dim, std::int64_t hidden, std::int64_t num_classes,
                                std::uint64_t seed, double dropout) {
    ClassifierHead c(input_dim, hidden, num_classes, dropout);
    initialize_parameters(*c, seed);
    return c;
}

PoseForecaster build_forecaster(std::int64_t pose_dim, std::int64_t content_dim, std::uint64_t seed,
                                std::int64_t hidden, std::int64_t layers) {
    PoseForecaster f(pose_dim, content_dim, hidden, layers);
    initialize_parameters(*f, seed);
    return f;
}

void initialize_parameters(nn::Module& module, std::uint64_t seed) {
    torch::NoGradGuard no_grad;
    auto gen = at::make_generator<at::CPUGeneratorImpl>(seed);
    const auto uniform_fan_in = [&](torch::Tensor& w, std::int64_t fan_in) {
        const double bound = 1.0 / std::sqrt(double(std::max<std::int64_t>(fan_in, 1)));
        w.uniform_(-bound, bound, gen);
    };

    for (auto& child : module.modules(/*include_self=*/true)) {
        if (auto* conv = child->as<nn::Conv2d>()) {
            conv->weight.normal_(0.0, 0.02, gen);
            if (conv->bias.defined()) conv->bias.zero_();
        } else if (auto* deconv = child->as<nn::ConvTranspose2d>()) {
            deconv->weight.normal_(0.0, 0.02, gen);
            if (deconv->bias.defined()) deconv->bias.zero_();
        } else if (auto* bn2 = child->as<nn::BatchNorm2d>()) {
            bn2->weight.normal_(1.0, 0.02, gen);
            bn2->bias.zero_();
        } else if (auto* bn1 = child->as<nn::BatchNorm1d>()) {
            bn1->weight.normal_(1.0, 0.02, gen);
            bn1->bias.zero_();
        } else if (auto* lin = child->as<nn::Linear>()) {
            uniform_fan_in(lin->weight, lin->weight.size(1));
            if (lin->bias.defined()) lin->bias.zero_();
        } else if (auto* lstm = child->as<nn::LSTM>()) {
            for (auto& p : lstm->named_parameters(false)) {
                if (p.key().find("weight") != std::string::npos)
                    uniform_fan_in(p.value(), lstm->options.hidden_size());
                else
                    p.value().zero_();
            }
        }
    }
}

std::int64_t parameter_count(const nn::Module& module) {
    std::int64_t n = 0;
    for (const auto& p : module.parameters()) n += p.numel();
    return n;
}

void set_requires_grad(nn::Module& module, bool enabled) {
    for (auto& p : module.parameters()) p.set_requires_grad(enabled);
}

} // namespace drnet
