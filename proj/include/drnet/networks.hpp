#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <tuple>
#include <vector>

#include <json.hpp>
#include <torch/torch.h>

#include "drnet/errors.hpp"

namespace drnet {

enum class Arch { dcgan, vgg_unet };

std::string to_string(Arch arch);
Arch arch_from_string(const std::string& name);

// Shape and width of the encoder/decoder family.
//
// dcgan is defined for square inputs of 64 pixels and vgg_unet for 128 pixels.
// Both also accept any smaller power-of-two side down to 8, which drops the
// outermost resolution stages; together with width_mult this gives the tiny
// configurations used for gradient checks and fast experiments.
struct NetworkSpec {
    Arch arch = Arch::dcgan;
    std::int64_t channels = 3; // num_color_channels
    std::int64_t height = 64;
    std::int64_t width = 64;
    std::int64_t dim_hc = 128;
    std::int64_t dim_hp = 5;
    bool skip_connections = false; // vgg_unet only
    double width_mult = 1.0;

    void validate() const;
    // Number of 2x down-sampling stages before the final 4x4 valid conv.
    int halvings() const;
    std::int64_t scaled(std::int64_t base_channels) const;
    bool uses_skips() const { return arch == Arch::vgg_unet && skip_connections; }

    nlohmann::json to_json() const;
    static NetworkSpec from_json(const nlohmann::json& j);
    bool operator==(const NetworkSpec&) const = default;
};

// v / ||v|| along dim 1; an all-zero row maps to e_1.
torch::Tensor unit_normalize(const torch::Tensor& v);

// Content-encoder activations routed to the decoder. stages[0..3] hold the
// outputs of blocks conv2..conv5 (before pooling); they feed upconv5..upconv2.
struct SkipState {
    std::vector<torch::Tensor> stages;
    bool empty() const { return stages.empty(); }
};

struct EncoderOutput {
    torch::Tensor code; // [B, out_dim], unit norm
    SkipState skips;
};

class ImageEncoderImpl : public torch::nn::Module {
public:
    ImageEncoderImpl(const NetworkSpec& spec, std::int64_t out_dim, bool capture_skips);

    EncoderOutput forward(const torch::Tensor& images);
    // Code only, for callers that do not need skips.
    torch::Tensor encode(const torch::Tensor& images) { return forward(images).code; }

    const NetworkSpec& spec() const { return spec_; }
    std::int64_t out_dim() const { return out_dim_; }

private:
    struct Block {
        torch::nn::Sequential layers{nullptr};
        bool pool_after = false;
        bool is_skip = false;
    };

    NetworkSpec spec_;
    std::int64_t out_dim_;
    bool capture_skips_;
    std::vector<Block> blocks_;
    torch::nn::Conv2d final_conv_{nullptr};
    torch::nn::BatchNorm2d final_bn_{nullptr};
};
TORCH_MODULE(ImageEncoder);

class DecoderImpl : public torch::nn::Module {
public:
    DecoderImpl(const NetworkSpec& spec, std::int64_t latent_dim);

    // latent = [content; pose] along dim 1; skips required iff spec.uses_skips().
    torch::Tensor forward(const torch::Tensor& content, const torch::Tensor& pose, const SkipState& skips = {});

    std::int64_t latent_dim() const { return latent_dim_; }

private:
    struct Stage {
        bool upsample = false;
        int skip_index = -1; // index into SkipState::stages, or -1
        torch::nn::Sequential layers{nullptr};
    };

    NetworkSpec spec_;
    std::int64_t latent_dim_;
    torch::nn::Sequential head_{nullptr}; // 1x1 -> 4x4
    std::vector<Stage> stages_;
    torch::nn::Conv2d out_conv_{nullptr};
};
TORCH_MODULE(Decoder);

// Scene discriminator C: two hidden layers of 100 units over [pose_a; pose_b].
class SceneDiscriminatorImpl : public torch::nn::Module {
public:
    explicit SceneDiscriminatorImpl(std::int64_t dim_hp, std::int64_t hidden = 100);
    // Probability in (0,1) that both poses come from the same clip, shape [B].
    torch::Tensor forward(const torch::Tensor& pose_a, const torch::Tensor& pose_b);

private:
    std::int64_t dim_hp_;
    torch::nn::Sequential net_{nullptr};
};
TORCH_MODULE(SceneDiscriminator);

// Two-layer classifier S: linear -> batchnorm -> leaky relu -> dropout -> linear.
class ClassifierHeadImpl : public torch::nn::Module {
public:
    ClassifierHeadImpl(std::int64_t input_dim, std::int64_t hidden, std::int64_t num_classes, double dropout = 0.5);
    torch::Tensor forward(const torch::Tensor& features); // logits [B, classes]
    torch::Tensor probabilities(const torch::Tensor& features) { return torch::softmax(forward(features), 1); }

    std::int64_t input_dim() const { return input_dim_; }
    std::int64_t num_classes() const { return num_classes_; }

private:
    std::int64_t input_dim_, num_classes_;
    torch::nn::Sequential net_{nullptr};
};
TORCH_MODULE(ClassifierHead);

// Recurrent pose predictor: 2-layer LSTM over [pose; content] with a linear
// read-out renormalized to the unit sphere.
class PoseForecasterImpl : public torch::nn::Module {
public:
    using State = std::tuple<torch::Tensor, torch::Tensor>;

    PoseForecasterImpl(std::int64_t pose_dim, std::int64_t content_dim, std::int64_t hidden = 256,
                       std::int64_t layers = 2);

    // One recurrent step. pose [B, pose_dim], content [B, content_dim] (may
    // have zero columns). Returns the predicted next pose and the new state.
    std::pair<torch::Tensor, State> step(const torch::Tensor& pose, const torch::Tensor& content,
                                         const std::optional<State>& state);

    std::int64_t pose_dim() const { return pose_dim_; }
    std::int64_t content_dim() const { return content_dim_; }
    std::int64_t hidden() const { return hidden_; }
    std::int64_t layers() const { return layers_; }

private:
    std::int64_t pose_dim_, content_dim_, hidden_, layers_;
    torch::nn::LSTM lstm_{nullptr};
    torch::nn::Linear readout_{nullptr};
};
TORCH_MODULE(PoseForecaster);

// Builders. Every builder is a pure function of its arguments: parameters are
// drawn from a generator seeded with `seed` (conv weights N(0, 0.02),
// batchnorm scales N(1, 0.02), linear/recurrent weights U(+-1/sqrt(fan_in)),
// biases zero).
ImageEncoder build_content_encoder(const NetworkSpec& spec, std::uint64_t seed);
ImageEncoder build_pose_encoder(const NetworkSpec& spec, std::uint64_t seed);
// Single encoder of width dim_hc + dim_hp used by the autoencoder baseline.
ImageEncoder build_joint_encoder(const NetworkSpec& spec, std::uint64_t seed);
Decoder build_decoder(const NetworkSpec& spec, std::uint64_t seed);
SceneDiscriminator build_scene_discriminator(std::int64_t dim_hp, std::uint64_t seed);
ClassifierHead build_classifier(std::int64_t input_dim, std::int64_t hidden, std::int64_t num_classes,
                                std::uint64_t seed, double dropout = 0.5);
PoseForecaster build_forecaster(std::int64_t pose_dim, std::int64_t content_dim, std::uint64_t seed,
                                std::int64_t hidden = 256, std::int64_t layers = 2);

void initialize_parameters(torch::nn::Module& module, std::uint64_t seed);
std::int64_t parameter_count(const torch::nn::Module& module);

// Enables/disables gradients on every parameter of a module.
void set_requires_grad(torch::nn::Module& module, bool enabled);

// Converts flat CHW float frames into a [B, C, H, W] tensor.
torch::Tensor frames_to_tensor(const std::vector<std::span<const float>>& frames, std::int64_t channels,
                               std::int64_t height, std::int64_t width);

} // namespace drnet
