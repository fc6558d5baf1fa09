#include <cmath>

#include "drnet/networks.hpp"

namespace drnet {

namespace nn = torch::nn;

namespace {

constexpr double kLeakySlope = 0.2;

bool is_power_of_two(std::int64_t v) { return v > 0 && (v & (v - 1)) == 0; }

void append_conv_bn_lrelu(nn::Sequential& seq, std::int64_t in, std::int64_t out, std::int64_t kernel,
                          std::int64_t stride, std::int64_t padding) {
    seq->push_back(nn::Conv2d(nn::Conv2dOptions(in, out, kernel).stride(stride).padding(padding).bias(false)));
    seq->push_back(nn::BatchNorm2d(out));
    seq->push_back(nn::LeakyReLU(nn::LeakyReLUOptions().negative_slope(kLeakySlope)));
}

nn::Sequential conv_bn_lrelu(std::int64_t in, std::int64_t out, std::int64_t kernel, std::int64_t stride,
                             std::int64_t padding) {
    nn::Sequential seq;
    append_conv_bn_lrelu(seq, in, out, kernel, stride, padding);
    return seq;
}

nn::Sequential deconv_bn_lrelu(std::int64_t in, std::int64_t out, std::int64_t kernel, std::int64_t stride,
                               std::int64_t padding) {
    return nn::Sequential(
        nn::ConvTranspose2d(nn::ConvTranspose2dOptions(in, out, kernel).stride(stride).padding(padding).bias(false)),
        nn::BatchNorm2d(out), nn::LeakyReLU(nn::LeakyReLUOptions().negative_slope(kLeakySlope)));
}

// VGG16 conv blocks conv1..conv5 (3x3 convs) and whether each pools.
const std::vector<std::vector<std::int64_t>>& vgg_blocks() {
    static const std::vector<std::vector<std::int64_t>> blocks = {
        {64, 64}, {128, 128}, {256, 256, 256}, {512, 512, 512}, {512, 512, 512}};
    return blocks;
}

// Blocks pool from the innermost outwards: a 128 input pools after every
// block, an 8 input only after conv5.
bool vgg_block_pools(const NetworkSpec& spec, int block) { return block >= 5 - spec.halvings(); }

} // namespace

std::string to_string(Arch arch) { return arch == Arch::dcgan ? "dcgan" : "vgg_unet"; }

Arch arch_from_string(const std::string& name) {
    if (name == "dcgan") return Arch::dcgan;
    if (name == "vgg_unet" || name == "vgg") return Arch::vgg_unet;
    throw ConfigError("unknown architecture '" + name + "' (expected dcgan or vgg_unet)");
}

void NetworkSpec::validate() const {
    const std::int64_t full = arch == Arch::dcgan ? 64 : 128;
    if (height != width || !is_power_of_two(height) || height < 8 || height > full)
        throw ConfigError(to_string(arch) + " expects square inputs with side " + std::to_string(full) +
                          " (or a smaller power of two >= 8), got " + std::to_string(height) + "x" +
                          std::to_string(width));
    if (channels < 1) throw ConfigError("channels must be >= 1");
    if (dim_hc < 1 || dim_hp < 1) throw ConfigError("dim_hc and dim_hp must be >= 1");
    if (!(width_mult > 0.0)) throw ConfigError("width_mult must be positive");
    if (skip_connections && arch != Arch::vgg_unet) throw ConfigError("skip connections require vgg_unet");
}

int NetworkSpec::halvings() const {
    int n = 0;
    for (std::int64_t s = height; s > 4; s /= 2) ++n;
    return n;
}

std::int64_t NetworkSpec::scaled(std::int64_t base) const {
    return std::max<std::int64_t>(1, std::llround(double(base) * width_mult));
}

nlohmann::json NetworkSpec::to_json() const {
    return {{"arch", to_string(arch)}, {"channels", channels}, {"height", height},
            {"width", width},          {"dim_hc", dim_hc},     {"dim_hp", dim_hp},
            {"skip_connections", skip_connections}, {"width_mult", width_mult},
            {"upsampling", arch == Arch::dcgan ? "transposed_conv" : "nearest_conv"}};
}

NetworkSpec NetworkSpec::from_json(const nlohmann::json& j) {
    NetworkSpec s;
    s.arch = arch_from_string(j.at("arch").get<std::string>());
    s.channels = j.at("channels").get<std::int64_t>();
    s.height = j.at("height").get<std::int64_t>();
    s.width = j.at("width").get<std::int64_t>();
    s.dim_hc = j.at("dim_hc").get<std::int64_t>();
    s.dim_hp = j.at("dim_hp").get<std::int64_t>();
    s.skip_connections = j.value("skip_connections", false);
    s.width_mult = j.value("width_mult", 1.0);
    return s;
}

torch::Tensor unit_normalize(const torch::Tensor& v) {
    // An exactly-zero row has no direction; it maps to e_1 so every output stays
    // on the sphere. The masked denominator keeps that branch out of autograd.
    const auto norm = v.norm(2, 1, true);
    const auto nonzero = norm > 0;
    const auto scaled = v / torch::where(nonzero, norm, torch::ones_like(norm));
    auto e1 = torch::zeros_like(v);
    if (v.size(1) > 0) e1.select(1, 0).fill_(1.0);
    return torch::where(nonzero, scaled, e1);
}

// ---------------------------------------------------------------------------
// Encoder
// ---------------------------------------------------------------------------

ImageEncoderImpl::ImageEncoderImpl(const NetworkSpec& spec, std::int64_t out_dim, bool capture_skips)
    : spec_(spec), out_dim_(out_dim), capture_skips_(capture_skips && spec.uses_skips()) {
    spec_.validate();
    if (out_dim < 1) throw ConfigError("encoder output dimension must be >= 1");

    std::int64_t in = spec_.channels;
    if (spec_.arch == Arch::dcgan) {
        static const std::int64_t widths[] = {64, 128, 256, 512};
        for (int i = 0; i < spec_.halvings(); ++i) {
            const std::int64_t out = spec_.scaled(widths[i]);
            blocks_.push_back({conv_bn_lrelu(in, out, 4, 2, 1), false, false});
            in = out;
        }
    } else {
        const auto& blocks = vgg_blocks();
        for (int b = 0; b < int(blocks.size()); ++b) {
            nn::Sequential seq;
            for (std::int64_t width : blocks[b]) {
                const std::int64_t out = spec_.scaled(width);
                append_conv_bn_lrelu(seq, in, out, 3, 1, 1);
                in = out;
            }
            blocks_.push_back({seq, vgg_block_pools(spec_, b), b >= 1});
        }
    }
    for (std::size_t i = 0; i < blocks_.size(); ++i) register_module("block" + std::to_string(i + 1), blocks_[i].layers);

    final_conv_ = register_module("final_conv", nn::Conv2d(nn::Conv2dOptions(in, out_dim, 4).bias(false)));
    final_bn_ = register_module("final_bn", nn::BatchNorm2d(out_dim));
}

EncoderOutput ImageEncoderImpl::forward(const torch::Tensor& images) {
    if (images.dim() != 4 || images.size(1) != spec_.channels || images.size(2) != spec_.height ||
        images.size(3) != spec_.width)
        throw ConfigError("encoder input shape mismatch: expected [B," + std::to_string(spec_.channels) + "," +
                          std::to_string(spec_.height) + "," + std::to_string(spec_.width) + "]");
    EncoderOutput out;
    torch::Tensor h = images;
    for (auto& block : blocks_) {
        h = block.layers->forward(h);
        if (capture_skips_ && block.is_skip) out.skips.stages.push_back(h);
        if (block.pool_after) h = torch::max_pool2d(h, 2);
    }
    h = torch::tanh(final_bn_->forward(final_conv_->forward(h)));
    out.code = unit_normalize(h.flatten(1));
    return out;
}

// ---------------------------------------------------------------------------
// Decoder
// ---------------------------------------------------------------------------

DecoderImpl::DecoderImpl(const NetworkSpec& spec, std::int64_t latent_dim) : spec_(spec), latent_dim_(latent_dim) {
    spec_.validate();
    if (latent_dim < 1) throw ConfigError("decoder latent dimension must be >= 1");
    const int n = spec_.halvings();

    if (spec_.arch == Arch::dcgan) {
        static const std::int64_t widths[] = {512, 256, 128, 64, 32};
        const int first = 4 - n; // keep the last n+1 widths
        std::int64_t in = spec_.scaled(widths[first]);
        head_ = deconv_bn_lrelu(latent_dim, in, 4, 1, 0);
        for (int i = first + 1; i <= 4; ++i) {
            const std::int64_t out = spec_.scaled(widths[i]);
            stages_.push_back({false, -1, deconv_bn_lrelu(in, out, 4, 2, 1)});
            in = out;
        }
        out_conv_ = nn::Conv2d(nn::Conv2dOptions(in, spec_.channels, 3).padding(1));
    } else {
        // Mirrors the VGG encoder. Stage s consumes the skip of encoder block
        // conv(7-s) and up-samples iff that block pooled.
        struct StageDef {
            int mirror_block; // 0-based encoder block index
            std::vector<std::int64_t> widths;
        };
        const std::vector<StageDef> defs = {
            {4, {512, 512, 512}}, // upconv2 <- conv5
            {3, {512, 256}},      // upconv3 <- conv4
            {2, {128, 64}},       // upconv4 <- conv3
            {1, {64}},            // upconv5 <- conv2
        };
        const auto& enc_blocks = vgg_blocks();
        std::int64_t in = spec_.scaled(512);
        head_ = deconv_bn_lrelu(latent_dim, in, 4, 1, 0);
        for (const auto& def : defs) {
            Stage st;
            st.upsample = vgg_block_pools(spec_, def.mirror_block);
            if (spec_.uses_skips()) {
                st.skip_index = def.mirror_block - 1;
                in += spec_.scaled(enc_blocks[def.mirror_block].back());
            }
            st.layers = nn::Sequential();
            for (std::int64_t w : def.widths) {
                const std::int64_t out = spec_.scaled(w);
                append_conv_bn_lrelu(st.layers, in, out, 3, 1, 1);
                in = out;
            }
            stages_.push_back(st);
        }
        // upconv6 <- conv1: up-sample then project to colour channels.
        stages_.push_back({vgg_block_pools(spec_, 0), -1, nn::Sequential()});
        out_conv_ = nn::Conv2d(nn::Conv2dOptions(in, spec_.channels, 3).padding(1));
    }
    register_module("head", head_);
    for (std::size_t i = 0; i < stages_.size(); ++i)
        register_module("stage" + std::to_string(i + 2), stages_[i].layers);
    register_module("out_conv", out_conv_);
}

torch::Tensor DecoderImpl::forward(const torch::Tensor& content, const torch::Tensor& pose, const SkipState& skips) {
    if (content.dim() != 2 || pose.dim() != 2 || content.size(0) != pose.size(0))
        throw ConfigError("decoder expects [B, d] content and pose codes with equal batch");
    if (content.size(1) + pose.size(1) != latent_dim_)
        throw ConfigError("decoder latent mismatch: got " + std::to_string(content.size(1)) + "+" +
                          std::to_string(pose.size(1)) + ", expected " + std::to_string(latent_dim_));
    if (spec_.uses_skips() && skips.stages.size() != 4)
        throw ConfigError("decoder requires a SkipState with 4 stages");
    if (!spec_.uses_skips() && !skips.empty()) throw ConfigError("decoder was built without skip connections");

    torch::Tensor h = torch::cat({content, pose}, 1).unsqueeze(-1).unsqueeze(-1);
    h = head_->forward(h);
    for (auto& st : stages_) {
        if (st.upsample)
            h = torch::upsample_nearest2d(h, std::vector<std::int64_t>{h.size(2) * 2, h.size(3) * 2});
        if (st.skip_index >= 0) {
            const auto& s = skips.stages[st.skip_index];
            if (s.size(0) != h.size(0) || s.size(2) != h.size(2) || s.size(3) != h.size(3))
                throw ConfigError("skip tensor shape does not match decoder stage");
            h = torch::cat({h, s}, 1);
        }
        if (!st.layers->is_empty()) h = st.layers->forward(h);
    }
    return torch::sigmoid(out_conv_->forward(h));
}

ImageEncoder build_content_encoder(const NetworkSpec& spec, std::uint64_t seed) {
    ImageEncoder enc(spec, spec.dim_hc, true);
    initialize_parameters(*enc, seed);
    return enc;
}

ImageEncoder build_pose_encoder(const NetworkSpec& spec, std::uint64_t seed) {
    ImageEncoder enc(spec, spec.dim_hp, false);
    initialize_parameters(*enc, seed);
    return enc;
}

ImageEncoder build_joint_encoder(const NetworkSpec& spec, std::uint64_t seed) {
    ImageEncoder enc(spec, spec.dim_hc + spec.dim_hp, true);
    initialize_parameters(*enc, seed);
    return enc;
}

Decoder build_decoder(const NetworkSpec& spec, std::uint64_t seed) {
    Decoder dec(spec, spec.dim_hc + spec.dim_hp);
    initialize_parameters(*dec, seed);
    return dec;
}

torch::Tensor frames_to_tensor(const std::vector<std::span<const float>>& frames, std::int64_t channels,
                               std::int64_t height, std::int64_t width) {
    const std::int64_t frame_size = channels * height * width;
    auto out = torch::empty({std::int64_t(frames.size()), channels, height, width}, torch::kFloat32);
    float* dst = out.data_ptr<float>();
    for (std::size_t i = 0; i < frames.size(); ++i) {
        if (std::int64_t(frames[i].size()) != frame_size) throw ConfigError("frame size mismatch");
        std::copy(frames[i].begin(), frames[i].end(), dst + i * frame_size);
    }
    return out;
}

} // namespace drnet
