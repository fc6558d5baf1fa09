#include <cmath>

#include "drnet/losses.hpp"

namespace drnet {

namespace {

torch::Tensor clamp_prob(const torch::Tensor& p) { return p.clamp(kProbClamp, 1.0 - kProbClamp); }

void require_finite(double v, const char* name) {
    if (!std::isfinite(v)) throw TrainingError(std::string("non-finite loss component: ") + name);
}

} // namespace

torch::Tensor reconstruction_loss(const torch::Tensor& predicted, const torch::Tensor& target) {
    if (predicted.sizes() != target.sizes()) throw ConfigError("reconstruction_loss: shape mismatch");
    return (predicted - target).pow(2).mean();
}

torch::Tensor similarity_loss(const torch::Tensor& hc_t, const torch::Tensor& hc_tk) {
    if (hc_t.sizes() != hc_tk.sizes()) throw ConfigError("similarity_loss: dimension mismatch");
    const auto sq = (hc_t - hc_tk).pow(2);
    if (sq.dim() <= 1) return sq.sum();
    return sq.sum(-1).mean();
}

torch::Tensor discriminator_loss(const torch::Tensor& prob_same, const torch::Tensor& prob_diff) {
    if (prob_same.sizes() != prob_diff.sizes()) throw ConfigError("discriminator_loss: batch mismatch");
    return -(torch::log(clamp_prob(prob_same)) + torch::log(1.0 - clamp_prob(prob_diff))).mean();
}

torch::Tensor pose_adversarial_loss(const torch::Tensor& prob_same) {
    const auto p = clamp_prob(prob_same);
    return -(0.5 * torch::log(p) + 0.5 * torch::log(1.0 - p)).mean();
}

torch::Tensor total_model_loss(const torch::Tensor& rec, const torch::Tensor& sim, const torch::Tensor& adv_ep,
                               const LossWeights& weights) {
    weights.validate();
    require_finite(rec.item<double>(), "rec");
    require_finite(sim.item<double>(), "sim");
    require_finite(adv_ep.item<double>(), "adv_ep");
    return rec + weights.alpha * sim + weights.beta * adv_ep;
}

double total_model_loss(double rec, double sim, double adv_ep, const LossWeights& weights) {
    weights.validate();
    require_finite(rec, "rec");
    require_finite(sim, "sim");
    require_finite(adv_ep, "adv_ep");
    return rec + weights.alpha * sim + weights.beta * adv_ep;
}

double discriminator_accuracy(const torch::Tensor& prob_same, const torch::Tensor& prob_diff) {
    const auto correct = (prob_same > 0.5).sum() + (prob_diff < 0.5).sum();
    return correct.item<double>() / double(prob_same.numel() + prob_diff.numel());
}

} // namespace drnet
