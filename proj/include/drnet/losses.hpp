#pragma once

#include <torch/torch.h>

#include "drnet/errors.hpp"

namespace drnet {

// Probabilities entering a log are clamped to [kProbClamp, 1 - kProbClamp].
inline constexpr double kProbClamp = 1e-7;

struct LossWeights {
    double alpha = 1.0; // similarity
    double beta = 0.1;  // pose adversary

    void validate() const {
        if (!(alpha >= 0.0) || !(beta >= 0.0)) throw ConfigError("loss weights must be non-negative");
    }
};

struct LossBreakdown {
    double rec = 0.0;
    double sim = 0.0;
    double adv_ep = 0.0;
    double adv_c = 0.0;
    double total = 0.0; // rec + alpha * sim + beta * adv_ep
};

// Mean squared error over every pixel and batch element.
torch::Tensor reconstruction_loss(const torch::Tensor& predicted, const torch::Tensor& target);

// Squared Euclidean distance between content codes, summed over the latent
// dimension and averaged over the batch. Accepts [d] or [B, d].
torch::Tensor similarity_loss(const torch::Tensor& hc_t, const torch::Tensor& hc_tk);

// Binary cross-entropy of the scene discriminator with target 1 on same-clip
// pairs and 0 on different-clip pairs: -mean(log p_same + log(1 - p_diff)).
torch::Tensor discriminator_loss(const torch::Tensor& prob_same, const torch::Tensor& prob_diff);

// Negative entropy-style loss pushing the discriminator towards 1/2 on
// same-clip pairs: -mean(0.5 log p + 0.5 log(1 - p)). Minimum ln 2 at p = 1/2.
torch::Tensor pose_adversarial_loss(const torch::Tensor& prob_same);

// rec + alpha * sim + beta * adv_ep. Throws on non-finite components.
torch::Tensor total_model_loss(const torch::Tensor& rec, const torch::Tensor& sim, const torch::Tensor& adv_ep,
                               const LossWeights& weights);
double total_model_loss(double rec, double sim, double adv_ep, const LossWeights& weights);

// Fraction of pairs classified correctly at threshold 1/2.
double discriminator_accuracy(const torch::Tensor& prob_same, const torch::Tensor& prob_diff);

} // namespace drnet
