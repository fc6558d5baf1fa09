#pragma once

#include <functional>
#include <string>
#include <vector>

#include <torch/torch.h>

#include "drnet/training.hpp"

namespace drnet {

struct RolloutResult {
    std::vector<torch::Tensor> predicted_poses;  // horizon x [pose_dim]
    std::vector<torch::Tensor> predicted_frames; // horizon x [C, H, W], values in [0,1]
    std::int64_t clip_id = -1;
    std::int64_t observe_len = 0;
    bool untrained_forecast = false;
    std::vector<std::string> warnings;
};

// Receives the decoder inputs of every generated step.
using DecoderInputObserver =
    std::function<void(std::int64_t step, const torch::Tensor& content, const torch::Tensor& pose)>;

// Conditions on `observed` ([n, C, H, W], n >= 1) and generates `horizon`
// frames. Content (and skips) come from the last observed frame and stay fixed;
// the recurrent state is warmed on the observed poses, then fed its own
// predictions.
RolloutResult rollout(DrnetModel& model, ForecastModel& forecast, const torch::Tensor& observed,
                      std::int64_t horizon, std::int64_t clip_id = -1, const DecoderInputObserver& observer = {});

// D(E_c(content_frame), E_p(pose_frame)) for single [C, H, W] frames.
torch::Tensor reconstruct(DrnetModel& model, const torch::Tensor& content_frame, const torch::Tensor& pose_frame);

// Frames [T, C, H, W] of one stored clip.
torch::Tensor clip_tensor(const ClipDataset& dataset, std::size_t clip);

} // namespace drnet
