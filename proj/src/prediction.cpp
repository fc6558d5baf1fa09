#include "drnet/prediction.hpp"

namespace drnet {

namespace {

void check_frames(const DrnetModel& model, const torch::Tensor& frames, const char* what) {
    const auto& s = model.spec();
    if (frames.dim() != 4 || frames.size(1) != s.channels || frames.size(2) != s.height || frames.size(3) != s.width)
        throw ConfigError(std::string(what) + " must be [n, " + std::to_string(s.channels) + ", " +
                          std::to_string(s.height) + ", " + std::to_string(s.width) + "]");
}

torch::Tensor as_batch(const torch::Tensor& frame) { return frame.dim() == 3 ? frame.unsqueeze(0) : frame; }

} // namespace

RolloutResult rollout(DrnetModel& model, ForecastModel& forecast, const torch::Tensor& observed,
                      std::int64_t horizon, std::int64_t clip_id, const DecoderInputObserver& observer) {
    check_frames(model, observed, "observed frames");
    if (observed.size(0) < 1) throw ConfigError("rollout needs at least one observed frame");
    if (horizon < 0) throw ConfigError("horizon must be >= 0");
    if (!forecast.net) throw ConfigError("forecast model is empty");
    if (forecast.net->pose_dim() != model.pose_dim() || forecast.net->content_dim() != model.content_dim())
        throw ConfigError("forecast model dimensions (" + std::to_string(forecast.net->pose_dim()) + ", " +
                          std::to_string(forecast.net->content_dim()) + ") do not match the encoders (" +
                          std::to_string(model.pose_dim()) + ", " + std::to_string(model.content_dim()) + ")");

    RolloutResult result;
    result.clip_id = clip_id;
    result.observe_len = observed.size(0);
    if (horizon > 0 && !forecast.trained()) {
        result.untrained_forecast = true;
        result.warnings.push_back("forecast model has not been trained; predictions are arbitrary");
    }

    model.eval();
    forecast.net->eval();
    torch::NoGradGuard no_grad;
    const auto x = observed.to(torch::kFloat32);
    const auto n = x.size(0);
    const auto last = x.narrow(0, n - 1, 1);
    const auto content = model.encode_content(last);
    const auto poses = model.encode_pose(x);

    std::optional<PoseForecasterImpl::State> state;
    torch::Tensor pred;
    for (std::int64_t t = 0; t < n; ++t) {
        auto [p, next] = forecast.net->step(poses.narrow(0, t, 1), content.code, state);
        pred = p;
        state = next;
    }
    for (std::int64_t k = 0; k < horizon; ++k) {
        if (observer) observer(k, content.code, pred);
        result.predicted_poses.push_back(pred[0].clone());
        result.predicted_frames.push_back(model.decode(content.code, pred, content.skips)[0].clone());
        if (k + 1 < horizon) {
            auto [p, next] = forecast.net->step(pred, content.code, state);
            pred = p;
            state = next;
        }
    }
    return result;
}

torch::Tensor reconstruct(DrnetModel& model, const torch::Tensor& content_frame, const torch::Tensor& pose_frame) {
    const auto c = as_batch(content_frame).to(torch::kFloat32);
    const auto p = as_batch(pose_frame).to(torch::kFloat32);
    check_frames(model, c, "content frame");
    check_frames(model, p, "pose frame");
    if (c.size(0) != 1 || p.size(0) != 1) throw ConfigError("reconstruct takes single frames");
    model.eval();
    torch::NoGradGuard no_grad;
    const auto content = model.encode_content(c);
    return model.decode(content.code, model.encode_pose(p), content.skips)[0];
}

torch::Tensor clip_tensor(const ClipDataset& dataset, std::size_t clip) {
    const auto& s = dataset.shape();
    std::vector<std::span<const float>> frames;
    for (std::uint32_t t = 0; t < s.frames; ++t) frames.push_back(dataset.frame(clip, t));
    return frames_to_tensor(frames, s.channels, s.height, s.width);
}

} // namespace drnet
