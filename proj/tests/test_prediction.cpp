#include <gtest/gtest.h>

#include "drnet/prediction.hpp"

using namespace drnet;

namespace {

NetworkSpec spec() {
    NetworkSpec s;
    s.height = s.width = 32;
    s.dim_hc = 16;
    s.dim_hp = 4;
    s.width_mult = 0.125;
    return s;
}

torch::Tensor observed_frames(std::int64_t n) {
    MovingDigitsParams p;
    p.canvas = 32;
    static const auto data = gen_moving_digits(2, 12, 9, p);
    return clip_tensor(data, 1).narrow(0, 0, n);
}

ForecastModel forecast_for(const DrnetModel& model, std::int64_t steps_trained) {
    ForecastModel f;
    f.net = build_forecaster(model.pose_dim(), model.content_dim(), 8, 32, 2);
    f.observe_len = 5;
    f.predict_len = 10;
    f.steps_trained = steps_trained;
    return f;
}

} // namespace

TEST(Rollout, ZeroHorizonIsEmpty) {
    DrnetModel model(spec(), TrainMode::drnet, 1);
    auto f = forecast_for(model, 0);
    const auto r = rollout(model, f, observed_frames(5), 0);
    EXPECT_TRUE(r.predicted_frames.empty());
    EXPECT_TRUE(r.predicted_poses.empty());
    EXPECT_FALSE(r.untrained_forecast);
    EXPECT_EQ(r.observe_len, 5);
}

TEST(Rollout, LongHorizonStaysInRange) {
    DrnetModel model(spec(), TrainMode::drnet, 2);
    auto f = forecast_for(model, 1);
    const auto r = rollout(model, f, observed_frames(5), 500, 7);
    ASSERT_EQ(r.predicted_frames.size(), 500u);
    EXPECT_EQ(r.clip_id, 7);
    for (const auto& x : r.predicted_frames) {
        ASSERT_EQ(x.sizes(), (std::vector<std::int64_t>{3, 32, 32}));
        ASSERT_TRUE(torch::isfinite(x).all().item<bool>());
        ASSERT_GE(x.min().item<double>(), 0.0);
        ASSERT_LE(x.max().item<double>(), 1.0);
    }
    for (const auto& p : r.predicted_poses) ASSERT_NEAR(p.norm().item<double>(), 1.0, 1e-5);
}

TEST(Rollout, ContentIsFixedAndPosesFollowTheRecurrence) {
    DrnetModel model(spec(), TrainMode::drnet, 3);
    auto f = forecast_for(model, 1);
    const auto x = observed_frames(6);
    std::vector<torch::Tensor> contents, poses;
    const auto r = rollout(model, f, x, 8, -1, [&](std::int64_t, const torch::Tensor& c, const torch::Tensor& p) {
        contents.push_back(c.clone());
        poses.push_back(p.clone());
    });
    ASSERT_EQ(contents.size(), 8u);
    for (const auto& c : contents) EXPECT_TRUE(torch::equal(c, contents.front()));

    // Replay: warm up on the observed poses, then feed predictions back.
    torch::NoGradGuard no_grad;
    model.eval();
    const auto content = model.encode_content(x.narrow(0, 5, 1)).code;
    EXPECT_TRUE(torch::equal(content, contents.front()));
    const auto observed = model.encode_pose(x);
    std::optional<PoseForecasterImpl::State> state;
    torch::Tensor pred;
    for (std::int64_t t = 0; t < 6; ++t) std::tie(pred, state) = f.net->step(observed.narrow(0, t, 1), content, state);
    for (std::size_t k = 0; k < 8; ++k) {
        EXPECT_TRUE(torch::equal(pred, poses[k]));
        EXPECT_TRUE(torch::equal(pred[0], r.predicted_poses[k]));
        std::tie(pred, state) = f.net->step(pred, content, state);
    }
}

TEST(Rollout, DeterministicAndWarnsWhenUntrained) {
    DrnetModel model(spec(), TrainMode::drnet, 4);
    auto f = forecast_for(model, 0);
    const auto a = rollout(model, f, observed_frames(5), 6);
    const auto b = rollout(model, f, observed_frames(5), 6);
    for (std::size_t k = 0; k < 6; ++k) EXPECT_TRUE(torch::equal(a.predicted_frames[k], b.predicted_frames[k]));
    EXPECT_TRUE(a.untrained_forecast);
    ASSERT_EQ(a.warnings.size(), 1u);
    EXPECT_NE(a.warnings.front().find("not been trained"), std::string::npos);
}

TEST(Rollout, RejectsMismatchedInputs) {
    DrnetModel model(spec(), TrainMode::drnet, 5);
    auto f = forecast_for(model, 1);
    EXPECT_THROW(rollout(model, f, torch::rand({3, 1, 32, 32}), 4), ConfigError);
    EXPECT_THROW(rollout(model, f, torch::rand({0, 3, 32, 32}), 4), ConfigError);
    EXPECT_THROW(rollout(model, f, observed_frames(3), -1), ConfigError);
    ForecastModel wrong;
    wrong.net = build_forecaster(model.pose_dim() + 1, model.content_dim(), 8, 32, 2);
    EXPECT_THROW(rollout(model, wrong, observed_frames(3), 4), ConfigError);
}

TEST(Reconstruct, ShapesRangeAndErrors) {
    DrnetModel model(spec(), TrainMode::drnet, 6);
    const auto x = observed_frames(2);
    const auto y = reconstruct(model, x[0], x[1]);
    EXPECT_EQ(y.sizes(), (std::vector<std::int64_t>{3, 32, 32}));
    EXPECT_GE(y.min().item<double>(), 0.0);
    EXPECT_LE(y.max().item<double>(), 1.0);
    EXPECT_THROW(reconstruct(model, x, x[1]), ConfigError);
    EXPECT_THROW(reconstruct(model, torch::rand({3, 16, 16}), x[1]), ConfigError);
}

TEST(Reconstruct, AutoencoderRollout) {
    DrnetModel model(spec(), TrainMode::ae_lstm, 7);
    EXPECT_EQ(model.content_dim(), 0);
    auto f = forecast_for(model, 1);
    const auto r = rollout(model, f, observed_frames(4), 3);
    EXPECT_EQ(r.predicted_frames.size(), 3u);
}
