#pragma once

#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>
#include <torch/torch.h>

#include "drnet/datasets.hpp"
#include "drnet/losses.hpp"
#include "drnet/networks.hpp"

namespace drnet {

enum class TrainMode { drnet, ae_lstm };

std::string to_string(TrainMode mode);
TrainMode train_mode_from_string(const std::string& name);

struct TrainConfig {
    LossWeights weights;
    double learning_rate = 0.002;
    std::pair<double, double> adam_betas{0.5, 0.999};
    std::int64_t batch_size = 16;
    std::int64_t max_offset = 8; // K
    std::int64_t steps = 1000;
    NetworkSpec arch;
    std::uint64_t seed = 1;
    std::int64_t disc_updates_per_model_update = 1;
    std::int64_t log_interval = 25;
    TrainMode mode = TrainMode::drnet;
    // When false the pose-adversarial term is left out of the model objective
    // entirely (it is still evaluated for logging).
    bool include_adversarial = true;
    // Reconstruction and similarity share one sampled (t, k) per example.
    bool shared_offset = true;

    void validate() const;
    nlohmann::json to_json() const;
    static TrainConfig from_json(const nlohmann::json& j);
};

struct MetricRecord {
    std::int64_t step = 0;
    double loss_rec = 0.0;
    double loss_sim = 0.0;
    double loss_adv_ep = 0.0;
    double loss_adv_c = 0.0;
    double disc_accuracy = 0.0;

    bool operator==(const MetricRecord&) const = default;
};

// The four networks E_c, E_p, D, C. In ae_lstm mode there is a single joint
// encoder (stored as content_encoder, width dim_hc + dim_hp) and no pose
// encoder or discriminator; its code plays the role of the pose vector and the
// content vector is empty.
class DrnetModel {
public:
    DrnetModel(const NetworkSpec& spec, TrainMode mode, std::uint64_t seed);

    const NetworkSpec& spec() const { return spec_; }
    TrainMode mode() const { return mode_; }
    std::int64_t content_dim() const;
    std::int64_t pose_dim() const;

    // Content code and skip activations of a batch of frames.
    EncoderOutput encode_content(const torch::Tensor& frames);
    torch::Tensor encode_pose(const torch::Tensor& frames);
    torch::Tensor decode(const torch::Tensor& content, const torch::Tensor& pose, const SkipState& skips = {});

    void train(bool on = true);
    void eval() { train(false); }

    // Parameters updated by the model phase (E_c, E_p, D).
    std::vector<torch::Tensor> model_parameters() const;
    std::vector<torch::Tensor> discriminator_parameters() const;

    void save(torch::serialize::OutputArchive& archive) const;
    void load(torch::serialize::InputArchive& archive);

    ImageEncoder content_encoder{nullptr};
    ImageEncoder pose_encoder{nullptr};
    Decoder decoder{nullptr};
    SceneDiscriminator discriminator{nullptr};

private:
    NetworkSpec spec_;
    TrainMode mode_;
};

// Snapshot of a training run: configuration echo, iteration, serialized
// network and optimizer state, and the sampling RNG.
struct ModelCheckpoint {
    static constexpr int kFormatVersion = 1;

    TrainConfig config;
    std::int64_t iteration = 0;
    std::string blob; // torch archive: networks, optimizers, rng

    // Rebuilds the networks with the stored parameters (training mode).
    DrnetModel model() const;
    nlohmann::json sidecar() const;
};

// Writes <path> (binary archive) and the JSON sidecar next to it
// (same stem, .json extension).
void save_checkpoint(const ModelCheckpoint& ckpt, const std::filesystem::path& path);
// Reads a checkpoint; when `expected` is given the stored architecture must
// match it.
ModelCheckpoint load_checkpoint(const std::filesystem::path& path,
                                const std::optional<NetworkSpec>& expected = std::nullopt);
std::filesystem::path checkpoint_sidecar_path(const std::filesystem::path& path);

// Alternating optimizer for (E_c, E_p, D) against C.
class Trainer {
public:
    Trainer(const ClipDataset& dataset, const TrainConfig& config);
    Trainer(const ClipDataset& dataset, const ModelCheckpoint& checkpoint);

    // One iteration: disc_updates_per_model_update discriminator steps, then
    // one model step. Returns the per-step metrics.
    MetricRecord step();
    // Runs `steps` iterations, calling on_step after each.
    std::vector<MetricRecord> run(std::int64_t steps, const std::function<void(const MetricRecord&)>& on_step = {});

    // Individual phases, exposed for isolation checks.
    std::pair<double, double> discriminator_update(); // (loss_adv_c, accuracy)
    LossBreakdown model_update();

    // Sets both optimizers' step size to factor * config learning rate.
    void scale_learning_rate(double factor);

    ModelCheckpoint checkpoint() const;
    DrnetModel& model() { return model_; }
    const TrainConfig& config() const { return config_; }
    std::int64_t iteration() const { return iteration_; }

private:
    void build_optimizers();
    torch::Tensor batch(const std::vector<std::span<const float>>& frames) const;
    // (x_t, x_tk) batches of frame pairs.
    std::pair<torch::Tensor, torch::Tensor> sample_pairs();

    const ClipDataset& data_;
    TrainConfig config_;
    DrnetModel model_;
    std::unique_ptr<torch::optim::Adam> model_opt_;
    std::unique_ptr<torch::optim::Adam> disc_opt_;
    Rng rng_;
    std::int64_t iteration_ = 0;
};

struct TrainResult {
    ModelCheckpoint checkpoint;
    std::vector<MetricRecord> records; // one per step
};

TrainResult train_drnet(const ClipDataset& dataset, const TrainConfig& config,
                        const std::function<void(const MetricRecord&)>& on_step = {});

// Autoencoder baseline: single encoder, reconstruction loss only.
TrainResult train_ae_lstm_baseline(const ClipDataset& dataset, TrainConfig config,
                                   const std::function<void(const MetricRecord&)>& on_step = {});

// ---------------------------------------------------------------------------
// Metrics stream
// ---------------------------------------------------------------------------

inline constexpr const char* kMetricsHeader = "step,loss_rec,loss_sim,loss_adv_ep,loss_adv_c,disc_accuracy";

// Averages per-step records over a logging interval.
class IntervalAverager {
public:
    explicit IntervalAverager(std::int64_t interval) : interval_(interval) {}
    // Returns the interval mean once `interval` records have accumulated.
    std::optional<MetricRecord> add(const MetricRecord& r);
    std::optional<MetricRecord> flush();

private:
    std::int64_t interval_;
    std::int64_t count_ = 0;
    MetricRecord sum_;
};

class MetricsCsvWriter {
public:
    // Truncates `path` and writes the header unless `append` is set.
    explicit MetricsCsvWriter(const std::filesystem::path& path, bool append = false);
    void write(const MetricRecord& r);

private:
    std::ofstream out_;
};

std::string format_metric_row(const MetricRecord& r);
std::vector<MetricRecord> read_metrics_csv(const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Forecast model
// ---------------------------------------------------------------------------

struct ForecastConfig {
    std::int64_t observe_len = 5;
    std::int64_t predict_len = 10;
    std::int64_t steps = 1000;
    std::int64_t batch_size = 16;
    double learning_rate = 0.002;
    std::pair<double, double> adam_betas{0.9, 0.999};
    std::int64_t hidden = 256;
    std::int64_t layers = 2;
    std::uint64_t seed = 1;

    void validate() const;
    nlohmann::json to_json() const;
    static ForecastConfig from_json(const nlohmann::json& j);
};

struct ForecastModel {
    PoseForecaster net{nullptr};
    std::int64_t observe_len = 0;
    std::int64_t predict_len = 0;
    std::int64_t steps_trained = 0;

    bool trained() const { return steps_trained > 0; }
};

// Encoded sequence of one clip under a frozen model.
struct EncodedClip {
    torch::Tensor content; // [content_dim] from the conditioning frame
    torch::Tensor poses;   // [T, pose_dim]
};

// Trains the recurrent pose predictor with E_c, E_p, D frozen. Loss is the
// squared pose error of every next-step prediction in both the observe and
// predict phases. Sequences are 20 frames long when T >= 20 (never shorter than
// observe + predict) and observe + predict otherwise. on_step receives
// (step, loss).
ForecastModel train_forecast(const ClipDataset& dataset, DrnetModel& model, const ForecastConfig& config,
                             const std::function<void(std::int64_t, double)>& on_step = {});

struct ForecastEvaluation {
    double model_mse = 0.0;     // mean over clips and predicted steps of ||pred - true||^2
    double copy_last_mse = 0.0; // same, repeating the last observed pose
};

ForecastEvaluation evaluate_forecast(const ClipDataset& dataset, DrnetModel& model, ForecastModel& forecast);

void save_forecast(const ForecastModel& forecast, const ForecastConfig& config, const std::filesystem::path& path);
std::pair<ForecastModel, ForecastConfig> load_forecast(const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Classifier heads
// ---------------------------------------------------------------------------

struct ClassifierConfig {
    std::int64_t hidden = 256;
    std::int64_t max_epochs = 200;
    std::int64_t patience = 20;
    std::int64_t batch_size = 64;
    double learning_rate = 0.001;
    double dropout = 0.5;
    double val_fraction = 0.2;
    double test_fraction = 0.2;
    std::uint64_t seed = 1;
};

struct DataSplit {
    std::vector<std::int64_t> train, val, test;
};

// Random row split in which rows sharing a group id land in the same part
// (every row is its own group when `groups` is empty).
DataSplit split_by_group(std::size_t rows, const std::vector<std::int64_t>& groups, double val_fraction,
                         double test_fraction, Rng& rng);

struct ClassifierResult {
    ClassifierHead head{nullptr};
    double val_accuracy = 0.0;  // best validation accuracy (early-stopping criterion)
    double test_accuracy = 0.0; // held-out accuracy of the selected epoch
    std::int64_t epochs = 0;
};

// Trains the two-layer classifier with ADAM and early stopping. Rows are split
// into train/validation/test; when `groups` is given all rows sharing a group
// id land in the same split.
ClassifierResult train_classifier_head(const torch::Tensor& features, const std::vector<std::int64_t>& labels,
                                       const ClassifierConfig& config,
                                       const std::vector<std::int64_t>& groups = {});

double classification_accuracy(ClassifierHead& head, const torch::Tensor& features,
                               const std::vector<std::int64_t>& labels);

} // namespace drnet
