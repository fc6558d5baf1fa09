#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>
#include <torch/torch.h>

#include "drnet/training.hpp"

namespace drnet {

// ---------------------------------------------------------------------------
// Swap grids and pose interpolation
// ---------------------------------------------------------------------------

// cells[i][j] = reconstruct(content = rows[i], pose = cols[j]).
struct ImageGrid {
    std::vector<torch::Tensor> row_images;
    std::vector<torch::Tensor> col_images;
    std::vector<std::vector<torch::Tensor>> cells;

    // (rows + 1) x (cols + 1) mosaic [C, (n+1)(H+pad), (m+1)(W+pad)] with the
    // column sources along the top, the row sources down the left and a blank
    // corner.
    torch::Tensor render(int pad = 2) const;
};

ImageGrid swap_grid(DrnetModel& model, const std::vector<torch::Tensor>& row_images,
                    const std::vector<torch::Tensor>& col_images);

struct Interpolation {
    std::vector<torch::Tensor> poses;  // unit norm
    std::vector<torch::Tensor> frames; // decoded with the content of x1
};

// Linear pose path between E_p(x1) and E_p(x2), renormalized at every step.
Interpolation interpolate_pose(DrnetModel& model, const torch::Tensor& x1, const torch::Tensor& x2, std::int64_t steps);

// ---------------------------------------------------------------------------
// Image metrics
// ---------------------------------------------------------------------------

inline constexpr double kPsnrCap = 100.0;

// 10 log10(1 / MSE) over [C, H, W] images in [0,1], capped at kPsnrCap.
double psnr(const torch::Tensor& a, const torch::Tensor& b);
// Single-scale SSIM with an 11x11 Gaussian window (sigma 1.5), valid
// filtering, averaged over channels. Frames must be at least 11x11.
double ssim(const torch::Tensor& a, const torch::Tensor& b);

// ---------------------------------------------------------------------------
// Inception score
// ---------------------------------------------------------------------------

// exp(mean_x KL(p(y|x) || p(y))) from per-sample class distributions.
double inception_score(const std::vector<std::vector<double>>& conditionals);

inline constexpr std::int64_t kActionStackFrames = 10;

// Convolutional classifier over kActionStackFrames frames stacked along the
// channel axis: four stride-2 conv stages, then a linear layer.
class ActionClassifierImpl : public torch::nn::Module {
public:
    ActionClassifierImpl(std::int64_t channels, std::int64_t height, std::int64_t width, std::int64_t num_classes,
                         std::int64_t base_channels = 16);
    torch::Tensor forward(const torch::Tensor& stacked); // logits
    torch::Tensor probabilities(const torch::Tensor& stacked) { return torch::softmax(forward(stacked), 1); }

    std::int64_t input_channels() const { return channels_ * kActionStackFrames; }
    std::int64_t frame_channels() const { return channels_; }
    std::int64_t height() const { return height_; }
    std::int64_t width() const { return width_; }
    std::int64_t num_classes() const { return num_classes_; }
    std::int64_t base_channels() const { return base_; }

private:
    std::int64_t channels_, height_, width_, num_classes_, base_;
    torch::nn::Sequential features_{nullptr};
    torch::nn::Linear fc_{nullptr};
};
TORCH_MODULE(ActionClassifier);

// First kActionStackFrames frames of [T, C, H, W] as [10 C, H, W].
torch::Tensor stack_frames(const torch::Tensor& sequence);

struct ActionClassifierConfig {
    std::int64_t max_epochs = 40;
    std::int64_t patience = 6;
    std::int64_t batch_size = 32;
    double learning_rate = 0.001;
    double val_fraction = 0.2;
    double test_fraction = 0.2;
    std::int64_t base_channels = 16;
    std::uint64_t seed = 1;
};

struct ActionClassifierResult {
    ActionClassifier net{nullptr};
    double val_accuracy = 0.0;
    double test_accuracy = 0.0;
    std::int64_t epochs = 0;
};

// Trains on every 10-frame window of each clip (stride 5), splitting by clip.
ActionClassifierResult train_action_classifier(const ClipDataset& dataset, const ActionClassifierConfig& config);

// p(y|x) for each sequence [T >= 10, C, H, W].
std::vector<std::vector<double>> action_probabilities(ActionClassifier& classifier,
                                                      const std::vector<torch::Tensor>& sequences);
double inception_score(ActionClassifier& classifier, const std::vector<torch::Tensor>& sequences);

void save_action_classifier(ActionClassifier& classifier, const std::filesystem::path& path);
ActionClassifier load_action_classifier(const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Disentanglement and nearest neighbours
// ---------------------------------------------------------------------------

struct DisentanglementReport {
    double acc_content_from_hc = 0.0;
    double acc_content_from_hp = 0.0;
    double beta = 0.0;
    std::string dataset_id;
    std::int64_t num_classes = 0;

    nlohmann::json to_json() const;
};

// Per-frame content labels and clip groups of a dataset.
struct FrameLabels {
    std::vector<std::int64_t> labels;
    std::vector<std::int64_t> groups;
};
FrameLabels frame_labels(const ClipDataset& dataset);

// Per-frame codes [N*T, d] in clip-major order.
torch::Tensor encode_frames(DrnetModel& model, const ClipDataset& dataset, bool pose);

// Trains one classifier head on h_c and one on h_p and reports held-out
// accuracies (clips never straddle splits).
DisentanglementReport disentanglement_report(DrnetModel& model, const ClipDataset& dataset,
                                             const ClassifierConfig& config, double beta,
                                             const std::string& dataset_id = "");

enum class ProbeSpace { pose, pose_content };
ProbeSpace probe_space_from_string(const std::string& name);

struct NeighborMatch {
    std::size_t clip = 0;
    std::size_t frame = 0;
    double distance = 0.0;
};

// Exact nearest reference row per query row in double precision. Reference
// rows are ordered (clip, frame) with `frames_per_clip` rows per clip; ties go
// to the lowest row.
std::vector<NeighborMatch> nearest_neighbors(const torch::Tensor& queries, const torch::Tensor& references,
                                             std::size_t frames_per_clip);

// Codes every frame one at a time so identical frames map to identical codes.
torch::Tensor probe_codes(DrnetModel& model, const torch::Tensor& frames, ProbeSpace space);

std::vector<NeighborMatch> nn_probe(DrnetModel& model, const torch::Tensor& query_frames, const ClipDataset& reference,
                                    ProbeSpace space);

} // namespace drnet
