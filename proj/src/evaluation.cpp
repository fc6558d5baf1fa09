#include "drnet/evaluation.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>

#include "drnet/losses.hpp"
#include "drnet/prediction.hpp"

namespace drnet {

namespace nn = torch::nn;

// ---------------------------------------------------------------------------
// Grids and interpolation
// ---------------------------------------------------------------------------

torch::Tensor ImageGrid::render(int pad) const {
    if (row_images.empty() || col_images.empty()) throw ConfigError("cannot render an empty grid");
    const auto& ref = row_images.front();
    const auto c = ref.size(0), h = ref.size(1), w = ref.size(2);
    const auto n = std::int64_t(row_images.size()), m = std::int64_t(col_images.size());
    auto out = torch::ones({c, (n + 1) * (h + pad) + pad, (m + 1) * (w + pad) + pad});
    const auto place = [&](const torch::Tensor& img, std::int64_t r, std::int64_t col) {
        out.narrow(1, pad + r * (h + pad), h).narrow(2, pad + col * (w + pad), w).copy_(img);
    };
    out.narrow(1, pad, h).narrow(2, pad, w).zero_();
    for (std::int64_t j = 0; j < m; ++j) place(col_images[std::size_t(j)], 0, j + 1);
    for (std::int64_t i = 0; i < n; ++i) {
        place(row_images[std::size_t(i)], i + 1, 0);
        for (std::int64_t j = 0; j < m; ++j) place(cells[std::size_t(i)][std::size_t(j)], i + 1, j + 1);
    }
    return out;
}

ImageGrid swap_grid(DrnetModel& model, const std::vector<torch::Tensor>& row_images,
                    const std::vector<torch::Tensor>& col_images) {
    if (row_images.empty() || col_images.empty()) throw ConfigError("swap grid needs at least one row and one column");
    ImageGrid grid;
    grid.row_images = row_images;
    grid.col_images = col_images;
    for (const auto& r : row_images) {
        auto& row = grid.cells.emplace_back();
        for (const auto& c : col_images) row.push_back(reconstruct(model, r, c));
    }
    return grid;
}

Interpolation interpolate_pose(DrnetModel& model, const torch::Tensor& x1, const torch::Tensor& x2,
                               std::int64_t steps) {
    if (steps < 2) throw ConfigError("interpolation needs steps >= 2");
    const auto a = (x1.dim() == 3 ? x1.unsqueeze(0) : x1).to(torch::kFloat32);
    const auto b = (x2.dim() == 3 ? x2.unsqueeze(0) : x2).to(torch::kFloat32);
    if (a.sizes() != b.sizes() || a.size(0) != 1) throw ConfigError("interpolation endpoints must be single frames of one shape");
    const auto& s = model.spec();
    if (a.size(1) != s.channels || a.size(2) != s.height || a.size(3) != s.width)
        throw ConfigError("interpolation frames do not match the architecture");

    model.eval();
    torch::NoGradGuard no_grad;
    const auto content = model.encode_content(a);
    const auto p1 = model.encode_pose(a);
    const auto p2 = model.encode_pose(b);

    Interpolation out;
    for (std::int64_t i = 0; i < steps; ++i) {
        torch::Tensor pose;
        if (i == 0) {
            pose = p1;
        } else if (i == steps - 1) {
            pose = p2;
        } else {
            const double t = double(i) / double(steps - 1);
            const auto mix = (1.0 - t) * p1 + t * p2;
            if (mix.norm().item<double>() < 1e-6)
                throw ConfigError("pose endpoints are antipodal; the interpolated pose at s=" + std::to_string(t) +
                                  " has zero norm and cannot be renormalized");
            pose = unit_normalize(mix);
        }
        out.poses.push_back(pose[0].clone());
        out.frames.push_back(model.decode(content.code, pose, content.skips)[0].clone());
    }
    return out;
}

// ---------------------------------------------------------------------------
// Image metrics
// ---------------------------------------------------------------------------

namespace {

void check_pair(const torch::Tensor& a, const torch::Tensor& b) {
    if (a.sizes() != b.sizes()) throw ConfigError("image shapes differ");
    if (a.dim() != 3) throw ConfigError("images must be [C, H, W]");
}

torch::Tensor gaussian_window() {
    constexpr int size = 11;
    constexpr double sigma = 1.5;
    auto g = torch::empty({size}, torch::kFloat64);
    for (int i = 0; i < size; ++i) g[i] = std::exp(-double((i - 5) * (i - 5)) / (2.0 * sigma * sigma));
    g /= g.sum();
    return torch::outer(g, g).reshape({1, 1, size, size});
}

} // namespace

double psnr(const torch::Tensor& a, const torch::Tensor& b) {
    check_pair(a, b);
    const double mse = (a.to(torch::kFloat64) - b.to(torch::kFloat64)).pow(2).mean().item<double>();
    if (mse < 1e-10) return kPsnrCap;
    return std::min(kPsnrCap, 10.0 * std::log10(1.0 / mse));
}

double ssim(const torch::Tensor& a, const torch::Tensor& b) {
    check_pair(a, b);
    if (a.size(1) < 11 || a.size(2) < 11) throw ConfigError("SSIM needs frames of at least 11x11");
    constexpr double c1 = 0.01 * 0.01, c2 = 0.03 * 0.03;
    const auto win = gaussian_window();
    const auto x = a.to(torch::kFloat64).unsqueeze(1); // [C, 1, H, W]
    const auto y = b.to(torch::kFloat64).unsqueeze(1);
    const auto f = [&](const torch::Tensor& t) { return torch::conv2d(t, win); };
    const auto mx = f(x), my = f(y);
    const auto sxx = f(x * x) - mx * mx;
    const auto syy = f(y * y) - my * my;
    const auto sxy = f(x * y) - mx * my;
    const auto map = ((2 * mx * my + c1) * (2 * sxy + c2)) / ((mx * mx + my * my + c1) * (sxx + syy + c2));
    return map.mean({1, 2, 3}).mean().item<double>();
}

// ---------------------------------------------------------------------------
// Inception score
// ---------------------------------------------------------------------------

double inception_score(const std::vector<std::vector<double>>& conditionals) {
    if (conditionals.empty()) throw ConfigError("inception score needs at least one sample");
    const std::size_t k = conditionals.front().size();
    if (k == 0) throw ConfigError("class distributions are empty");
    std::vector<double> marginal(k, 0.0);
    for (const auto& p : conditionals) {
        if (p.size() != k) throw ConfigError("class distributions differ in length");
        double total = 0.0;
        for (double v : p) {
            if (!(v >= 0.0)) throw ConfigError("class probabilities must be non-negative");
            total += v;
        }
        if (std::abs(total - 1.0) > 1e-6) throw ConfigError("class distribution does not sum to 1");
        for (std::size_t c = 0; c < k; ++c) marginal[c] += p[c];
    }
    for (double& m : marginal) m /= double(conditionals.size());

    double kl_sum = 0.0;
    for (const auto& p : conditionals) {
        double kl = 0.0;
        for (std::size_t c = 0; c < k; ++c)
            if (p[c] > 0.0) kl += p[c] * (std::log(p[c]) - std::log(std::max(marginal[c], kProbClamp)));
        kl_sum += kl;
    }
    return std::clamp(std::exp(kl_sum / double(conditionals.size())), 1.0, double(k));
}

ActionClassifierImpl::ActionClassifierImpl(std::int64_t channels, std::int64_t height, std::int64_t width,
                                           std::int64_t num_classes, std::int64_t base_channels)
    : channels_(channels), height_(height), width_(width), num_classes_(num_classes), base_(base_channels) {
    if (channels < 1 || num_classes < 2 || base_channels < 1) throw ConfigError("invalid action classifier sizes");
    if (height % 16 != 0 || width % 16 != 0 || height < 16 || width < 16)
        throw ConfigError("action classifier frames must be multiples of 16 pixels");
    const auto conv = [](std::int64_t in, std::int64_t out) {
        return nn::Conv2d(nn::Conv2dOptions(in, out, 4).stride(2).padding(1).bias(false));
    };
    const auto lrelu = [] { return nn::LeakyReLU(nn::LeakyReLUOptions().negative_slope(0.2)); };
    const auto b = base_channels;
    features_ = register_module(
        "features", nn::Sequential(conv(input_channels(), b), lrelu(), conv(b, 2 * b), nn::BatchNorm2d(2 * b), lrelu(),
                                   conv(2 * b, 4 * b), nn::BatchNorm2d(4 * b), lrelu(), conv(4 * b, 8 * b),
                                   nn::BatchNorm2d(8 * b), lrelu()));
    fc_ = register_module("fc", nn::Linear(8 * b * (height / 16) * (width / 16), num_classes));
}

torch::Tensor ActionClassifierImpl::forward(const torch::Tensor& stacked) {
    if (stacked.dim() != 4 || stacked.size(1) != input_channels() || stacked.size(2) != height_ ||
        stacked.size(3) != width_)
        throw ConfigError("action classifier expects [B, " + std::to_string(input_channels()) + ", " +
                          std::to_string(height_) + ", " + std::to_string(width_) + "]");
    return fc_->forward(features_->forward(stacked).flatten(1));
}

torch::Tensor stack_frames(const torch::Tensor& sequence) {
    if (sequence.dim() != 4) throw ConfigError("sequence must be [T, C, H, W]");
    if (sequence.size(0) < kActionStackFrames)
        throw ConfigError("sequence has " + std::to_string(sequence.size(0)) + " frames; the action classifier needs " +
                          std::to_string(kActionStackFrames));
    const auto s = sequence.narrow(0, 0, kActionStackFrames);
    return s.reshape({kActionStackFrames * s.size(1), s.size(2), s.size(3)}).to(torch::kFloat32);
}

namespace {

double action_accuracy(ActionClassifier& net, const std::vector<torch::Tensor>& clips,
                       const std::vector<std::pair<std::int64_t, std::int64_t>>& windows,
                       const std::vector<std::int64_t>& labels, const std::vector<std::int64_t>& rows) {
    if (rows.empty()) return 0.0;
    net->eval();
    torch::NoGradGuard no_grad;
    std::int64_t correct = 0;
    for (std::size_t i = 0; i < rows.size(); i += 64) {
        std::vector<torch::Tensor> xs;
        std::vector<std::int64_t> ys;
        for (std::size_t j = i; j < std::min(rows.size(), i + 64); ++j) {
            const auto [clip, start] = windows[std::size_t(rows[j])];
            xs.push_back(stack_frames(clips[std::size_t(clip)].narrow(0, start, kActionStackFrames)));
            ys.push_back(labels[std::size_t(rows[j])]);
        }
        const auto pred = net->forward(torch::stack(xs)).argmax(1);
        correct += (pred == torch::tensor(ys)).sum().item<std::int64_t>();
    }
    return double(correct) / double(rows.size());
}

std::string snapshot(const nn::Module& m) {
    torch::serialize::OutputArchive a;
    m.save(a);
    std::ostringstream os;
    a.save_to(os);
    return os.str();
}

void restore(nn::Module& m, const std::string& blob) {
    std::istringstream is(blob);
    torch::serialize::InputArchive a;
    a.load_from(is);
    m.load(a);
}

} // namespace

ActionClassifierResult train_action_classifier(const ClipDataset& dataset, const ActionClassifierConfig& config) {
    const auto& s = dataset.shape();
    if (std::int64_t(s.frames) < kActionStackFrames)
        throw ConfigError("clips have " + std::to_string(s.frames) + " frames; the action classifier needs " +
                          std::to_string(kActionStackFrames));
    if (dataset.num_classes() < 2) throw ConfigError("the action classifier needs at least 2 classes");
    if (config.max_epochs < 1 || config.patience < 1 || config.batch_size < 2)
        throw ConfigError("action classifier needs max_epochs >= 1, patience >= 1, batch_size >= 2");

    torch::manual_seed(config.seed);
    Rng rng(derive_seed(config.seed, 10));
    std::vector<torch::Tensor> clips;
    std::vector<std::pair<std::int64_t, std::int64_t>> windows;
    std::vector<std::int64_t> labels, groups;
    for (std::size_t c = 0; c < dataset.size(); ++c) {
        clips.push_back(clip_tensor(dataset, c));
        for (std::int64_t start = 0; start + kActionStackFrames <= std::int64_t(s.frames); start += 5) {
            windows.emplace_back(std::int64_t(c), start);
            labels.push_back(dataset.clip(c).content_label);
            groups.push_back(std::int64_t(c));
        }
    }
    const auto split = split_by_group(windows.size(), groups, config.val_fraction, config.test_fraction, rng);

    ActionClassifierResult result;
    result.net = ActionClassifier(s.channels, s.height, s.width, dataset.num_classes(), config.base_channels);
    for (auto& m : result.net->modules(false)) {
        if (auto* conv = m->as<nn::Conv2d>()) nn::init::normal_(conv->weight, 0.0, 0.02);
    }
    torch::optim::Adam opt(result.net->parameters(), torch::optim::AdamOptions(config.learning_rate));

    std::string best = snapshot(*result.net);
    double best_val = -1.0;
    std::int64_t since_best = 0;
    auto order = split.train;
    for (std::int64_t epoch = 1; epoch <= config.max_epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        result.net->train();
        for (std::size_t i = 0; i + 1 < order.size(); i += std::size_t(config.batch_size)) {
            std::vector<torch::Tensor> xs;
            std::vector<std::int64_t> ys;
            for (std::size_t j = i; j < std::min(order.size(), i + std::size_t(config.batch_size)); ++j) {
                const auto [clip, start] = windows[std::size_t(order[j])];
                xs.push_back(stack_frames(clips[std::size_t(clip)].narrow(0, start, kActionStackFrames)));
                ys.push_back(labels[std::size_t(order[j])]);
            }
            if (xs.size() < 2) continue;
            opt.zero_grad();
            const auto loss = torch::cross_entropy_loss(result.net->forward(torch::stack(xs)), torch::tensor(ys));
            loss.backward();
            opt.step();
        }
        result.epochs = epoch;
        const double val = action_accuracy(result.net, clips, windows, labels, split.val);
        if (val > best_val) {
            best_val = val;
            best = snapshot(*result.net);
            since_best = 0;
        } else if (++since_best >= config.patience) {
            break;
        }
    }
    restore(*result.net, best);
    result.net->eval();
    result.val_accuracy = best_val;
    result.test_accuracy =
        split.test.empty() ? best_val : action_accuracy(result.net, clips, windows, labels, split.test);
    return result;
}

std::vector<std::vector<double>> action_probabilities(ActionClassifier& classifier,
                                                      const std::vector<torch::Tensor>& sequences) {
    if (sequences.empty()) throw ConfigError("inception score needs at least one sequence");
    classifier->eval();
    torch::NoGradGuard no_grad;
    std::vector<std::vector<double>> out;
    for (std::size_t i = 0; i < sequences.size(); i += 64) {
        std::vector<torch::Tensor> xs;
        for (std::size_t j = i; j < std::min(sequences.size(), i + 64); ++j) xs.push_back(stack_frames(sequences[j]));
        const auto p = classifier->probabilities(torch::stack(xs)).to(torch::kFloat64).contiguous();
        for (std::int64_t r = 0; r < p.size(0); ++r) {
            const double* row = p[r].data_ptr<double>();
            std::vector<double> dist(row, row + p.size(1));
            const double total = std::accumulate(dist.begin(), dist.end(), 0.0);
            for (double& v : dist) v /= total;
            out.push_back(std::move(dist));
        }
    }
    return out;
}

double inception_score(ActionClassifier& classifier, const std::vector<torch::Tensor>& sequences) {
    return inception_score(action_probabilities(classifier, sequences));
}

void save_action_classifier(ActionClassifier& classifier, const std::filesystem::path& path) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    torch::serialize::OutputArchive archive;
    classifier->save(archive);
    archive.save_to(path.string());
    const nlohmann::json side = {{"format_version", ModelCheckpoint::kFormatVersion},
                                 {"kind", "action_classifier"},
                                 {"channels", classifier->frame_channels()},
                                 {"height", classifier->height()},
                                 {"width", classifier->width()},
                                 {"num_classes", classifier->num_classes()},
                                 {"base_channels", classifier->base_channels()},
                                 {"stack_frames", kActionStackFrames}};
    std::ofstream out(checkpoint_sidecar_path(path), std::ios::trunc);
    if (!out) throw FormatError("cannot write " + checkpoint_sidecar_path(path).string());
    out << side.dump(2) << "\n";
}

ActionClassifier load_action_classifier(const std::filesystem::path& path) {
    std::ifstream in(checkpoint_sidecar_path(path));
    if (!in) throw FormatError("cannot open " + checkpoint_sidecar_path(path).string());
    ActionClassifier net{nullptr};
    try {
        const auto side = nlohmann::json::parse(in);
        if (side.value("kind", "") != "action_classifier") throw FormatError("not an action classifier sidecar");
        net = ActionClassifier(side.at("channels").get<std::int64_t>(), side.at("height").get<std::int64_t>(),
                               side.at("width").get<std::int64_t>(), side.at("num_classes").get<std::int64_t>(),
                               side.at("base_channels").get<std::int64_t>());
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("malformed action classifier sidecar: ") + e.what());
    }
    try {
        torch::serialize::InputArchive archive;
        archive.load_from(path.string());
        net->load(archive);
    } catch (const c10::Error& e) {
        throw FormatError(std::string("corrupt action classifier archive: ") + e.what_without_backtrace());
    }
    net->eval();
    return net;
}

// ---------------------------------------------------------------------------
// Disentanglement and nearest neighbours
// ---------------------------------------------------------------------------

nlohmann::json DisentanglementReport::to_json() const {
    return {{"acc_content_from_hc", acc_content_from_hc},
            {"acc_content_from_hp", acc_content_from_hp},
            {"beta", beta},
            {"dataset_id", dataset_id},
            {"num_classes", num_classes}};
}

FrameLabels frame_labels(const ClipDataset& dataset) {
    FrameLabels out;
    for (std::size_t c = 0; c < dataset.size(); ++c)
        for (std::uint32_t t = 0; t < dataset.shape().frames; ++t) {
            out.labels.push_back(dataset.clip(c).content_label);
            out.groups.push_back(std::int64_t(c));
        }
    return out;
}

torch::Tensor encode_frames(DrnetModel& model, const ClipDataset& dataset, bool pose) {
    model.eval();
    torch::NoGradGuard no_grad;
    std::vector<torch::Tensor> out;
    for (std::size_t c = 0; c < dataset.size(); ++c) {
        const auto x = clip_tensor(dataset, c);
        out.push_back(pose ? model.encode_pose(x) : model.encode_content(x).code);
    }
    return torch::cat(out);
}

DisentanglementReport disentanglement_report(DrnetModel& model, const ClipDataset& dataset,
                                             const ClassifierConfig& config, double beta,
                                             const std::string& dataset_id) {
    if (model.content_dim() == 0) throw ConfigError("the model has no separate content code to probe");
    const auto fl = frame_labels(dataset);
    DisentanglementReport r;
    r.beta = beta;
    r.dataset_id = dataset_id;
    r.num_classes = dataset.num_classes();
    r.acc_content_from_hc = train_classifier_head(encode_frames(model, dataset, false), fl.labels, config, fl.groups).test_accuracy;
    r.acc_content_from_hp = train_classifier_head(encode_frames(model, dataset, true), fl.labels, config, fl.groups).test_accuracy;
    return r;
}

ProbeSpace probe_space_from_string(const std::string& name) {
    if (name == "pose") return ProbeSpace::pose;
    if (name == "pose+content" || name == "pose_content") return ProbeSpace::pose_content;
    throw ConfigError("unknown probe space '" + name + "' (expected pose or pose+content)");
}

std::vector<NeighborMatch> nearest_neighbors(const torch::Tensor& queries, const torch::Tensor& references,
                                             std::size_t frames_per_clip) {
    if (queries.dim() != 2 || references.dim() != 2 || queries.size(1) != references.size(1))
        throw ConfigError("query and reference codes must be [n, d] with equal d");
    if (references.size(0) == 0) throw ConfigError("reference set is empty");
    if (frames_per_clip == 0) throw ConfigError("frames_per_clip must be positive");
    const auto q = queries.to(torch::kFloat64).contiguous();
    const auto r = references.to(torch::kFloat64).contiguous();
    const auto d = q.size(1);
    const double* qp = q.data_ptr<double>();
    const double* rp = r.data_ptr<double>();
    std::vector<NeighborMatch> out;
    for (std::int64_t i = 0; i < q.size(0); ++i) {
        double best = std::numeric_limits<double>::infinity();
        std::int64_t best_row = 0;
        for (std::int64_t j = 0; j < r.size(0); ++j) {
            double dist = 0.0;
            for (std::int64_t k = 0; k < d; ++k) {
                const double diff = qp[i * d + k] - rp[j * d + k];
                dist += diff * diff;
            }
            if (dist < best) {
                best = dist;
                best_row = j;
            }
        }
        out.push_back({std::size_t(best_row) / frames_per_clip, std::size_t(best_row) % frames_per_clip, std::sqrt(best)});
    }
    return out;
}

torch::Tensor probe_codes(DrnetModel& model, const torch::Tensor& frames, ProbeSpace space) {
    if (frames.dim() != 4) throw ConfigError("frames must be [n, C, H, W]");
    model.eval();
    torch::NoGradGuard no_grad;
    std::vector<torch::Tensor> rows;
    for (std::int64_t i = 0; i < frames.size(0); ++i) {
        const auto x = frames.narrow(0, i, 1).to(torch::kFloat32);
        auto code = model.encode_pose(x);
        if (space == ProbeSpace::pose_content) code = torch::cat({code, model.encode_content(x).code}, 1);
        rows.push_back(code);
    }
    return torch::cat(rows);
}

std::vector<NeighborMatch> nn_probe(DrnetModel& model, const torch::Tensor& query_frames, const ClipDataset& reference,
                                    ProbeSpace space) {
    if (reference.empty()) throw ConfigError("reference dataset is empty");
    std::vector<torch::Tensor> refs;
    for (std::size_t c = 0; c < reference.size(); ++c) refs.push_back(clip_tensor(reference, c));
    return nearest_neighbors(probe_codes(model, query_frames, space), probe_codes(model, torch::cat(refs), space),
                             reference.shape().frames);
}

} // namespace drnet
