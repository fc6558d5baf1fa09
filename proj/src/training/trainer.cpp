#include <sstream>

#include "drnet/training.hpp"

namespace drnet {

namespace {

constexpr std::uint64_t kSamplerStream = 5;

void check_dataset(const ClipDataset& data, const TrainConfig& config) {
    const auto& s = data.shape();
    const auto& a = config.arch;
    if (std::int64_t(s.channels) != a.channels || std::int64_t(s.height) != a.height ||
        std::int64_t(s.width) != a.width) {
        std::ostringstream msg;
        msg << "dataset frames are " << s.channels << "x" << s.height << "x" << s.width << " but the architecture expects "
            << a.channels << "x" << a.height << "x" << a.width;
        throw ConfigError(msg.str());
    }
    if (config.mode == TrainMode::drnet && data.size() < 2)
        throw ConfigError("the scene discriminator needs at least 2 clips");
    if (data.empty()) throw ConfigError("dataset is empty");
    if (std::int64_t(s.frames) <= config.max_offset)
        throw ConfigError("max_offset must be smaller than the clip length");
}

SkipState head_of(const SkipState& skips, std::int64_t n) {
    SkipState out;
    for (const auto& s : skips.stages) out.stages.push_back(s.narrow(0, 0, n));
    return out;
}

std::string rng_state(const Rng& rng) {
    std::ostringstream os;
    os << rng;
    return os.str();
}

} // namespace

Trainer::Trainer(const ClipDataset& dataset, const TrainConfig& config)
    : data_(dataset), config_(config), model_(config.arch, config.mode, config.seed),
      rng_(derive_seed(config.seed, kSamplerStream)) {
    config_.validate();
    check_dataset(data_, config_);
    build_optimizers();
}

Trainer::Trainer(const ClipDataset& dataset, const ModelCheckpoint& ckpt)
    : data_(dataset), config_(ckpt.config), model_(ckpt.config.arch, ckpt.config.mode, ckpt.config.seed) {
    config_.validate();
    check_dataset(data_, config_);
    build_optimizers();

    std::istringstream is(ckpt.blob);
    torch::serialize::InputArchive archive;
    archive.load_from(is);
    torch::serialize::InputArchive nets;
    archive.read("networks", nets);
    model_.load(nets);
    torch::serialize::InputArchive opt;
    archive.read("model_optimizer", opt);
    model_opt_->load(opt);
    if (disc_opt_) {
        torch::serialize::InputArchive dopt;
        archive.read("disc_optimizer", dopt);
        disc_opt_->load(dopt);
    }
    c10::IValue rng;
    archive.read("rng", rng);
    std::istringstream rs(rng.toStringRef());
    rs >> rng_;
    if (!rs) throw FormatError("checkpoint RNG state is corrupt");
    iteration_ = ckpt.iteration;
}

void Trainer::build_optimizers() {
    const auto opts = torch::optim::AdamOptions(config_.learning_rate)
                          .betas(std::make_tuple(config_.adam_betas.first, config_.adam_betas.second));
    model_opt_ = std::make_unique<torch::optim::Adam>(model_.model_parameters(), opts);
    if (model_.discriminator) disc_opt_ = std::make_unique<torch::optim::Adam>(model_.discriminator_parameters(), opts);
}

void Trainer::scale_learning_rate(double factor) {
    if (!(factor >= 0.0)) throw ConfigError("learning-rate scale must be >= 0");
    for (auto* opt : {model_opt_.get(), disc_opt_.get()}) {
        if (!opt) continue;
        for (auto& group : opt->param_groups())
            static_cast<torch::optim::AdamOptions&>(group.options()).lr(config_.learning_rate * factor);
    }
}

torch::Tensor Trainer::batch(const std::vector<std::span<const float>>& frames) const {
    const auto& s = data_.shape();
    return frames_to_tensor(frames, s.channels, s.height, s.width);
}

std::pair<torch::Tensor, torch::Tensor> Trainer::sample_pairs() {
    std::vector<std::span<const float>> a, b;
    for (std::int64_t i = 0; i < config_.batch_size; ++i) {
        const auto p = sample_frame_pair(data_, std::size_t(config_.max_offset), rng_);
        a.push_back(p.x_t);
        b.push_back(p.x_tk);
    }
    return {batch(a), batch(b)};
}

std::pair<double, double> Trainer::discriminator_update() {
    if (!model_.discriminator) return {0.0, 0.0};
    const auto n = config_.batch_size;
    std::vector<std::span<const float>> frames;
    frames.reserve(std::size_t(3 * n));
    std::vector<std::span<const float>> same, cross;
    for (std::int64_t i = 0; i < n; ++i) {
        const auto p = sample_pose_pair_frames(data_, std::size_t(config_.max_offset), rng_);
        frames.push_back(p.same.x_t);
        same.push_back(p.same.x_tk);
        cross.push_back(p.cross_frame);
    }
    frames.insert(frames.end(), same.begin(), same.end());
    frames.insert(frames.end(), cross.begin(), cross.end());

    torch::Tensor poses;
    model_.pose_encoder->eval();
    {
        torch::NoGradGuard no_grad;
        poses = model_.pose_encoder->encode(batch(frames));
    }
    model_.pose_encoder->train();
    const auto anchor = poses.narrow(0, 0, n);
    const auto pos = poses.narrow(0, n, n);
    const auto neg = poses.narrow(0, 2 * n, n);

    model_.discriminator->train();
    disc_opt_->zero_grad();
    const auto p_same = model_.discriminator->forward(anchor, pos);
    const auto p_diff = model_.discriminator->forward(anchor, neg);
    const auto loss = discriminator_loss(p_same, p_diff);
    const double value = loss.item<double>();
    if (!std::isfinite(value))
        throw TrainingError("non-finite loss component: adv_c at step " + std::to_string(iteration_ + 1));
    loss.backward();
    disc_opt_->step();
    return {value, discriminator_accuracy(p_same.detach(), p_diff.detach())};
}

LossBreakdown Trainer::model_update() {
    const auto n = config_.batch_size;
    auto [x_t, x_tk] = sample_pairs();

    model_.content_encoder->train();
    if (model_.pose_encoder) model_.pose_encoder->train();
    model_.decoder->train();
    model_opt_->zero_grad();

    LossBreakdown out;
    torch::Tensor total;
    try {
        const auto pair = torch::cat({x_t, x_tk});
        if (config_.mode == TrainMode::ae_lstm) {
            const auto enc = model_.content_encoder->forward(pair);
            const auto code_tk = enc.code.narrow(0, n, n);
            const auto empty = torch::zeros({n, 0}, code_tk.options());
            const auto rec = reconstruction_loss(model_.decode(empty, code_tk, head_of(enc.skips, n)), x_tk);
            total = total_model_loss(rec, torch::zeros({}), torch::zeros({}), LossWeights{0.0, 0.0});
            out.rec = rec.item<double>();
        } else {
            const auto content = model_.content_encoder->forward(pair);
            const auto hc_t = content.code.narrow(0, 0, n);
            const auto hc_tk = content.code.narrow(0, n, n);
            const auto poses = model_.pose_encoder->encode(pair);
            const auto hp_t = poses.narrow(0, 0, n);
            const auto hp_tk = poses.narrow(0, n, n);

            const auto rec = reconstruction_loss(model_.decode(hc_t, hp_tk, head_of(content.skips, n)), x_tk);
            torch::Tensor sim;
            if (config_.shared_offset) {
                sim = similarity_loss(hc_t, hc_tk);
            } else {
                auto [y_t, y_tk] = sample_pairs();
                const auto codes = model_.content_encoder->encode(torch::cat({y_t, y_tk}));
                sim = similarity_loss(codes.narrow(0, 0, n), codes.narrow(0, n, n));
            }

            model_.discriminator->eval();
            set_requires_grad(*model_.discriminator, false);
            const auto adv = pose_adversarial_loss(model_.discriminator->forward(hp_t, hp_tk));
            set_requires_grad(*model_.discriminator, true);

            LossWeights w = config_.weights;
            if (!config_.include_adversarial) w.beta = 0.0;
            total = total_model_loss(rec, sim, config_.include_adversarial ? adv : adv.detach(), w);
            out.rec = rec.item<double>();
            out.sim = sim.item<double>();
            out.adv_ep = adv.item<double>();
        }
    } catch (const TrainingError& e) {
        throw TrainingError(std::string(e.what()) + " at step " + std::to_string(iteration_ + 1));
    }
    out.total = total.item<double>();
    total.backward();
    model_opt_->step();
    return out;
}

MetricRecord Trainer::step() {
    MetricRecord r;
    for (std::int64_t i = 0; i < config_.disc_updates_per_model_update && model_.discriminator; ++i) {
        const auto [loss, acc] = discriminator_update();
        r.loss_adv_c = loss;
        r.disc_accuracy = acc;
    }
    const auto b = model_update();
    ++iteration_;
    r.step = iteration_;
    r.loss_rec = b.rec;
    r.loss_sim = b.sim;
    r.loss_adv_ep = b.adv_ep;
    return r;
}

std::vector<MetricRecord> Trainer::run(std::int64_t steps, const std::function<void(const MetricRecord&)>& on_step) {
    std::vector<MetricRecord> records;
    records.reserve(std::size_t(std::max<std::int64_t>(steps, 0)));
    for (std::int64_t i = 0; i < steps; ++i) {
        records.push_back(step());
        if (on_step) on_step(records.back());
    }
    return records;
}

ModelCheckpoint Trainer::checkpoint() const {
    torch::serialize::OutputArchive archive;
    torch::serialize::OutputArchive nets;
    model_.save(nets);
    archive.write("networks", nets);
    torch::serialize::OutputArchive opt;
    model_opt_->save(opt);
    archive.write("model_optimizer", opt);
    if (disc_opt_) {
        torch::serialize::OutputArchive dopt;
        disc_opt_->save(dopt);
        archive.write("disc_optimizer", dopt);
    }
    archive.write("rng", c10::IValue(rng_state(rng_)));

    std::ostringstream os;
    archive.save_to(os);
    ModelCheckpoint ckpt;
    ckpt.config = config_;
    ckpt.iteration = iteration_;
    ckpt.blob = os.str();
    return ckpt;
}

TrainResult train_drnet(const ClipDataset& dataset, const TrainConfig& config,
                        const std::function<void(const MetricRecord&)>& on_step) {
    Trainer trainer(dataset, config);
    TrainResult result;
    result.records = trainer.run(config.steps, on_step);
    result.checkpoint = trainer.checkpoint();
    return result;
}

TrainResult train_ae_lstm_baseline(const ClipDataset& dataset, TrainConfig config,
                                   const std::function<void(const MetricRecord&)>& on_step) {
    config.mode = TrainMode::ae_lstm;
    return train_drnet(dataset, config, on_step);
}

} // namespace drnet
