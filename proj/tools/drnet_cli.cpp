#include <cstdio>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "drnet/datasets.hpp"
#include "drnet/evaluation.hpp"
#include "drnet/image_io.hpp"
#include "drnet/prediction.hpp"
#include "drnet/run_dir.hpp"
#include "drnet/training.hpp"

using namespace drnet;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kExitRuntime = 1;
constexpr int kExitUsage = 2;

class UsageError : public ConfigError {
public:
    using ConfigError::ConfigError;
};

template <typename T>
void take(const CLI::Option* opt, T& dst, const T& value) {
    if (opt->count() > 0) dst = value;
}

ClipDataset load_data(const std::string& path) {
    if (path.empty()) throw UsageError("--data is required");
    return read_clipset(path);
}

std::vector<int> parse_int_list(const std::string& text) {
    std::vector<int> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (item.empty()) continue;
        try {
            out.push_back(std::stoi(item));
        } catch (const std::exception&) {
            throw UsageError("'" + item + "' is not an integer");
        }
    }
    return out;
}

// Resolves --ckpt (explicit) or the latest checkpoint of --run.
fs::path resolve_checkpoint(const std::string& ckpt, const std::string& run) {
    if (!ckpt.empty()) {
        if (!fs::exists(ckpt)) throw FormatError("checkpoint " + ckpt + " does not exist");
        return ckpt;
    }
    if (run.empty()) throw UsageError("either --ckpt or --run is required");
    const auto dir = RunDirectory::named(run);
    const auto latest = dir.latest_checkpoint();
    if (!latest) throw FormatError("run directory " + dir.path().string() + " holds no checkpoint");
    return *latest;
}

// Artifacts land in --out, else in the run directory, else next to the checkpoint.
fs::path output_dir(const std::string& out, const std::string& run, const fs::path& ckpt) {
    if (!out.empty()) return out;
    if (!run.empty()) return RunDirectory::named(run).path();
    return ckpt.parent_path();
}

torch::Tensor frame_tensor(const ClipDataset& data, std::size_t clip, std::size_t frame) {
    if (clip >= data.size()) throw UsageError("clip " + std::to_string(clip) + " out of range");
    if (frame >= data.shape().frames) throw UsageError("frame " + std::to_string(frame) + " out of range");
    const auto& s = data.shape();
    return frames_to_tensor({data.frame(clip, frame)}, s.channels, s.height, s.width)[0];
}

void print_table(const json& report) {
    for (const auto& [key, value] : report.items()) {
        if (value.is_object() || value.is_array()) continue;
        std::printf("%-24s %s\n", key.c_str(), value.dump().c_str());
    }
}

// ---------------------------------------------------------------------------
// gen-data
// ---------------------------------------------------------------------------

struct GenDataArgs {
    std::string kind = "moving-digits";
    std::size_t clips = 64;
    std::size_t frames = 20;
    std::uint64_t seed = 1;
    std::string out;
    std::size_t classes = 4;
    int canvas = 64;
    std::string digits;
    int colors = 0;
    std::string motion = "bounce";
    double min_speed = 1.0, max_speed = 3.0;
    std::string mnist_images, mnist_labels;
};

int cmd_gen_data(const GenDataArgs& a) {
    if (a.out.empty()) throw UsageError("--out is required");
    ClipDataset data;
    if (a.kind == "rotating-shapes") {
        RotatingShapesParams p;
        p.canvas = a.canvas;
        data = gen_rotating_shapes(a.clips, a.frames, a.classes, a.seed, p);
    } else {
        MovingDigitsParams p;
        p.canvas = a.canvas;
        p.min_speed = a.min_speed;
        p.max_speed = a.max_speed;
        if (!a.digits.empty()) p.digit_pool = parse_int_list(a.digits);
        if (a.colors > 0) {
            if (a.colors > int(p.palette.size()))
                throw UsageError("--colors must be at most " + std::to_string(p.palette.size()));
            p.palette.resize(std::size_t(a.colors));
        }
        p.motion = a.motion == "orbit" ? MotionRegime::orbit : a.motion == "fixed" ? MotionRegime::fixed
                                                                                    : MotionRegime::bounce;
        const bool mnist = !a.mnist_images.empty() || !a.mnist_labels.empty();
        if (mnist && (a.mnist_images.empty() || a.mnist_labels.empty()))
            throw UsageError("--mnist-images and --mnist-labels go together");
        const auto glyphs = mnist ? GlyphBank::load_mnist(a.mnist_images, a.mnist_labels) : GlyphBank::builtin();
        data = a.kind == "motion-regimes" ? gen_motion_regimes(a.clips, a.frames, a.seed, p, glyphs)
                                          : gen_moving_digits(a.clips, a.frames, a.seed, p, glyphs);
    }
    write_clipset(data, a.out);
    const auto& s = data.shape();
    std::printf("wrote %s: %zu clips x %u frames x %ux%ux%u, %u classes\n", a.out.c_str(), data.size(), s.frames,
                s.channels, s.height, s.width, data.num_classes());
    return 0;
}

// ---------------------------------------------------------------------------
// train
// ---------------------------------------------------------------------------

struct TrainArgs {
    std::string data, name, config_file, resume;
    TrainConfig cfg;
    std::string arch = "dcgan", mode = "drnet";
    std::int64_t ckpt_every = 0;
    bool no_adversarial = false;
    bool independent_offsets = false;
    bool skips = false;
    std::map<std::string, CLI::Option*> opts;
};

TrainConfig merged_config(const TrainArgs& a) {
    TrainConfig c;
    if (!a.config_file.empty()) {
        const auto file = read_json(a.config_file);
        c = TrainConfig::from_json(file.contains("train") ? file.at("train") : file);
    }
    const auto& o = a.opts;
    take(o.at("alpha"), c.weights.alpha, a.cfg.weights.alpha);
    take(o.at("beta"), c.weights.beta, a.cfg.weights.beta);
    take(o.at("lr"), c.learning_rate, a.cfg.learning_rate);
    take(o.at("adam-beta1"), c.adam_betas.first, a.cfg.adam_betas.first);
    take(o.at("adam-beta2"), c.adam_betas.second, a.cfg.adam_betas.second);
    take(o.at("batch"), c.batch_size, a.cfg.batch_size);
    take(o.at("max-offset"), c.max_offset, a.cfg.max_offset);
    take(o.at("steps"), c.steps, a.cfg.steps);
    take(o.at("seed"), c.seed, a.cfg.seed);
    take(o.at("disc-updates"), c.disc_updates_per_model_update, a.cfg.disc_updates_per_model_update);
    take(o.at("log-interval"), c.log_interval, a.cfg.log_interval);
    take(o.at("hc"), c.arch.dim_hc, a.cfg.arch.dim_hc);
    take(o.at("hp"), c.arch.dim_hp, a.cfg.arch.dim_hp);
    take(o.at("width-mult"), c.arch.width_mult, a.cfg.arch.width_mult);
    if (o.at("arch")->count() > 0) c.arch.arch = arch_from_string(a.arch);
    if (o.at("mode")->count() > 0) c.mode = train_mode_from_string(a.mode);
    if (o.at("skips")->count() > 0) c.arch.skip_connections = a.skips;
    if (a.no_adversarial) c.include_adversarial = false;
    if (a.independent_offsets) c.shared_offset = false;
    return c;
}

int cmd_train(const TrainArgs& a) {
    const auto data = load_data(a.data);
    TrainConfig cfg;
    std::optional<ModelCheckpoint> resume;
    if (!a.resume.empty()) {
        resume = load_checkpoint(a.resume);
        cfg = resume->config;
        take(a.opts.at("steps"), cfg.steps, a.cfg.steps);
    } else {
        cfg = merged_config(a);
    }
    // Frame geometry always follows the data.
    const auto& s = data.shape();
    cfg.arch.channels = s.channels;
    cfg.arch.height = s.height;
    cfg.arch.width = s.width;
    cfg.validate();

    const std::string name = a.name.empty() ? to_string(cfg.mode) + "-seed" + std::to_string(cfg.seed) : a.name;
    const auto run = RunDirectory::named(name);
    run.create();
    run.write_config({{"name", name},
                      {"data", fs::absolute(a.data).string()},
                      {"runs_dir", runs_root().string()},
                      {"train", cfg.to_json()}});

    std::unique_ptr<Trainer> trainer = resume ? std::make_unique<Trainer>(data, *resume)
                                              : std::make_unique<Trainer>(data, cfg);
    MetricsCsvWriter csv(run.metrics_path(), bool(resume));
    IntervalAverager avg(cfg.log_interval);
    const auto start = trainer->iteration();
    const auto emit = [&](const MetricRecord& m) {
        csv.write(m);
        std::printf("step %lld rec %.5f sim %.5f adv_ep %.4f adv_c %.4f acc %.3f\n", static_cast<long long>(m.step),
                    m.loss_rec, m.loss_sim, m.loss_adv_ep, m.loss_adv_c, m.disc_accuracy);
        std::fflush(stdout);
    };
    const auto remaining = std::max<std::int64_t>(0, cfg.steps - start);
    trainer->run(remaining, [&](const MetricRecord& r) {
        if (auto m = avg.add(r)) emit(*m);
        if (a.ckpt_every > 0 && r.step % a.ckpt_every == 0 && r.step != cfg.steps)
            save_checkpoint(trainer->checkpoint(), run.checkpoint_path(r.step));
    });
    if (auto m = avg.flush()) emit(*m);
    const auto final_path = run.checkpoint_path(trainer->iteration());
    save_checkpoint(trainer->checkpoint(), final_path);
    std::printf("checkpoint %s\n", final_path.string().c_str());
    return 0;
}

// ---------------------------------------------------------------------------
// train-lstm
// ---------------------------------------------------------------------------

struct TrainLstmArgs {
    std::string data, run, ckpt, out;
    ForecastConfig cfg;
};

int cmd_train_lstm(const TrainLstmArgs& a) {
    const auto ckpt_path = resolve_checkpoint(a.ckpt, a.run);
    const auto data = load_data(a.data);
    const auto ckpt = load_checkpoint(ckpt_path);
    auto model = ckpt.model();
    const auto dir = output_dir(a.out, a.run, ckpt_path);

    std::ofstream log_csv(dir / "forecast_metrics.csv", std::ios::trunc);
    log_csv << "step,loss\n";
    auto forecast = train_forecast(data, model, a.cfg, [&](std::int64_t step, double loss) {
        log_csv << step << "," << loss << "\n";
        if (step % 100 == 0) std::printf("step %lld forecast loss %.6f\n", static_cast<long long>(step), loss);
    });
    save_forecast(forecast, a.cfg, dir / "forecast.bin");
    json report = {{"metric", "forecast_mse"}, {"checkpoint", ckpt_path.string()}, {"config", a.cfg.to_json()}};
    if (a.cfg.predict_len > 0) {
        const auto ev = evaluate_forecast(data, model, forecast);
        report["model_mse"] = ev.model_mse;
        report["copy_last_mse"] = ev.copy_last_mse;
        report["value"] = ev.model_mse;
    }
    write_json(dir / "forecast_eval.json", report);
    print_table(report);
    std::printf("forecaster %s\n", (dir / "forecast.bin").string().c_str());
    return 0;
}

// ---------------------------------------------------------------------------
// train-classifier
// ---------------------------------------------------------------------------

struct TrainClassifierArgs {
    std::string data, run, ckpt, out, features = "action";
    ClassifierConfig head;
    ActionClassifierConfig action;
    std::uint64_t seed = 1;
};

int cmd_train_classifier(TrainClassifierArgs a) {
    const auto data = load_data(a.data);
    a.head.seed = a.seed;
    a.action.seed = a.seed;
    json report;
    fs::path dir;
    if (a.features == "action") {
        dir = a.out.empty() ? (a.run.empty() ? runs_root() / "action-classifier" : RunDirectory::named(a.run).path())
                            : fs::path(a.out);
        auto result = train_action_classifier(data, a.action);
        save_action_classifier(result.net, dir / "action_classifier.bin");
        report = {{"metric", "action_accuracy"},
                  {"value", result.test_accuracy},
                  {"val_accuracy", result.val_accuracy},
                  {"test_accuracy", result.test_accuracy},
                  {"epochs", result.epochs},
                  {"classifier", (dir / "action_classifier.bin").string()}};
    } else {
        const auto ckpt_path = resolve_checkpoint(a.ckpt, a.run);
        dir = output_dir(a.out, a.run, ckpt_path);
        auto model = load_checkpoint(ckpt_path).model();
        const auto fl = frame_labels(data);
        const auto feats = encode_frames(model, data, a.features == "hp");
        if (feats.size(1) == 0) throw UsageError("this model has no separate content code");
        const auto result = train_classifier_head(feats, fl.labels, a.head, fl.groups);
        report = {{"metric", "content_accuracy_from_" + a.features},
                  {"value", result.test_accuracy},
                  {"val_accuracy", result.val_accuracy},
                  {"test_accuracy", result.test_accuracy},
                  {"epochs", result.epochs}};
    }
    write_json(dir / ("classifier_" + a.features + ".json"), report);
    print_table(report);
    return 0;
}

// ---------------------------------------------------------------------------
// predict / grid / interpolate
// ---------------------------------------------------------------------------

struct PredictArgs {
    std::string data, run, ckpt, forecast, out;
    std::size_t clip = 0;
    std::int64_t observe = 5, horizon = 10;
};

std::pair<ForecastModel, ForecastConfig> resolve_forecast(const std::string& path, const std::string& run,
                                                           const fs::path& ckpt_path) {
    fs::path p = path;
    if (p.empty()) p = output_dir("", run, ckpt_path) / "forecast.bin";
    if (!fs::exists(p)) throw FormatError("forecaster " + p.string() + " does not exist (run train-lstm first)");
    return load_forecast(p);
}

int cmd_predict(const PredictArgs& a) {
    const auto ckpt_path = resolve_checkpoint(a.ckpt, a.run);
    auto model = load_checkpoint(ckpt_path).model();
    auto [forecast, fcfg] = resolve_forecast(a.forecast, a.run, ckpt_path);
    const auto data = load_data(a.data);
    if (a.clip >= data.size()) throw UsageError("--clip out of range");
    if (a.observe < 1 || a.observe > std::int64_t(data.shape().frames))
        throw UsageError("--observe must lie in [1, clip length]");
    const auto clip = clip_tensor(data, a.clip);
    const auto result = rollout(model, forecast, clip.narrow(0, 0, a.observe), a.horizon, std::int64_t(a.clip));
    for (const auto& w : result.warnings) std::fprintf(stderr, "warning: %s\n", w.c_str());

    const auto dir = (a.out.empty() ? output_dir("", a.run, ckpt_path) / ("rollout_clip" + std::to_string(a.clip))
                                    : fs::path(a.out));
    write_frame_dump(dir, result.predicted_frames);
    json poses = json::array();
    for (const auto& p : result.predicted_poses) {
        const auto v = p.to(torch::kFloat64).contiguous();
        poses.push_back(std::vector<double>(v.data_ptr<double>(), v.data_ptr<double>() + v.numel()));
    }
    write_json(dir / "rollout.json", {{"clip_id", result.clip_id},
                                      {"observe_len", result.observe_len},
                                      {"horizon", a.horizon},
                                      {"untrained_forecast", result.untrained_forecast},
                                      {"warnings", result.warnings},
                                      {"predicted_poses", poses}});
    std::printf("wrote %zu frames to %s\n", result.predicted_frames.size(), dir.string().c_str());
    return 0;
}

struct GridArgs {
    std::string data, run, ckpt, out;
    std::size_t rows = 4, cols = 4;
    std::uint64_t seed = 1;
};

int cmd_grid(const GridArgs& a) {
    if (a.rows < 1 || a.cols < 1) throw UsageError("--rows and --cols must be >= 1");
    const auto ckpt_path = resolve_checkpoint(a.ckpt, a.run);
    auto model = load_checkpoint(ckpt_path).model();
    const auto data = load_data(a.data);
    Rng rng(derive_seed(a.seed, 11));
    std::uniform_int_distribution<std::size_t> clip(0, data.size() - 1), frame(0, data.shape().frames - 1);
    std::vector<torch::Tensor> rows, cols;
    for (std::size_t i = 0; i < a.rows; ++i) rows.push_back(frame_tensor(data, clip(rng), frame(rng)));
    for (std::size_t j = 0; j < a.cols; ++j) cols.push_back(frame_tensor(data, clip(rng), frame(rng)));
    const auto grid = swap_grid(model, rows, cols);
    const fs::path out = a.out.empty() ? output_dir("", a.run, ckpt_path) / "grid.png" : fs::path(a.out);
    write_png(out, grid.render());
    std::printf("wrote %zux%zu grid to %s\n", a.rows + 1, a.cols + 1, out.string().c_str());
    return 0;
}

struct InterpolateArgs {
    std::string data, run, ckpt, out;
    std::size_t clip_a = 0, frame_a = 0, clip_b = 1, frame_b = 0;
    std::int64_t steps = 8;
};

int cmd_interpolate(const InterpolateArgs& a) {
    const auto ckpt_path = resolve_checkpoint(a.ckpt, a.run);
    auto model = load_checkpoint(ckpt_path).model();
    const auto data = load_data(a.data);
    const auto interp = interpolate_pose(model, frame_tensor(data, a.clip_a, a.frame_a),
                                         frame_tensor(data, a.clip_b, a.frame_b), a.steps);
    const fs::path out = a.out.empty() ? output_dir("", a.run, ckpt_path) / "interpolation.png" : fs::path(a.out);
    write_png(out, torch::cat(interp.frames, 2));
    std::printf("wrote %lld-step interpolation to %s\n", static_cast<long long>(a.steps), out.string().c_str());
    return 0;
}

// ---------------------------------------------------------------------------
// evaluate
// ---------------------------------------------------------------------------

struct EvaluateArgs {
    std::string metric, data, run, ckpt, forecast, classifier, out, dataset_id;
    std::int64_t offset = 0, observe = 5, clips = 0;
    ClassifierConfig head;
    std::uint64_t seed = 1;
};

// Generated frames starting `offset` steps after the conditioning frames.
std::vector<torch::Tensor> generated_window(DrnetModel& model, ForecastModel& forecast, const torch::Tensor& clip,
                                            std::int64_t observe, std::int64_t offset, std::int64_t length) {
    const auto r = rollout(model, forecast, clip.narrow(0, 0, observe), offset + length);
    return {r.predicted_frames.begin() + offset, r.predicted_frames.end()};
}

int cmd_evaluate(EvaluateArgs a) {
    const auto data = load_data(a.data);
    const auto ckpt_path = resolve_checkpoint(a.ckpt, a.run);
    auto ckpt = load_checkpoint(ckpt_path);
    auto model = ckpt.model();
    const std::size_t n = a.clips > 0 ? std::min<std::size_t>(std::size_t(a.clips), data.size()) : data.size();
    if (a.offset < 0) throw UsageError("--offset must be >= 0");
    json report = {{"metric", a.metric}, {"checkpoint", ckpt_path.string()}, {"data", a.data}};
    json config = {{"offset", a.offset}, {"observe", a.observe}, {"clips", n}, {"seed", a.seed}};

    if (a.metric == "disentangle") {
        a.head.seed = a.seed;
        const auto r = disentanglement_report(model, data, a.head, ckpt.config.weights.beta,
                                              a.dataset_id.empty() ? a.data : a.dataset_id);
        report.update(r.to_json());
        report["value"] = r.acc_content_from_hc - r.acc_content_from_hp;
    } else {
        auto [forecast, fcfg] = resolve_forecast(a.forecast, a.run, ckpt_path);
        const auto frames = std::int64_t(data.shape().frames);
        if (a.metric == "inception") {
            if (a.classifier.empty()) throw UsageError("--classifier is required for the inception metric");
            auto classifier = load_action_classifier(a.classifier);
            std::vector<torch::Tensor> seqs;
            for (std::size_t c = 0; c < n; ++c) {
                const auto g = generated_window(model, forecast, clip_tensor(data, c), a.observe, a.offset,
                                                kActionStackFrames);
                seqs.push_back(torch::stack(g));
            }
            report["value"] = inception_score(classifier, seqs);
            report["num_classes"] = classifier->num_classes();
        } else {
            if (a.observe + a.offset >= frames)
                throw UsageError("--observe + --offset must leave at least one ground-truth frame");
            double total = 0.0;
            for (std::size_t c = 0; c < n; ++c) {
                const auto clip = clip_tensor(data, c);
                const auto g = generated_window(model, forecast, clip, a.observe, a.offset, 1);
                const auto truth = clip[a.observe + a.offset];
                total += a.metric == "psnr" ? psnr(g.front(), truth) : ssim(g.front(), truth);
            }
            report["value"] = total / double(n);
        }
    }
    report["config"] = config;
    const fs::path out = a.out.empty() ? output_dir("", a.run, ckpt_path) / ("eval_" + a.metric + ".json")
                                       : fs::path(a.out);
    write_json(out, report);
    print_table(report);
    return 0;
}

// ---------------------------------------------------------------------------
// nn-probe
// ---------------------------------------------------------------------------

struct NnProbeArgs {
    std::string data, queries, run, ckpt, out, space = "pose";
    std::vector<std::size_t> clips{0};
    std::size_t frame = 0;
};

int cmd_nn_probe(const NnProbeArgs& a) {
    const auto ckpt_path = resolve_checkpoint(a.ckpt, a.run);
    auto model = load_checkpoint(ckpt_path).model();
    const auto reference = load_data(a.data);
    const auto queries = a.queries.empty() ? reference : read_clipset(a.queries);
    std::vector<torch::Tensor> q;
    for (auto c : a.clips) q.push_back(frame_tensor(queries, c, a.frame));
    const auto qs = torch::stack(q);
    const auto matches = nn_probe(model, qs, reference, probe_space_from_string(a.space));

    json rows = json::array();
    std::vector<torch::Tensor> pairs;
    for (std::size_t i = 0; i < matches.size(); ++i) {
        const auto& m = matches[i];
        rows.push_back({{"query_clip", a.clips[i]},
                        {"query_frame", a.frame},
                        {"match_clip", m.clip},
                        {"match_frame", m.frame},
                        {"distance", m.distance}});
        pairs.push_back(torch::cat({q[i], frame_tensor(reference, m.clip, m.frame)}, 1));
    }
    const fs::path dir = a.out.empty() ? output_dir("", a.run, ckpt_path) : fs::path(a.out);
    write_json(dir / "nn_probe.json", {{"metric", "nn_probe"}, {"space", a.space}, {"matches", rows}});
    write_png(dir / "nn_probe.png", torch::cat(pairs, 2));
    for (const auto& r : rows) std::printf("%s\n", r.dump().c_str());
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Disentangled content/pose video representation toolkit"};
    app.require_subcommand(1);
    bool json_errors = false;
    int threads = 1;
    app.add_flag("--json-errors", json_errors, "Report errors as single-line JSON on stderr");
    app.add_option("--threads", threads, "Intra-op CPU threads")->check(CLI::PositiveNumber);

    GenDataArgs gd;
    auto* gen = app.add_subcommand("gen-data", "Generate a procedural clip container");
    gen->add_option("--kind", gd.kind)->check(CLI::IsMember({"moving-digits", "rotating-shapes", "motion-regimes"}));
    gen->add_option("--clips", gd.clips)->check(CLI::PositiveNumber);
    gen->add_option("--frames", gd.frames)->check(CLI::PositiveNumber);
    gen->add_option("--seed", gd.seed);
    gen->add_option("--out", gd.out, "Container path")->required();
    gen->add_option("--classes", gd.classes, "Shape classes (rotating-shapes)");
    gen->add_option("--canvas", gd.canvas);
    gen->add_option("--digits", gd.digits, "Comma-separated digit pool");
    gen->add_option("--colors", gd.colors, "Use the first N palette colours");
    gen->add_option("--motion", gd.motion)->check(CLI::IsMember({"bounce", "orbit", "fixed"}));
    gen->add_option("--min-speed", gd.min_speed);
    gen->add_option("--max-speed", gd.max_speed);
    gen->add_option("--mnist-images", gd.mnist_images);
    gen->add_option("--mnist-labels", gd.mnist_labels);

    TrainArgs ta;
    const auto add_train_options = [&](CLI::App* sub) {
        sub->add_option("--data", ta.data)->required();
        sub->add_option("--name", ta.name, "Run name under the runs directory");
        sub->add_option("--config", ta.config_file, "JSON config file");
        sub->add_option("--resume", ta.resume, "Checkpoint to resume from");
        sub->add_option("--ckpt-every", ta.ckpt_every);
        ta.opts["alpha"] = sub->add_option("--alpha", ta.cfg.weights.alpha);
        ta.opts["beta"] = sub->add_option("--beta", ta.cfg.weights.beta);
        ta.opts["lr"] = sub->add_option("--lr", ta.cfg.learning_rate);
        ta.opts["adam-beta1"] = sub->add_option("--adam-beta1", ta.cfg.adam_betas.first);
        ta.opts["adam-beta2"] = sub->add_option("--adam-beta2", ta.cfg.adam_betas.second);
        ta.opts["batch"] = sub->add_option("--batch", ta.cfg.batch_size);
        ta.opts["max-offset"] = sub->add_option("--max-offset,-K", ta.cfg.max_offset);
        ta.opts["steps"] = sub->add_option("--steps", ta.cfg.steps);
        ta.opts["seed"] = sub->add_option("--seed", ta.cfg.seed);
        ta.opts["disc-updates"] = sub->add_option("--disc-updates", ta.cfg.disc_updates_per_model_update);
        ta.opts["log-interval"] = sub->add_option("--log-interval", ta.cfg.log_interval);
        ta.opts["hc"] = sub->add_option("--hc", ta.cfg.arch.dim_hc);
        ta.opts["hp"] = sub->add_option("--hp", ta.cfg.arch.dim_hp);
        ta.opts["width-mult"] = sub->add_option("--width-mult", ta.cfg.arch.width_mult);
        ta.opts["arch"] = sub->add_option("--arch", ta.arch)->check(CLI::IsMember({"dcgan", "vgg_unet"}));
        ta.opts["mode"] = sub->add_option("--mode", ta.mode)->check(CLI::IsMember({"drnet", "ae-lstm"}));
        ta.opts["skips"] = sub->add_option("--skips", ta.skips, "Skip connections (vgg_unet)");
        sub->add_flag("--no-adversarial", ta.no_adversarial, "Drop the pose-adversarial term from the graph");
        sub->add_flag("--independent-offsets", ta.independent_offsets,
                      "Sample the similarity pair independently of the reconstruction pair");
    };
    auto* train = app.add_subcommand("train", "Train the content/pose model");
    add_train_options(train);

    TrainLstmArgs tl;
    auto* lstm = app.add_subcommand("train-lstm", "Train the pose forecaster on a trained model");
    lstm->add_option("--data", tl.data)->required();
    lstm->add_option("--run", tl.run);
    lstm->add_option("--ckpt", tl.ckpt);
    lstm->add_option("--out", tl.out);
    lstm->add_option("--observe", tl.cfg.observe_len);
    lstm->add_option("--predict", tl.cfg.predict_len);
    lstm->add_option("--steps", tl.cfg.steps);
    lstm->add_option("--batch", tl.cfg.batch_size);
    lstm->add_option("--lr", tl.cfg.learning_rate);
    lstm->add_option("--hidden", tl.cfg.hidden);
    lstm->add_option("--layers", tl.cfg.layers);
    lstm->add_option("--seed", tl.cfg.seed);

    TrainClassifierArgs tc;
    auto* cls = app.add_subcommand("train-classifier", "Train an action classifier or a content probe");
    cls->add_option("--data", tc.data)->required();
    cls->add_option("--features", tc.features)->check(CLI::IsMember({"action", "hc", "hp"}));
    cls->add_option("--run", tc.run);
    cls->add_option("--ckpt", tc.ckpt);
    cls->add_option("--out", tc.out);
    cls->add_option("--hidden", tc.head.hidden);
    cls->add_option("--max-epochs", tc.head.max_epochs);
    cls->add_option("--patience", tc.head.patience);
    cls->add_option("--seed", tc.seed);

    PredictArgs pa;
    auto* pred = app.add_subcommand("predict", "Roll out future frames from observed ones");
    pred->add_option("--data", pa.data)->required();
    pred->add_option("--run", pa.run);
    pred->add_option("--ckpt", pa.ckpt);
    pred->add_option("--forecast", pa.forecast);
    pred->add_option("--out", pa.out);
    pred->add_option("--clip", pa.clip);
    pred->add_option("--observe", pa.observe);
    pred->add_option("--horizon", pa.horizon)->check(CLI::NonNegativeNumber);

    GridArgs ga;
    auto* grid = app.add_subcommand("grid", "Content/pose swap grid");
    grid->add_option("--data", ga.data)->required();
    grid->add_option("--run", ga.run);
    grid->add_option("--ckpt", ga.ckpt);
    grid->add_option("--out", ga.out);
    grid->add_option("--rows", ga.rows);
    grid->add_option("--cols", ga.cols);
    grid->add_option("--seed", ga.seed);

    InterpolateArgs ia;
    auto* interp = app.add_subcommand("interpolate", "Pose-space interpolation between two frames");
    interp->add_option("--data", ia.data)->required();
    interp->add_option("--run", ia.run);
    interp->add_option("--ckpt", ia.ckpt);
    interp->add_option("--out", ia.out);
    interp->add_option("--clip-a", ia.clip_a);
    interp->add_option("--frame-a", ia.frame_a);
    interp->add_option("--clip-b", ia.clip_b);
    interp->add_option("--frame-b", ia.frame_b);
    interp->add_option("--steps", ia.steps);

    EvaluateArgs ea;
    auto* eval = app.add_subcommand("evaluate", "Compute an evaluation metric");
    eval->add_option("--metric", ea.metric)
        ->required()
        ->check(CLI::IsMember({"inception", "psnr", "ssim", "disentangle"}));
    eval->add_option("--data", ea.data)->required();
    eval->add_option("--run", ea.run);
    eval->add_option("--ckpt", ea.ckpt);
    eval->add_option("--forecast", ea.forecast);
    eval->add_option("--classifier", ea.classifier, "Action classifier (inception)");
    eval->add_option("--out", ea.out);
    eval->add_option("--offset", ea.offset, "Generated steps between the conditioning frames and the scored window");
    eval->add_option("--observe", ea.observe);
    eval->add_option("--clips", ea.clips, "Limit the number of clips (0 = all)");
    eval->add_option("--dataset-id", ea.dataset_id);
    eval->add_option("--seed", ea.seed);

    NnProbeArgs na;
    auto* nnp = app.add_subcommand("nn-probe", "Nearest reference frames in latent space");
    nnp->add_option("--data", na.data, "Reference container")->required();
    nnp->add_option("--queries", na.queries, "Query container (defaults to the reference)");
    nnp->add_option("--run", na.run);
    nnp->add_option("--ckpt", na.ckpt);
    nnp->add_option("--out", na.out);
    nnp->add_option("--space", na.space)->check(CLI::IsMember({"pose", "pose+content"}));
    nnp->add_option("--clips", na.clips, "Query clip indices");
    nnp->add_option("--frame", na.frame, "Query frame index");

    const auto report = [&](const std::string& kind, const std::string& message, int code) {
        if (json_errors)
            std::cerr << json{{"error", kind}, {"message", message}, {"exit_code", code}}.dump() << std::endl;
        else
            std::cerr << "error: " << message << std::endl;
        return code;
    };

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        return report("usage", e.what(), kExitUsage);
    }

    torch::set_num_threads(threads);
    try {
        if (gen->parsed()) return cmd_gen_data(gd);
        if (train->parsed()) return cmd_train(ta);
        if (lstm->parsed()) return cmd_train_lstm(tl);
        if (cls->parsed()) return cmd_train_classifier(tc);
        if (pred->parsed()) return cmd_predict(pa);
        if (grid->parsed()) return cmd_grid(ga);
        if (interp->parsed()) return cmd_interpolate(ia);
        if (eval->parsed()) return cmd_evaluate(ea);
        if (nnp->parsed()) return cmd_nn_probe(na);
    } catch (const ConfigError& e) {
        return report("usage", e.what(), kExitUsage);
    } catch (const std::exception& e) {
        return report("runtime", e.what(), kExitRuntime);
    }
    return kExitUsage;
}
