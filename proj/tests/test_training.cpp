#include <fstream>
#include <numeric>

#include <gtest/gtest.h>

#include "drnet/run_dir.hpp"
#include "drnet/training.hpp"
#include "test_util.hpp"

using namespace drnet;

namespace {

MovingDigitsParams small_digits() {
    MovingDigitsParams p;
    p.canvas = 32;
    p.digit_pool = {0, 1, 2};
    return p;
}

const ClipDataset& small_data() {
    static const ClipDataset data = gen_moving_digits(24, 10, 3, small_digits());
    return data;
}

TrainConfig small_config(std::uint64_t seed = 1) {
    TrainConfig c;
    c.arch.height = c.arch.width = 32;
    c.arch.dim_hc = 16;
    c.arch.dim_hp = 4;
    c.arch.width_mult = 0.125;
    c.batch_size = 8;
    c.max_offset = 4;
    c.seed = seed;
    return c;
}

using Snapshot = std::vector<torch::Tensor>;

Snapshot snapshot(const std::vector<torch::Tensor>& tensors) {
    Snapshot out;
    for (const auto& t : tensors) out.push_back(t.detach().clone());
    return out;
}

Snapshot state_of(torch::nn::Module& m) {
    Snapshot out;
    for (const auto& p : m.parameters()) out.push_back(p.detach().clone());
    for (const auto& b : m.buffers()) out.push_back(b.detach().clone());
    return out;
}

bool bitwise_equal(const Snapshot& a, const Snapshot& b) {
    if (a.size() != b.size()) return false;
    for (std::size_t i = 0; i < a.size(); ++i)
        if (!torch::equal(a[i], b[i])) return false;
    return true;
}

Snapshot generator_state(DrnetModel& m) {
    Snapshot s = state_of(*m.content_encoder);
    for (auto& t : state_of(*m.pose_encoder)) s.push_back(t);
    for (auto& t : state_of(*m.decoder)) s.push_back(t);
    return s;
}

bool grads_absent_or_zero(const std::vector<torch::Tensor>& params) {
    for (const auto& p : params)
        if (p.grad().defined() && p.grad().abs().max().item<double>() != 0.0) return false;
    return true;
}

} // namespace

TEST(TrainConfig, ValidationAndJsonRoundTrip) {
    auto c = small_config();
    c.weights = {0.5, 0.25};
    c.shared_offset = false;
    const auto back = TrainConfig::from_json(c.to_json());
    EXPECT_EQ(back.to_json(), c.to_json());
    EXPECT_EQ(back.arch, c.arch);

    auto bad = small_config();
    bad.batch_size = 1;
    EXPECT_THROW(bad.validate(), ConfigError);
    bad = small_config();
    bad.learning_rate = 0.0;
    EXPECT_THROW(bad.validate(), ConfigError);
    bad = small_config();
    bad.steps = 0;
    EXPECT_THROW(bad.validate(), ConfigError);
    EXPECT_THROW(train_mode_from_string("vae"), ConfigError);
}

TEST(Trainer, RejectsUnusableDatasets) {
    const auto one = gen_moving_digits(1, 10, 1, small_digits());
    EXPECT_THROW(Trainer(one, small_config()), ConfigError);
    auto long_offset = small_config();
    long_offset.max_offset = 10;
    EXPECT_THROW(Trainer(small_data(), long_offset), ConfigError);
    auto wrong_size = small_config();
    wrong_size.arch.height = wrong_size.arch.width = 64;
    EXPECT_THROW(Trainer(small_data(), wrong_size), ConfigError);
}

TEST(Trainer, PhasesOnlyTouchTheirOwnNetworks) {
    Trainer t(small_data(), small_config());
    auto& m = t.model();
    for (int i = 0; i < 5; ++i) {
        const auto gen = generator_state(m);
        for (const auto& p : m.model_parameters()) p.mutable_grad() = torch::Tensor();
        t.discriminator_update();
        EXPECT_TRUE(bitwise_equal(gen, generator_state(m)));
        EXPECT_TRUE(grads_absent_or_zero(m.model_parameters()));

        const auto disc = state_of(*m.discriminator);
        for (const auto& p : m.discriminator_parameters()) p.mutable_grad() = torch::Tensor();
        t.model_update();
        EXPECT_TRUE(bitwise_equal(disc, state_of(*m.discriminator)));
        EXPECT_TRUE(grads_absent_or_zero(m.discriminator_parameters()));
        EXPECT_FALSE(bitwise_equal(gen, generator_state(m)));
    }
}

TEST(Trainer, ZeroBetaMatchesRemovingTheAdversary) {
    auto with = small_config();
    with.weights.beta = 0.0;
    auto without = with;
    without.include_adversarial = false;
    Trainer a(small_data(), with), b(small_data(), without);
    for (int i = 0; i < 8; ++i) {
        const auto ra = a.step(), rb = b.step();
        EXPECT_EQ(ra, rb);
    }
    EXPECT_TRUE(bitwise_equal(snapshot(a.model().model_parameters()), snapshot(b.model().model_parameters())));
}

TEST(Trainer, ZeroLearningRateFreezesParameters) {
    Trainer t(small_data(), small_config());
    t.scale_learning_rate(0.0);
    const auto gen = snapshot(t.model().model_parameters());
    const auto disc = snapshot(t.model().discriminator_parameters());
    t.run(6);
    EXPECT_TRUE(bitwise_equal(gen, snapshot(t.model().model_parameters())));
    EXPECT_TRUE(bitwise_equal(disc, snapshot(t.model().discriminator_parameters())));
    EXPECT_THROW(t.scale_learning_rate(-1.0), ConfigError);
}

TEST(Trainer, SameSeedSameMetrics) {
    const auto a = Trainer(small_data(), small_config(4)).run(6);
    const auto b = Trainer(small_data(), small_config(4)).run(6);
    const auto c = Trainer(small_data(), small_config(5)).run(6);
    EXPECT_EQ(a, b);
    EXPECT_NE(a, c);
    for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a[i].step, std::int64_t(i + 1));
}

TEST(Trainer, IndependentOffsetsAlsoTrain) {
    auto c = small_config();
    c.shared_offset = false;
    const auto records = Trainer(small_data(), c).run(3);
    for (const auto& r : records) EXPECT_TRUE(std::isfinite(r.loss_sim));
}

TEST(Trainer, ReconstructionImproves) {
    const auto data = gen_moving_digits(64, 10, 9, small_digits());
    auto c = small_config();
    c.weights.alpha = 0.001;
    const auto records = Trainer(data, c).run(500);
    const auto window_mean = [&](std::size_t from) {
        double s = 0;
        for (std::size_t i = from; i < from + 20; ++i) s += records[i].loss_rec;
        return s / 20;
    };
    EXPECT_LT(window_mean(records.size() - 20), window_mean(0));
}

TEST(Trainer, DivergenceNamesTermAndStep) {
    auto c = small_config();
    c.learning_rate = 1e30;
    Trainer t(small_data(), c);
    try {
        t.run(50);
        FAIL() << "expected divergence";
    } catch (const TrainingError& e) {
        const std::string msg = e.what();
        EXPECT_NE(msg.find("non-finite loss component"), std::string::npos) << msg;
        EXPECT_NE(msg.find("at step"), std::string::npos) << msg;
    }
}

TEST(AutoencoderBaseline, ReconstructionOnly) {
    auto c = small_config();
    c.mode = TrainMode::ae_lstm;
    c.steps = 5;
    const auto a = train_ae_lstm_baseline(small_data(), c);
    const auto b = train_ae_lstm_baseline(small_data(), c);
    ASSERT_EQ(a.records.size(), 5u);
    EXPECT_EQ(a.records, b.records);
    for (const auto& r : a.records) {
        EXPECT_EQ(r.loss_sim, 0.0);
        EXPECT_EQ(r.loss_adv_ep, 0.0);
        EXPECT_EQ(r.loss_adv_c, 0.0);
        EXPECT_GT(r.loss_rec, 0.0);
    }
    auto m = a.checkpoint.model();
    EXPECT_EQ(m.content_dim(), 0);
    EXPECT_EQ(m.pose_dim(), c.arch.dim_hc + c.arch.dim_hp);
    EXPECT_FALSE(m.pose_encoder);
    EXPECT_FALSE(m.discriminator);
    // A single clip is enough without a discriminator.
    EXPECT_NO_THROW(train_ae_lstm_baseline(gen_moving_digits(1, 10, 1, small_digits()), c));
}

TEST(Checkpoint, ResumeMatchesUninterruptedTraining) {
    const test::TempDir dir;
    Trainer full(small_data(), small_config(7));
    const auto expected = full.run(10);

    Trainer first(small_data(), small_config(7));
    const auto head = first.run(4);
    save_checkpoint(first.checkpoint(), dir / "ckpt.bin");
    const auto loaded = load_checkpoint(dir / "ckpt.bin");
    EXPECT_EQ(loaded.iteration, 4);
    Trainer resumed(small_data(), loaded);
    auto tail = resumed.run(6);

    std::vector<MetricRecord> joined = head;
    joined.insert(joined.end(), tail.begin(), tail.end());
    EXPECT_EQ(joined, expected);
    EXPECT_TRUE(bitwise_equal(snapshot(full.model().model_parameters()),
                              snapshot(resumed.model().model_parameters())));
}

TEST(Checkpoint, ModelOutputsSurviveSaveLoad) {
    const test::TempDir dir;
    Trainer t(small_data(), small_config());
    t.run(2);
    save_checkpoint(t.checkpoint(), dir / "c.bin");
    auto m = load_checkpoint(dir / "c.bin").model();
    auto& live = t.model();
    m.eval(), live.eval();
    torch::NoGradGuard g;
    const auto x = torch::rand({3, 3, 32, 32});
    EXPECT_TRUE(torch::equal(m.encode_pose(x), live.encode_pose(x)));
    const auto c1 = m.encode_content(x), c2 = live.encode_content(x);
    EXPECT_TRUE(torch::equal(c1.code, c2.code));
    EXPECT_TRUE(torch::equal(m.decode(c1.code, m.encode_pose(x)), live.decode(c2.code, live.encode_pose(x))));
}

TEST(Checkpoint, SidecarAndErrors) {
    const test::TempDir dir;
    Trainer t(small_data(), small_config());
    t.run(1);
    const auto path = dir / "ckpt_00000001.bin";
    save_checkpoint(t.checkpoint(), path);
    const auto side = read_json(checkpoint_sidecar_path(path));
    EXPECT_EQ(side.at("format_version"), 1);
    EXPECT_EQ(side.at("iteration"), 1);
    EXPECT_EQ(side.at("dims").at("dim_hp"), 4);
    EXPECT_EQ(side.at("mode"), "drnet");

    auto other = small_config().arch;
    other.dim_hp = 5;
    EXPECT_THROW(load_checkpoint(path, other), ConfigError);
    EXPECT_NO_THROW(load_checkpoint(path, small_config().arch));

    const auto bytes = test::read_bytes(path);
    const auto bad = dir / "bad.bin";
    std::filesystem::copy_file(checkpoint_sidecar_path(path), checkpoint_sidecar_path(bad));
    test::write_bytes(bad, bytes.substr(0, bytes.size() / 2));
    EXPECT_THROW(load_checkpoint(bad), FormatError);
    test::write_bytes(bad, bytes.substr(0, 6));
    EXPECT_THROW(load_checkpoint(bad), FormatError);
    test::write_bytes(bad, "XXXX" + bytes.substr(4));
    EXPECT_THROW(load_checkpoint(bad), FormatError);
    auto version = bytes;
    version[4] = 7;
    test::write_bytes(bad, version);
    EXPECT_THROW(load_checkpoint(bad), FormatError);

    // Sidecar that disagrees with the archive.
    test::write_bytes(bad, bytes);
    auto wrong = side;
    wrong["arch"]["dim_hp"] = 9;
    write_json(checkpoint_sidecar_path(bad), wrong);
    EXPECT_THROW(load_checkpoint(bad), FormatError);
}

TEST(Metrics, AveragerAndCsvRoundTrip) {
    IntervalAverager avg(2);
    EXPECT_FALSE(avg.add({1, 1.0, 2.0, 3.0, 4.0, 0.5}));
    const auto m = avg.add({2, 3.0, 4.0, 5.0, 6.0, 1.0});
    ASSERT_TRUE(m);
    EXPECT_EQ(*m, (MetricRecord{2, 2.0, 3.0, 4.0, 5.0, 0.75}));
    EXPECT_FALSE(avg.flush());
    EXPECT_FALSE(avg.add({3, 1.0, 1.0, 1.0, 1.0, 1.0}));
    EXPECT_EQ(avg.flush()->step, 3);

    const test::TempDir dir;
    const auto path = dir / "metrics.csv";
    const std::vector<MetricRecord> rows = {{25, 0.5, 0.25, 0.75, 1.5, 0.5}, {50, 0.125, 0.0625, 0.7, 1.4, 0.625}};
    {
        MetricsCsvWriter w(path);
        w.write(rows[0]);
    }
    {
        MetricsCsvWriter w(path, /*append=*/true);
        w.write(rows[1]);
    }
    std::ifstream in(path);
    std::string header;
    std::getline(in, header);
    EXPECT_EQ(header, "step,loss_rec,loss_sim,loss_adv_ep,loss_adv_c,disc_accuracy");
    EXPECT_EQ(read_metrics_csv(path), rows);
    test::write_bytes(path, "step,loss\n1,2\n");
    EXPECT_THROW(read_metrics_csv(path), FormatError);
}

TEST(RunDirectory, Layout) {
    const test::TempDir dir;
    const RunDirectory run(dir / "exp");
    EXPECT_FALSE(run.latest_checkpoint());
    run.create();
    EXPECT_EQ(run.checkpoint_path(25).filename(), "ckpt_00000025.bin");
    for (int i : {5, 120, 40}) test::write_bytes(run.checkpoint_path(i), "x");
    EXPECT_EQ(run.latest_checkpoint()->filename(), "ckpt_00000120.bin");
    run.write_config({{"name", "exp"}});
    EXPECT_EQ(run.read_config().at("name"), "exp");
    EXPECT_EQ(run.metrics_path().filename(), "metrics.csv");
}

// ---------------------------------------------------------------------------
// Forecast
// ---------------------------------------------------------------------------

TEST(Forecast, ProtocolChecks) {
    Trainer t(small_data(), small_config());
    ForecastConfig fc;
    fc.steps = 2;
    fc.hidden = 16;
    fc.observe_len = 6;
    fc.predict_len = 5; // 11 > T = 10
    EXPECT_THROW(train_forecast(small_data(), t.model(), fc), ConfigError);
    fc.observe_len = 0;
    EXPECT_THROW(fc.validate(), ConfigError);
}

TEST(Forecast, TeacherForcedOnlyAndPersistence) {
    Trainer t(small_data(), small_config());
    t.run(2);
    ForecastConfig fc;
    fc.observe_len = 10;
    fc.predict_len = 0;
    fc.steps = 3;
    fc.hidden = 16;
    std::vector<double> losses;
    auto fm = train_forecast(small_data(), t.model(), fc, [&](std::int64_t, double l) { losses.push_back(l); });
    EXPECT_EQ(losses.size(), 3u);
    EXPECT_EQ(fm.steps_trained, 3);
    for (double l : losses) EXPECT_TRUE(std::isfinite(l));

    const test::TempDir dir;
    save_forecast(fm, fc, dir / "forecast.bin");
    auto [back, cfg] = load_forecast(dir / "forecast.bin");
    EXPECT_EQ(back.observe_len, 10);
    EXPECT_EQ(back.steps_trained, 3);
    EXPECT_EQ(cfg.to_json(), fc.to_json());
    const auto a = fm.net->parameters(), b = back.net->parameters();
    ASSERT_EQ(a.size(), b.size());
    for (std::size_t i = 0; i < a.size(); ++i) EXPECT_TRUE(torch::equal(a[i], b[i]));
}

TEST(Forecast, LearnsToBeatCopyLastOnSmoothPoses) {
    // Rotating shapes with a fixed step make every pose trajectory regular.
    RotatingShapesParams rp;
    rp.canvas = 32;
    rp.min_increment = rp.max_increment = 20.0;
    const auto data = gen_rotating_shapes(32, 12, 2, 3, rp);
    auto c = small_config();
    c.arch.channels = 1;
    Trainer t(data, c);
    t.run(30);
    ForecastConfig fc;
    fc.observe_len = 4;
    fc.predict_len = 4;
    fc.steps = 300;
    fc.hidden = 64;
    auto fm = train_forecast(data, t.model(), fc);
    const auto ev = evaluate_forecast(data, t.model(), fm);
    EXPECT_LT(ev.model_mse, ev.copy_last_mse);
}

// ---------------------------------------------------------------------------
// Classifier heads
// ---------------------------------------------------------------------------

TEST(Classifier, SeparableBlobs) {
    torch::manual_seed(1);
    const std::int64_t n = 400;
    auto features = torch::randn({n, 8}) * 0.3;
    std::vector<std::int64_t> labels(n);
    for (std::int64_t i = 0; i < n; ++i) {
        labels[i] = i % 2;
        features[i][0] += labels[i] ? 2.0 : -2.0;
    }
    ClassifierConfig cc;
    cc.hidden = 32;
    cc.max_epochs = 50;
    const auto r = train_classifier_head(features, labels, cc);
    EXPECT_GE(r.val_accuracy, 0.95);
    EXPECT_GE(r.test_accuracy, 0.95);
    auto head = r.head;
    EXPECT_GE(classification_accuracy(head, features, labels), 0.95);
}

TEST(Classifier, ShuffledLabelsStayNearChance) {
    torch::manual_seed(2);
    const std::int64_t n = 600, classes = 4;
    const auto features = torch::randn({n, 8});
    Rng rng(3);
    std::vector<std::int64_t> labels(n);
    for (auto& l : labels) l = std::uniform_int_distribution<std::int64_t>(0, classes - 1)(rng);
    ClassifierConfig cc;
    cc.hidden = 32;
    cc.max_epochs = 30;
    const auto r = train_classifier_head(features, labels, cc);
    EXPECT_NEAR(r.test_accuracy, 1.0 / classes, 0.1);
}

TEST(Classifier, RejectsDegenerateInput) {
    const auto features = torch::randn({10, 3});
    EXPECT_THROW(train_classifier_head(features, std::vector<std::int64_t>(10, 1), {}), ConfigError);
    EXPECT_THROW(train_classifier_head(features, std::vector<std::int64_t>(9, 1), {}), ConfigError);
}

TEST(Classifier, GroupsNeverStraddleSplits) {
    std::vector<std::int64_t> groups;
    for (int g = 0; g < 30; ++g)
        for (int k = 0; k < 7; ++k) groups.push_back(g);
    Rng rng(4);
    const auto s = split_by_group(groups.size(), groups, 0.2, 0.2, rng);
    std::vector<int> part(30, -1);
    std::size_t total = 0;
    for (int which = 0; which < 3; ++which) {
        const auto& rows = which == 0 ? s.train : which == 1 ? s.val : s.test;
        total += rows.size();
        for (auto r : rows) {
            const auto g = groups[std::size_t(r)];
            EXPECT_TRUE(part[g] == -1 || part[g] == which);
            part[g] = which;
        }
    }
    EXPECT_EQ(total, groups.size());
    EXPECT_EQ(s.val.size(), 6u * 7u);
    EXPECT_EQ(s.test.size(), 6u * 7u);
}
