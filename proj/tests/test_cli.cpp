#include <sys/wait.h>

#include <cstdlib>
#include <fstream>
#include <sstream>

#include <gtest/gtest.h>
#include <json.hpp>

#include "drnet/datasets.hpp"
#include "test_util.hpp"

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct Outcome {
    int code = -1;
    std::string out, err;
};

// Runs the CLI with the runs directory pointed into `dir`.
Outcome run(const drnet::test::TempDir& dir, const std::string& args) {
    const auto out = dir / "stdout.txt", err = dir / "stderr.txt";
    const std::string cmd = "DRNET_RUNS_DIR='" + (dir / "runs").string() + "' '" + DRNET_CLI_PATH + "' " + args +
                            " >'" + out.string() + "' 2>'" + err.string() + "'";
    const int status = std::system(cmd.c_str());
    Outcome o;
    o.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    o.out = drnet::test::read_bytes(out);
    o.err = drnet::test::read_bytes(err);
    return o;
}

json load(const fs::path& p) {
    std::ifstream in(p);
    return json::parse(in);
}

std::size_t count_lines(const fs::path& p) {
    std::ifstream in(p);
    std::size_t n = 0;
    for (std::string line; std::getline(in, line);) n += !line.empty();
    return n;
}

bool is_png(const fs::path& p) { return drnet::test::read_bytes(p).rfind("\x89PNG", 0) == 0; }

// One small trained run shared by the pipeline tests.
class CliPipeline : public ::testing::Test {
protected:
    static void SetUpTestSuite() {
        dir_ = new drnet::test::TempDir;
        data_ = (*dir_ / "digits.drcs").string();
        ASSERT_EQ(run(*dir_, "gen-data --clips 8 --frames 10 --canvas 32 --digits 0,1 --seed 3 --out " + data_).code, 0);
        const auto t = run(*dir_, "train --data " + data_ +
                                      " --name tiny --steps 4 --log-interval 2 --batch 4 -K 2 --hc 8 --hp 2"
                                      " --width-mult 0.125 --seed 5");
        ASSERT_EQ(t.code, 0) << t.err;
        const auto l = run(*dir_, "train-lstm --data " + data_ +
                                      " --run tiny --steps 3 --observe 2 --predict 2 --hidden 16 --layers 1");
        ASSERT_EQ(l.code, 0) << l.err;
    }
    static void TearDownTestSuite() { delete dir_; }

    static fs::path run_dir() { return *dir_ / "runs/tiny"; }

    static drnet::test::TempDir* dir_;
    static std::string data_;
};

drnet::test::TempDir* CliPipeline::dir_ = nullptr;
std::string CliPipeline::data_;

} // namespace

TEST(Cli, UsageErrorsExitWithTwo) {
    drnet::test::TempDir dir;
    EXPECT_EQ(run(dir, "").code, 2);
    EXPECT_EQ(run(dir, "no-such-command").code, 2);
    EXPECT_EQ(run(dir, "gen-data").code, 2);
    EXPECT_EQ(run(dir, "gen-data --out x.drcs --kind spirals").code, 2);
    EXPECT_EQ(run(dir, "gen-data --out " + (dir / "x.drcs").string() + " --colors 99").code, 2);
    EXPECT_EQ(run(dir, "--help").code, 0);
}

TEST(Cli, JsonErrors) {
    drnet::test::TempDir dir;
    const auto o = run(dir, "--json-errors gen-data");
    EXPECT_EQ(o.code, 2);
    const auto j = json::parse(o.err);
    EXPECT_EQ(j.at("error"), "usage");
    EXPECT_EQ(j.at("exit_code"), 2);
    EXPECT_FALSE(j.at("message").get<std::string>().empty());

    const auto missing = run(dir, "--json-errors train --data " + (dir / "missing.drcs").string());
    EXPECT_EQ(missing.code, 1);
    EXPECT_EQ(json::parse(missing.err).at("error"), "runtime");
}

TEST(Cli, GenDataWritesContainer) {
    drnet::test::TempDir dir;
    const auto path = dir / "shapes.drcs";
    const auto o = run(dir, "gen-data --kind rotating-shapes --clips 5 --frames 7 --classes 3 --canvas 32 --out " +
                                path.string());
    ASSERT_EQ(o.code, 0) << o.err;
    const auto data = drnet::read_clipset(path);
    EXPECT_EQ(data.size(), 5u);
    EXPECT_EQ(data.shape().frames, 7u);
    EXPECT_EQ(data.shape().height, 32u);
    EXPECT_EQ(data.num_classes(), 3u);
}

TEST_F(CliPipeline, TrainEchoesConfigAndLogsMetrics) {
    const auto cfg = load(run_dir() / "config.json");
    EXPECT_EQ(cfg.at("name"), "tiny");
    EXPECT_EQ(cfg.at("train").at("steps"), 4);
    EXPECT_EQ(cfg.at("train").at("batch_size"), 4);
    EXPECT_EQ(cfg.at("train").at("max_offset"), 2);
    EXPECT_EQ(cfg.at("train").at("seed"), 5);
    EXPECT_EQ(count_lines(run_dir() / "metrics.csv"), 3u); // header + two averaged rows
    std::ifstream csv(run_dir() / "metrics.csv");
    std::string header;
    std::getline(csv, header);
    EXPECT_EQ(header, "step,loss_rec,loss_sim,loss_adv_ep,loss_adv_c,disc_accuracy");
    EXPECT_TRUE(fs::exists(run_dir() / "forecast.bin"));
    EXPECT_TRUE(fs::exists(run_dir() / "forecast_eval.json"));
}

TEST_F(CliPipeline, ResumeAppendsToMetrics) {
    drnet::test::TempDir scratch;
    fs::create_directories(scratch / "runs");
    fs::copy(run_dir(), scratch / "runs/again", fs::copy_options::recursive);
    std::optional<fs::path> ckpt;
    for (const auto& e : fs::directory_iterator(scratch / "runs/again"))
        if (e.path().extension() == ".bin" && e.path().filename().string().rfind("ckpt", 0) == 0) ckpt = e.path();
    ASSERT_TRUE(ckpt);
    const auto o = run(scratch, "train --data " + data_ + " --name again --resume " + ckpt->string() + " --steps 6");
    ASSERT_EQ(o.code, 0) << o.err;
    EXPECT_EQ(count_lines(scratch / "runs/again/metrics.csv"), 4u);
}

TEST_F(CliPipeline, InvalidConfigExitsWithTwo) {
    EXPECT_EQ(run(*dir_, "train --data " + data_ + " --name bad --alpha -1").code, 2);
    EXPECT_EQ(run(*dir_, "predict --data " + data_).code, 2);
    EXPECT_EQ(run(*dir_, "predict --data " + data_ + " --run tiny --observe 0").code, 2);
    EXPECT_EQ(run(*dir_, "grid --data " + data_ + " --run tiny --rows 0").code, 2);
}

TEST_F(CliPipeline, PredictWritesFramesAndPoses) {
    const auto out = *dir_ / "rollout";
    const auto o = run(*dir_, "predict --data " + data_ + " --run tiny --clip 1 --observe 3 --horizon 4 --out " +
                                  out.string());
    ASSERT_EQ(o.code, 0) << o.err;
    for (int i = 0; i < 4; ++i) EXPECT_TRUE(is_png(out / ("frame_0000" + std::to_string(i) + ".png")));
    EXPECT_EQ(drnet::test::read_bytes(out / "rollout.gif").substr(0, 6), "GIF89a");
    const auto j = load(out / "rollout.json");
    EXPECT_EQ(j.at("clip_id"), 1);
    EXPECT_EQ(j.at("predicted_poses").size(), 4u);
    EXPECT_EQ(j.at("predicted_poses")[0].size(), 2u);
    EXPECT_FALSE(j.at("untrained_forecast").get<bool>());
}

TEST_F(CliPipeline, GridAndInterpolation) {
    ASSERT_EQ(run(*dir_, "grid --data " + data_ + " --run tiny --rows 2 --cols 3").code, 0);
    EXPECT_TRUE(is_png(run_dir() / "grid.png"));
    ASSERT_EQ(run(*dir_, "interpolate --data " + data_ + " --run tiny --steps 4").code, 0);
    EXPECT_TRUE(is_png(run_dir() / "interpolation.png"));
}

TEST_F(CliPipeline, EvaluateMetrics) {
    for (const std::string metric : {"psnr", "ssim"}) {
        const auto o = run(*dir_, "evaluate --metric " + metric + " --data " + data_ + " --run tiny --observe 2");
        ASSERT_EQ(o.code, 0) << o.err;
        const auto j = load(run_dir() / ("eval_" + metric + ".json"));
        EXPECT_EQ(j.at("metric"), metric);
        EXPECT_TRUE(j.at("value").is_number());
        EXPECT_EQ(j.at("config").at("observe"), 2);
    }
    EXPECT_EQ(run(*dir_, "evaluate --metric psnr --data " + data_ + " --run tiny --observe 9 --offset 3").code, 2);
    EXPECT_EQ(run(*dir_, "evaluate --metric inception --data " + data_ + " --run tiny").code, 2);

    ASSERT_EQ(run(*dir_, "evaluate --metric disentangle --data " + data_ + " --run tiny --dataset-id tiny").code, 0);
    const auto j = load(run_dir() / "eval_disentangle.json");
    for (const auto* key : {"acc_content_from_hc", "acc_content_from_hp"}) {
        EXPECT_GE(j.at(key).get<double>(), 0.0);
        EXPECT_LE(j.at(key).get<double>(), 1.0);
    }
    EXPECT_EQ(j.at("dataset_id"), "tiny");
}

TEST_F(CliPipeline, NnProbeMatchesItself) {
    const auto o = run(*dir_, "nn-probe --data " + data_ + " --run tiny --clips 2 5 --frame 4");
    ASSERT_EQ(o.code, 0) << o.err;
    const auto j = load(run_dir() / "nn_probe.json");
    ASSERT_EQ(j.at("matches").size(), 2u);
    for (const auto& m : j.at("matches")) EXPECT_EQ(m.at("distance"), 0.0);
    EXPECT_TRUE(is_png(run_dir() / "nn_probe.png"));
    EXPECT_EQ(run(*dir_, "nn-probe --data " + data_ + " --run tiny --space content").code, 2);
}

TEST(Cli, ActionClassifierAndInception) {
    drnet::test::TempDir dir;
    const auto data = (dir / "motion.drcs").string();
    ASSERT_EQ(run(dir, "gen-data --kind motion-regimes --clips 12 --frames 12 --canvas 32 --out " + data).code, 0);
    const auto o = run(dir, "train-classifier --data " + data + " --out " + (dir / "cls").string());
    ASSERT_EQ(o.code, 0) << o.err;
    EXPECT_TRUE(fs::exists(dir / "cls/action_classifier.bin"));
    const auto j = load(dir / "cls/classifier_action.json");
    EXPECT_EQ(j.at("metric"), "action_accuracy");

    ASSERT_EQ(run(dir, "train --data " + data + " --name m --steps 2 --batch 4 -K 2 --hc 8 --hp 2 --width-mult 0.125").code, 0);
    ASSERT_EQ(run(dir, "train-lstm --data " + data + " --run m --steps 2 --observe 2 --predict 2 --hidden 8").code, 0);
    const auto e = run(dir, "evaluate --metric inception --data " + data + " --run m --observe 2 --classifier " +
                                (dir / "cls/action_classifier.bin").string());
    ASSERT_EQ(e.code, 0) << e.err;
    const double is = load(dir / "runs/m/eval_inception.json").at("value");
    EXPECT_GE(is, 1.0);
    EXPECT_LE(is, 3.0);
}
