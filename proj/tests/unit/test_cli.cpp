#include <fstream>
#include <sstream>

#include "aop/dataset_io.hpp"
#include "aop/hashing.hpp"
#include "aop/report.hpp"
#include "test_util.hpp"

namespace fs = std::filesystem;
using aop::fixtures::TempDir;

namespace {

struct Result {
    int code;
    std::string out;
    std::string err;
};

std::string slurp(const fs::path& p) {
    std::ifstream in(p);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::vector<std::string> lines_of(const fs::path& p) {
    std::ifstream in(p);
    std::vector<std::string> out;
    for (std::string l; std::getline(in, l);) out.push_back(l);
    return out;
}

const char* kTinyConfig = R"({
  "seeds": {"master": 5},
  "synth": {"per_class": {"training": 4, "validation": 2, "test": 2}, "segmentation_pairs": 8, "image_size": 32},
  "aop": {
    "generator": {"depth": 3, "base_channels": 4, "max_channels": 16},
    "discriminator": {"depth": 3, "base_channels": 4, "max_channels": 8},
    "geometry": {"load_size": 32, "working_size": 32},
    "train": {"epochs": 2, "batch_size": 4},
    "recipe": {"rotation_step_deg": 90, "mirror": true, "crop_size": 32, "gamma_choices": [0.8, 1.0, 2.2]}
  },
  "classifier": {
    "spec": {"input_size": 32, "width_multiplier": 0.0625, "fc1": 64, "fc2": 32},
    "train": {"epochs": 1, "batch_size": 8}
  },
  "gradcam": {"images": 8},
  "runtime": {"threads": 1}
})";

class Cli : public ::testing::Test {
protected:
    static void SetUpTestSuite() {
        dir_ = new TempDir("cli");
        std::ofstream(path("tiny.json")) << kTinyConfig;
    }
    static void TearDownTestSuite() {
        delete dir_;
        dir_ = nullptr;
    }

    static fs::path path(const std::string& rel) { return dir_->path() / rel; }

    static Result run(const std::string& args) {
        static int counter = 0;
        const auto out = path("stdout_" + std::to_string(counter));
        const auto err = path("stderr_" + std::to_string(counter++));
        const std::string cmd = "cd '" + dir_->path().string() + "' && '" AOP_CLI_PATH "' " + args + " > '" +
                                out.string() + "' 2> '" + err.string() + "'";
        const int status = std::system(cmd.c_str());
        return {WEXITSTATUS(status), slurp(out), slurp(err)};
    }

    // Corpus and the three segmentation checkpoints, built once for the suite.
    static void ensure_trained() {
        if (fs::exists(path("run/aop/SSIM/checkpoint.pt"))) return;
        ASSERT_EQ(run("synth-gen --config tiny.json --out corpus").code, 0);
        for (const char* v : {"MAE_prob", "MAE", "SSIM"}) {
            const auto r = run(std::string("train-aop --config tiny.json --out run --variant ") + v);
            ASSERT_EQ(r.code, 0) << r.err;
        }
    }

    static TempDir* dir_;
};

TempDir* Cli::dir_ = nullptr;

}  // namespace

TEST_F(Cli, UsageErrorsExitWithOne) {
    EXPECT_EQ(run("").code, 1);
    EXPECT_EQ(run("no-such-command").code, 1);
    EXPECT_EQ(run("train-aop --config tiny.json --variant L2").code, 1);
    EXPECT_EQ(run("train-aop --config missing.json --variant MAE").code, 1);
    EXPECT_EQ(run("gradcam --config tiny.json --class both").code, 1);
    EXPECT_EQ(run("--help").code, 0);
}

TEST_F(Cli, MissingDataExitsWithTwo) {
    const auto r = run("evaluate-seg --config tiny.json --out nowhere --variant MAE");
    EXPECT_EQ(r.code, 2);
    EXPECT_NE(r.err.find("checkpoint"), std::string::npos);
}

TEST_F(Cli, SynthGenCreatesDirectoryAndIsDeterministic) {
    ASSERT_EQ(run("synth-gen --config tiny.json --out nested/a/corpus").code, 0);
    ASSERT_EQ(run("synth-gen --config tiny.json --out nested/b/corpus").code, 0);
    const auto a = path("nested/a/corpus/manifest.csv");
    ASSERT_TRUE(fs::exists(a));
    EXPECT_EQ(aop::sha256_file(a), aop::sha256_file(path("nested/b/corpus/manifest.csv")));
    const auto prov = nlohmann::json::parse(slurp(path("nested/a/corpus/provenance.json")));
    EXPECT_EQ(prov["config_hash"].get<std::string>().size(), 64u);
    ASSERT_EQ(run("synth-gen --config tiny.json --seed 6 --out nested/c/corpus").code, 0);
    EXPECT_NE(aop::sha256_file(a), aop::sha256_file(path("nested/c/corpus/manifest.csv")));
}

TEST_F(Cli, TrainAopWritesOneLossRowPerEpochAndResumes) {
    ensure_trained();
    const auto lines = lines_of(path("run/aop/MAE/loss.csv"));
    ASSERT_EQ(lines.size(), 3u);
    EXPECT_EQ(lines[0], "epoch,d_loss,g_adv,content_loss");

    ASSERT_EQ(run("train-aop --config tiny.json --out resume --variant MAE --stop-after 1").code, 0);
    EXPECT_EQ(lines_of(path("resume/aop/MAE/loss.csv")).size(), 2u);
    ASSERT_EQ(run("train-aop --config tiny.json --out resume --variant MAE --resume").code, 0);
    const auto resumed = lines_of(path("resume/aop/MAE/loss.csv"));
    ASSERT_EQ(resumed.size(), 3u);
    EXPECT_EQ(resumed[2].substr(0, 2), "2,");
    // Same numbers as the uninterrupted run.
    EXPECT_EQ(resumed, lines);
}

TEST_F(Cli, ResumeRefusesACheckpointFromAnotherConfig) {
    ensure_trained();
    ASSERT_EQ(run("train-aop --config tiny.json --out other --variant MAE --stop-after 1").code, 0);
    EXPECT_EQ(run("train-aop --config tiny.json --seed 99 --out other --variant MAE --resume").code, 1);
}

TEST_F(Cli, EvaluateSegFormatAndOracle) {
    ensure_trained();
    const auto r = run("evaluate-seg --config tiny.json --out run --oracle");
    ASSERT_EQ(r.code, 0) << r.err;
    const auto rows = lines_of(path("run/report/segmentation.csv"));
    ASSERT_EQ(rows.size(), 5u);
    EXPECT_EQ(rows[0], "variant,precision,recall,f1");
    EXPECT_EQ(rows[1].substr(0, 9), "MAE_prob,");
    EXPECT_EQ(rows[4], "oracle,1,1,1");

    ASSERT_EQ(run("evaluate-seg --config tiny.json --out run --variant SSIM").code, 0);
    EXPECT_EQ(lines_of(path("run/report/segmentation.csv")).size(), 2u);
}

TEST_F(Cli, PretreatKeepsCountResizesAndWarnsOnSecondPass) {
    ensure_trained();
    const auto in = path("corpus/classification/test");
    const auto r = run("pretreat --config tiny.json --checkpoint run/aop/SSIM/checkpoint.pt --input corpus/classification/test --out pre1");
    ASSERT_EQ(r.code, 0) << r.err;
    int inputs = 0, outputs = 0;
    for (const auto& e : fs::recursive_directory_iterator(in)) inputs += e.is_regular_file();
    for (const auto& e : fs::recursive_directory_iterator(path("pre1"))) {
        if (!e.is_regular_file() || !aop::has_image_extension(e.path())) continue;
        ++outputs;
        const auto img = aop::read_image(e.path());
        EXPECT_EQ(img.height(), 224);
        EXPECT_EQ(img.width(), 224);
    }
    EXPECT_EQ(inputs, outputs);
    EXPECT_EQ(r.err.find("warning"), std::string::npos);

    const auto again = run("pretreat --config tiny.json --checkpoint run/aop/SSIM/checkpoint.pt --input pre1 --out pre2");
    EXPECT_EQ(again.code, 0);
    EXPECT_NE(again.err.find("warning"), std::string::npos);
}

TEST_F(Cli, RunComparisonNeedsCheckpointsAndNamesTheMissingFile) {
    ensure_trained();
    const auto r = run("run-comparison --config tiny.json --out empty_run");
    EXPECT_EQ(r.code, 2);
    EXPECT_NE(r.err.find("empty_run/aop/MAE_prob/checkpoint.pt"), std::string::npos);
}

TEST_F(Cli, RunComparisonReportShape) {
    ensure_trained();
    const auto r = run("run-comparison --config tiny.json --out run");
    ASSERT_EQ(r.code, 0) << r.err;
    const auto report = aop::MetricsReport::load(path("run/report/metrics.json"));
    ASSERT_EQ(report.arms.size(), 4u);
    const std::vector<std::string> names = {"w/o AOP", "AOP_MAE_prob", "AOP_MAE", "AOP_SSIM"};
    std::set<std::string> tags;
    for (size_t i = 0; i < 4; ++i) {
        const auto& a = report.arms[i];
        EXPECT_EQ(a.arm, names[i]);
        EXPECT_EQ(a.classifier_config_hash, report.arms[0].classifier_config_hash);
        tags.insert(a.pretreat_tag);
        for (int s = 0; s < 3; ++s) {
            EXPECT_GE(a.accuracy[s], 0.0);
            EXPECT_EQ(a.confusion[s].total(), s == 0 ? 32 : 16);
        }
        EXPECT_EQ(a.gap, a.accuracy[1] - a.accuracy[2]);
        EXPECT_TRUE(a.gradcam_overlap.has_value());
        EXPECT_EQ(a.gradcam_images, 8);
    }
    EXPECT_EQ(tags.size(), 4u);
    EXPECT_EQ(report.segmentation.size(), 3u);
    EXPECT_FALSE(report.provenance.config_hash.empty());
    for (const char* f : {"accuracy.png", "gradcam_overlap.png", "confusion_none_test.png", "confusion_SSIM_validation.png",
                          "accuracy.csv", "segmentation.csv", "gradcam/SSIM/overlap.csv"})
        EXPECT_TRUE(fs::exists(path("run/report") / f)) << f;
    EXPECT_EQ(lines_of(path("run/report/accuracy.csv")).size(), 5u);

    const auto cam = run("gradcam --config tiny.json --out run --arm SSIM --class true --images 4");
    ASSERT_EQ(cam.code, 0) << cam.err;
    const auto csv = lines_of(path("run/report/gradcam/SSIM/overlap.csv"));
    ASSERT_EQ(csv.size(), 5u);
    EXPECT_EQ(csv[0], "filename,true_class,predicted_class,target_class,overlap");
}
