// Desk-scale acceptance run. Prints one PASS/FAIL line per criterion; exit status is the number of failures.
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <map>
#include <random>
#include <set>
#include <sstream>

#include <CLI11.hpp>

#include "aop/augmentation.hpp"
#include "aop/classifier.hpp"
#include "aop/config.hpp"
#include "aop/hashing.hpp"
#include "aop/metrics.hpp"
#include "aop/synth_corpus.hpp"
#include "commands.hpp"

namespace fs = std::filesystem;
using namespace aop;

namespace {

using Clock = std::chrono::steady_clock;

struct Outcome {
    bool pass = true;
    std::vector<std::string> notes;
    std::map<std::string, double> numbers;       // compared within 1e-6 on rerun
    std::map<std::string, std::string> hashes;   // compared exactly on rerun
    double seconds = 0.0;

    void check(bool ok, const std::string& what) {
        if (!ok) {
            pass = false;
            notes.push_back("failed: " + what);
        }
    }
    void note(const std::string& s) { notes.push_back(s); }
};

std::string fmt(double v, int digits = 4) {
    std::ostringstream o;
    o << std::fixed << std::setprecision(digits) << v;
    return o.str();
}

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

torch::Tensor rand_double(std::vector<int64_t> shape, uint64_t seed) {
    torch::manual_seed(seed);
    return torch::rand(shape, torch::kFloat64);
}

Image rand_image(int64_t h, int64_t w, uint64_t seed) {
    torch::manual_seed(seed);
    return Image(torch::rand({h, w, 3}));
}

MaskImage rand_mask(int64_t h, int64_t w, uint64_t seed) {
    torch::manual_seed(seed);
    return MaskImage((torch::rand({h, w}) > 0.5).to(torch::kFloat32), true);
}

// Largest relative gap between autograd and central differences. Entries far below the
// largest gradient are measured against that scale instead of their own.
double fd_relative_error(const std::function<torch::Tensor(const torch::Tensor&)>& f, torch::Tensor x, double h = 1e-6) {
    auto xg = x.clone().requires_grad_(true);
    const auto grad = torch::autograd::grad({f(xg)}, {xg})[0].detach();
    const double floor = 1e-3 * grad.abs().max().item<double>();
    auto flat = x.view({-1});
    auto gflat = grad.view({-1});
    double worst = 0.0;
    for (int64_t i = 0; i < flat.numel(); ++i) {
        const double orig = flat[i].item<double>();
        flat[i] = orig + h;
        const double up = f(x).item<double>();
        flat[i] = orig - h;
        const double down = f(x).item<double>();
        flat[i] = orig;
        const double fd = (up - down) / (2 * h);
        worst = std::max(worst, std::abs(gflat[i].item<double>() - fd) / std::max(std::abs(fd), floor));
    }
    return worst;
}

// 1. metric and loss properties
Outcome metric_suite() {
    Outcome o;
    const auto t0 = Clock::now();

    double self_err = 0.0;
    for (uint64_t s = 0; s < 20; ++s) {
        const auto img = rand_image(16, 16, 100 + s);
        self_err = std::max(self_err, std::abs(ssim(img, img) - 1.0));
    }
    o.check(self_err <= 1e-6, "ssim(x,x) = 1");
    o.numbers["ssim_self_error"] = self_err;

    std::mt19937_64 rng(7);
    double asym = 0.0, lo = 1.0, hi = -1.0, sum = 0.0;
    for (int k = 0; k < 200; ++k) {
        auto x = rand_double({1, 1, 16, 16}, rng());
        auto y = rand_double({1, 1, 16, 16}, rng());
        if (k % 3 == 1) y = 1.0 - x;
        if (k % 3 == 2) y = 0.5 * x + 0.5 * y;
        const double xy = ssim(x, y).item<double>();
        const double yx = ssim(y, x).item<double>();
        asym = std::max(asym, std::abs(xy - yx));
        lo = std::min(lo, xy);
        hi = std::max(hi, xy);
        sum += xy;
    }
    o.check(asym <= 1e-12, "ssim symmetry");
    o.check(lo >= -1.0 && hi <= 1.0, "ssim range");
    o.numbers["ssim_pair_sum"] = sum;
    o.note("200 pairs in [" + fmt(lo) + ", " + fmt(hi) + "]");

    const auto target = rand_double({1, 3, 16, 16}, 8);
    const auto pred = rand_double({1, 3, 16, 16}, 9);
    const double ssim_fd = fd_relative_error([&](const torch::Tensor& p) { return ssim_loss(p, target); }, pred);
    const auto logits = rand_double({6, kNumClasses}, 10) * 4.0 - 2.0;
    const auto labels = torch::tensor({0, 3, 7, 2, 2, 5}, torch::kLong);
    const double ce_fd = fd_relative_error([&](const torch::Tensor& z) { return classification_loss(z, labels); }, logits);
    o.check(ssim_fd <= 1e-4, "ssim gradient");
    o.check(ce_fd <= 1e-4, "cross-entropy gradient");
    o.numbers["ssim_fd"] = ssim_fd;
    o.numbers["ce_fd"] = ce_fd;
    o.note("fd rel err ssim " + fmt(ssim_fd, 8) + ", ce " + fmt(ce_fd, 8));

    double f1_err = 0.0;
    for (uint64_t s = 0; s < 50; ++s) {
        const auto sc = precision_recall_f1(rand_mask(16, 16, 200 + s), rand_mask(16, 16, 300 + s));
        const double hm = 2 * sc.precision * sc.recall / (sc.precision + sc.recall);
        f1_err = std::max(f1_err, std::abs(sc.f1 - hm));
        o.numbers["f1_" + std::to_string(s)] = sc.f1;
    }
    o.check(f1_err <= 1e-12, "F1 harmonic mean");

    double acc_err = 0.0;
    std::uniform_int_distribution<int> cls(0, kNumClasses - 1);
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<DiseaseLabel> preds, truths;
        for (int i = 0; i < 97; ++i) {
            truths.push_back(label_from_index(cls(rng)));
            preds.push_back(rng() % 3 == 0 ? truths.back() : label_from_index(cls(rng)));
        }
        const auto cm = confusion_matrix(preds, truths);
        acc_err = std::max(acc_err, std::abs(static_cast<double>(cm.trace()) / cm.total() - accuracy(preds, truths)));
    }
    o.check(acc_err == 0.0, "trace/total = accuracy");

    o.seconds = seconds_since(t0);
    o.check(o.seconds < 60.0, "runtime < 1 min");
    return o;
}

// 2. augmentation properties
Outcome augmentation_suite() {
    Outcome o;
    const auto t0 = Clock::now();
    bool gamma_id = true, rot_id = true, mirror_id = true, commute = true;
    double inv_err = 0.0;
    for (uint64_t s = 0; s < 20; ++s) {
        const auto img = rand_image(24 + static_cast<int64_t>(s % 3), 24, 500 + s);
        gamma_id = gamma_id && gamma_correct(img, 1.0).same_pixels(img);
        for (double g : {0.5, 0.8, 1.5, 2.0, 2.2}) {
            const auto back = gamma_correct(gamma_correct(img, g), 1.0 / g);
            inv_err = std::max(inv_err, (back.tensor() - img.tensor()).abs().max().item<double>());
        }
        auto r = img;
        for (int k = 0; k < 4; ++k) r = rotate(r, 90.0);
        rot_id = rot_id && r.same_pixels(img);
        mirror_id = mirror_id && mirror(mirror(img)).same_pixels(img);

        // The mask follows the image: transforming the pair equals transforming the
        // mask's indicator image.
        const auto mask = rand_mask(24, 24, 600 + s);
        const Image indicator(mask.tensor().unsqueeze(2).expand({24, 24, 3}).clone());
        for (double angle : {0.0, 90.0, 180.0, 270.0})
            for (bool m : {false, true}) {
                const auto out = apply_aop_draw(SegmentationPair(indicator, mask), {angle, m, {3, 5}, 2.0}, 16);
                commute = commute && torch::equal(out.image.tensor().select(2, 0), out.mask.tensor());
            }
    }
    o.check(gamma_id, "gamma 1 identity");
    o.check(inv_err <= 1e-6, "gamma inverse");
    o.check(rot_id, "4 x 90 rotation identity");
    o.check(mirror_id, "mirror involution");
    o.check(commute, "mask/image commutation");
    o.numbers["gamma_inverse_error"] = inv_err;
    o.note("gamma inverse max err " + fmt(inv_err, 9));
    o.seconds = seconds_since(t0);
    o.check(o.seconds < 60.0, "runtime < 1 min");
    return o;
}

// 3. single-pair segmentation overfit and 32-example classifier overfit
Outcome training_sanity(const RunConfig& cfg) {
    Outcome o;
    const auto t0 = Clock::now();
    const int64_t size = cfg.geometry.working_size;

    const auto leaf = render_sample(DiseaseLabel::BrownSpot, 3, 1.0, derive_seed(cfg.seed("aop"), "overfit"), size);
    AopModel model(AopVariant::Mae, cfg.generator, cfg.discriminator, cfg.geometry, derive_seed(cfg.seed("aop"), "init"));
    TrainConfigAOP train = cfg.aop_train;
    train.batch_size = 1;
    train.epochs = 200;  // one pair, so one step per epoch
    AopTrainOptions opts;
    opts.recipe = AugmentationRecipe{0.0, false, std::nullopt, {1.0}};
    opts.ssim = cfg.ssim;
    const auto losses = train_aop(model, {SegmentationPair(leaf.image, leaf.mask)}, train, opts);
    const double content = losses.back().content_loss;
    o.check(content < 0.05, "segmentation overfit content loss < 0.05");
    o.numbers["aop_final_content"] = content;
    o.numbers["aop_final_d"] = losses.back().d_loss;
    o.note("AOP_MAE 200 steps content " + fmt(content));

    std::vector<LabeledExample> examples;
    for (int c = 0; c < kNumClasses; ++c)
        for (int k = 0; k < 4; ++k) {
            const auto s = render_sample(label_from_index(c), c * 4 + k, 1.0,
                                         derive_seed(cfg.seed("classifier"), "overfit" + std::to_string(c * 4 + k)),
                                         cfg.classifier.input_size);
            examples.emplace_back(s.image, label_from_index(c), Split::Training);
        }
    TrainConfigCls cls = cfg.classifier_train;
    cls.epochs = 50;
    cls.batch_size = 8;
    cls.augment = false;
    const auto result = train_classifier(examples, examples, cfg.classifier, cls);
    int64_t first_perfect = 0;
    for (const auto& e : result.history)
        if (e.train_accuracy == 1.0) {
            first_perfect = e.epoch;
            break;
        }
    o.check(first_perfect > 0, "classifier train accuracy 1.0 within 50 epochs");
    o.numbers["cls_first_perfect"] = static_cast<double>(first_perfect);
    o.numbers["cls_final_loss"] = result.history.back().loss;
    o.note(first_perfect > 0 ? "classifier 1.0 at epoch " + std::to_string(first_perfect)
                             : "classifier best " + fmt(std::max_element(result.history.begin(), result.history.end(),
                                                                        [](const auto& a, const auto& b) {
                                                                            return a.train_accuracy < b.train_accuracy;
                                                                        })->train_accuracy));
    o.seconds = seconds_since(t0);
    o.check(o.seconds < 600.0, "runtime < 10 min");
    return o;
}

// Manifest plus every 97th listed file.
void hash_corpus(const CorpusPaths& paths, const fs::path& root, Outcome& o) {
    o.hashes["manifest"] = sha256_file(paths.manifest);
    const auto rows = read_manifest(paths.manifest);
    for (size_t i = 0; i < rows.size(); i += 97) o.hashes[rows[i].filename] = sha256_file(root / rows[i].filename);
}

// 4. segmentation quality of the three variants
Outcome segmentation_quality(const RunConfig& cfg, double& aop_training_seconds) {
    Outcome o;
    const auto t0 = Clock::now();
    const auto paths = cli::synth_gen(cfg);
    hash_corpus(paths, cfg.corpus_dir, o);
    const cli::RunLayout layout{cfg.out_dir};
    const auto t_train = Clock::now();
    for (auto v : kAllVariants) {
        fs::remove_all(layout.aop_dir(v));
        cli::train_aop(cfg, v);
        std::ifstream csv(layout.aop_loss_csv(v));
        std::string line, last;
        while (std::getline(csv, line)) last = line;
        o.hashes["loss_" + std::string(variant_name(v))] = last;
    }
    aop_training_seconds = seconds_since(t_train);
    std::map<std::string, double> f1;
    for (const auto& [name, sc] : cli::evaluate_seg(cfg, {kAllVariants.begin(), kAllVariants.end()})) {
        f1[name] = sc.f1;
        o.numbers["precision_" + name] = sc.precision;
        o.numbers["recall_" + name] = sc.recall;
        o.numbers["f1_" + name] = sc.f1;
        o.check(sc.f1 >= 0.95, name + " F1 >= 0.95");
        o.note(name + " F1 " + fmt(sc.f1));
    }
    o.check(f1["SSIM"] >= f1["MAE_prob"], "SSIM F1 >= MAE_prob F1");
    o.seconds = seconds_since(t0);
    o.check(o.seconds < 1800.0, "runtime < 30 min");
    return o;
}

// 5. four-arm comparison
Outcome anti_overfitting(const RunConfig& cfg, double aop_training_seconds, MetricsReport& report) {
    Outcome o;
    const auto t0 = Clock::now();
    report = cli::run_comparison(cfg);
    std::map<std::string, const ArmResult*> arm;
    for (const auto& a : report.arms) arm[a.arm] = &a;
    const auto& raw = *arm.at("w/o AOP");
    const auto& mae = *arm.at("AOP_MAE");
    const auto& ssim_arm = *arm.at("AOP_SSIM");
    for (const auto& a : report.arms)
        o.note(a.arm + " val " + fmt(a.accuracy[1], 3) + " test " + fmt(a.accuracy[2], 3) + " gap " + fmt(a.gap, 3));

    o.check(raw.gap >= 0.20, "w/o AOP gap >= 20 points");
    o.check(ssim_arm.gap <= 0.5 * raw.gap, "AOP_SSIM halves the gap");
    o.check(ssim_arm.accuracy[2] >= mae.accuracy[2] - 0.02, "AOP_SSIM >= AOP_MAE on test (2-point tie)");
    o.check(mae.accuracy[2] >= raw.accuracy[2], "AOP_MAE >= w/o AOP on test");
    o.seconds = seconds_since(t0) + aop_training_seconds;
    o.check(o.seconds < 7200.0, "runtime < 2 h");
    return o;
}

// 6. Grad-CAM overlap with the leaf
Outcome gradcam_evidence(const RunConfig& cfg, const MetricsReport& report) {
    Outcome o;
    std::map<std::string, const ArmResult*> arm;
    for (const auto& a : report.arms) arm[a.arm] = &a;
    const auto& raw = *arm.at("w/o AOP");
    const auto& ssim_arm = *arm.at("AOP_SSIM");
    o.check(raw.gradcam_overlap.has_value() && ssim_arm.gradcam_overlap.has_value(), "overlap recorded");
    if (!o.pass) return o;
    o.check(ssim_arm.gradcam_images == cfg.gradcam_images && raw.gradcam_images == cfg.gradcam_images,
            std::to_string(cfg.gradcam_images) + " test images");
    const double margin = *ssim_arm.gradcam_overlap - *raw.gradcam_overlap;
    o.check(margin >= 0.1, "AOP_SSIM overlap exceeds w/o AOP by >= 0.1");
    o.note("overlap w/o AOP " + fmt(*raw.gradcam_overlap) + ", AOP_SSIM " + fmt(*ssim_arm.gradcam_overlap) +
           ", margin " + fmt(margin));
    return o;
}

// 8. mutual information between background texture and class
Outcome corpus_audit(const RunConfig& cfg, const fs::path& work) {
    Outcome o;
    const auto t0 = Clock::now();
    const auto confounded = corpus_confound_audit(cfg.corpus_dir, cfg.corpus_dir / "manifest.csv");
    const double mi1 = confounded.at("training");
    o.check(std::abs(mi1 - std::log(8.0)) <= 0.05, "rho = 1 training MI = log 8 +- 0.05");

    SynthConfig neutral = cfg.synth;
    neutral.confound_strength = 0.0;
    neutral.per_class = {100, 50, 50};  // n = 800 training images
    neutral.segmentation_pairs = 0;
    const auto root = work / "rho0";
    fs::remove_all(root);
    const auto paths = generate_corpus(neutral, root);
    const auto independent = corpus_confound_audit(root, paths.manifest);
    const double mi0 = independent.at("training");
    o.check(mi0 < 0.02, "rho = 0 training MI < 0.02");
    o.note("MI rho=1 " + fmt(mi1) + " (log 8 = " + fmt(std::log(8.0)) + "), rho=0 " + fmt(mi0) + ", rho=0 test " +
           fmt(independent.at("test")));
    o.seconds = seconds_since(t0);
    return o;
}

// 7. rerun 1-4 and compare
Outcome determinism(const std::array<Outcome, 4>& first, const std::array<Outcome, 4>& second) {
    Outcome o;
    int numbers = 0, hashes = 0;
    for (size_t k = 0; k < 4; ++k) {
        const auto label = "run " + std::to_string(k + 1);
        o.check(first[k].numbers.size() == second[k].numbers.size(), label + " number count");
        for (const auto& [key, v] : first[k].numbers) {
            const auto it = second[k].numbers.find(key);
            const bool same = it != second[k].numbers.end() && std::abs(it->second - v) <= 1e-6;
            o.check(same, label + " " + key + " within 1e-6");
            ++numbers;
        }
        o.check(first[k].hashes == second[k].hashes, label + " hashes identical");
        hashes += static_cast<int>(first[k].hashes.size());
    }
    o.note(std::to_string(numbers) + " numbers, " + std::to_string(hashes) + " hashes compared");
    return o;
}

void print(int id, const Outcome& o) {
    std::cout << "criterion " << id << ": " << (o.pass ? "PASS" : "FAIL");
    for (const auto& n : o.notes) std::cout << " | " << n;
    if (o.seconds > 0.0) std::cout << " | " << fmt(o.seconds, 1) << "s";
    std::cout << std::endl;
}

RunConfig relocate(RunConfig cfg, const fs::path& root) {
    cfg.corpus_dir = root / "corpus";
    cfg.out_dir = root / "run";
    return cfg;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Desk-scale acceptance run"};
    std::string config_path, work_dir = "acceptance";
    std::vector<int> only;
    app.add_option("--config", config_path, "run configuration")->required()->check(CLI::ExistingFile);
    app.add_option("--work", work_dir, "scratch directory");
    app.add_option("--only", only, "criteria to run (default all)");
    CLI11_PARSE(app, argc, argv);

    const fs::path work = fs::absolute(work_dir);
    const auto cfg = relocate(RunConfig::load(config_path), work / "first");
    if (cfg.threads > 0) torch::set_num_threads(cfg.threads);
    auto wanted = [&](int id) { return only.empty() || std::find(only.begin(), only.end(), id) != only.end(); };

    int failures = 0;
    auto report_one = [&](int id, const Outcome& o) {
        print(id, o);
        failures += o.pass ? 0 : 1;
    };
    auto guarded = [](const std::function<Outcome()>& run) {
        try {
            return run();
        } catch (const std::exception& e) {
            Outcome o;
            o.check(false, std::string("exception: ") + e.what());
            return o;
        }
    };

    std::array<Outcome, 4> first;
    double aop_seconds = 0.0;
    const bool need_corpus = wanted(4) || wanted(5) || wanted(6) || wanted(8);
    if (wanted(1) || wanted(7)) report_one(1, first[0] = guarded(metric_suite));
    if (wanted(2) || wanted(7)) report_one(2, first[1] = guarded(augmentation_suite));
    if (wanted(3) || wanted(7)) report_one(3, first[2] = guarded([&] { return training_sanity(cfg); }));
    if (need_corpus || wanted(7))
        report_one(4, first[3] = guarded([&] { return segmentation_quality(cfg, aop_seconds); }));

    if (wanted(5) || wanted(6)) {
        MetricsReport report;
        const auto o5 = guarded([&] { return anti_overfitting(cfg, aop_seconds, report); });
        report_one(5, o5);
        if (wanted(6)) report_one(6, guarded([&] { return gradcam_evidence(cfg, report); }));
    }
    if (wanted(7)) {
        const auto again = relocate(cfg, work / "second");
        std::array<Outcome, 4> second;
        double ignored = 0.0;
        second[0] = guarded(metric_suite);
        second[1] = guarded(augmentation_suite);
        second[2] = guarded([&] { return training_sanity(again); });
        second[3] = guarded([&] { return segmentation_quality(again, ignored); });
        report_one(7, determinism(first, second));
    }
    if (wanted(8)) report_one(8, guarded([&] { return corpus_audit(cfg, work); }));
    return failures;
}
