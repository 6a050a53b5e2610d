#include "commands.hpp"

#include <CLI11.hpp>
#include <algorithm>
#include <fstream>
#include <iostream>
#include <map>

#include "aop/dataset_io.hpp"
#include "aop/errors.hpp"
#include "aop/gradcam.hpp"
#include "aop/hashing.hpp"
#include "aop/plots.hpp"

namespace fs = std::filesystem;

namespace aop::cli {

std::string arm_id(Arm a) {
    switch (a) {
        case Arm::Raw: return "none";
        case Arm::MaeProb: return "MAE_prob";
        case Arm::Mae: return "MAE";
        case Arm::Ssim: return "SSIM";
    }
    return "none";
}

std::string arm_display_name(Arm a) { return a == Arm::Raw ? "w/o AOP" : "AOP_" + arm_id(a); }

Arm parse_arm(const std::string& s) {
    for (auto a : kAllArms) {
        if (s == arm_id(a) || s == arm_display_name(a)) return a;
    }
    throw InvalidInput("unknown arm '" + s + "' (expected none, MAE_prob, MAE or SSIM)");
}

std::optional<AopVariant> arm_variant(Arm a) {
    switch (a) {
        case Arm::MaeProb: return AopVariant::MaeProb;
        case Arm::Mae: return AopVariant::Mae;
        case Arm::Ssim: return AopVariant::Ssim;
        default: return std::nullopt;
    }
}

fs::path RunLayout::aop_dir(AopVariant v) const { return root / "aop" / std::string(variant_name(v)); }
fs::path RunLayout::classifier_dir(Arm a) const { return root / "classifier" / arm_id(a); }

namespace {

RunLayout layout_of(const RunConfig& cfg) { return {cfg.out_dir}; }

void require_file(const fs::path& p, const std::string& what) {
    if (!fs::exists(p)) throw DataError("missing " + what + ": " + p.string());
}

void write_provenance(const fs::path& dir, const RunConfig& cfg, const std::string& command,
                      nlohmann::json extra = nlohmann::json::object()) {
    fs::create_directories(dir);
    extra["command"] = command;
    extra["config_hash"] = cfg.hash();
    extra["git_revision"] = git_revision();
    extra["created"] = utc_timestamp();
    extra["config"] = cfg.resolved().to_json();
    std::ofstream(dir / "provenance.json") << extra.dump(2) << '\n';
}

fs::path classification_root(const RunConfig& cfg) { return cfg.corpus_dir / "classification"; }
fs::path segmentation_root(const RunConfig& cfg) { return cfg.corpus_dir / "segmentation"; }
fs::path manifest_path(const RunConfig& cfg) { return cfg.corpus_dir / "manifest.csv"; }

ClassificationDataset load_classification(const RunConfig& cfg) {
    require_file(classification_root(cfg), "classification corpus");
    auto ds = load_classification_dataset(classification_root(cfg), cfg.classifier_hold_size());
    for (const auto& w : ds.report.warnings) std::cerr << "warning: " << w << '\n';
    return ds;
}

std::vector<Image> images_of(const std::vector<LabeledExample>& exs) {
    std::vector<Image> out;
    out.reserve(exs.size());
    for (const auto& e : exs) out.push_back(e.image);
    return out;
}

std::vector<DiseaseLabel> labels_of(const std::vector<LabeledExample>& exs) {
    std::vector<DiseaseLabel> out;
    out.reserve(exs.size());
    for (const auto& e : exs) out.push_back(e.label);
    return out;
}

// Leaf masks of classification images, rebuilt from the curves stored in the manifest.
class LeafMaskIndex {
public:
    explicit LeafMaskIndex(const RunConfig& cfg) : root_(cfg.corpus_dir), size_(cfg.synth.image_size) {
        require_file(manifest_path(cfg), "corpus manifest");
        for (auto& row : read_manifest(manifest_path(cfg))) rows_.emplace(row.filename, std::move(row));
    }

    MaskImage mask_for(const std::string& path, int64_t out_size) const {
        const auto rel = fs::path(path).lexically_relative(root_).generic_string();
        const auto it = rows_.find(rel);
        if (it == rows_.end()) throw DataError("image not listed in manifest: " + path);
        return resize_mask(rasterize_leaf(LeafCurve::parse(it->second.curve_params), size_), out_size, out_size);
    }

private:
    fs::path root_;
    int64_t size_;
    std::map<std::string, ManifestRow> rows_;
};

// First n examples taking classes in turn, so every class is represented.
std::vector<LabeledExample> balanced_head(const std::vector<LabeledExample>& exs, int64_t n) {
    std::array<std::vector<const LabeledExample*>, kNumClasses> by_class;
    for (const auto& e : exs) by_class[to_index(e.label)].push_back(&e);
    std::vector<LabeledExample> out;
    for (size_t k = 0; static_cast<int64_t>(out.size()) < n; ++k) {
        bool any = false;
        for (const auto& bucket : by_class) {
            if (k < bucket.size() && static_cast<int64_t>(out.size()) < n) {
                out.push_back(*bucket[k]);
                any = true;
            }
        }
        if (!any) break;
    }
    return out;
}

TrainConfigCls classifier_train_config(const RunConfig& cfg) { return cfg.resolved().classifier_train; }

void apply_runtime(const RunConfig& cfg) {
    select_device();
    if (cfg.threads > 0) torch::set_num_threads(cfg.threads);
}

}  // namespace

CorpusPaths synth_gen(const RunConfig& cfg) {
    const auto r = cfg.resolved();
    auto paths = generate_corpus(r.synth, cfg.corpus_dir);
    write_provenance(cfg.corpus_dir, cfg, "synth-gen", {{"manifest_sha256", sha256_file(paths.manifest)}});
    return paths;
}

fs::path train_aop(const RunConfig& cfg, AopVariant variant, const TrainAopArgs& args) {
    const auto r = cfg.resolved();
    if (r.aop_recipe.crop_size ? *r.aop_recipe.crop_size != r.geometry.working_size
                               : r.geometry.load_size != r.geometry.working_size)
        throw InvalidInput("aop.recipe.crop_size must equal aop.geometry.working_size");
    const auto layout = layout_of(cfg);
    const auto ckpt = layout.aop_checkpoint(variant);
    if (args.resume && fs::exists(ckpt)) {
        const auto previous = AopModel::load(ckpt);
        if (previous.config_hash != cfg.hash())
            throw InvalidInput("checkpoint " + ckpt.string() + " was produced by a different config");
    }
    require_file(segmentation_root(cfg), "segmentation corpus");
    const auto ds = load_segmentation_dataset(segmentation_root(cfg), r.split, r.geometry.load_size);

    AopModel model(variant, r.generator, r.discriminator, r.geometry, derive_seed(r.aop_train.seed, "init"));
    model.config_hash = cfg.hash();
    AopTrainOptions opts;
    opts.recipe = r.aop_recipe;
    opts.ssim = r.ssim;
    opts.loss_csv = layout.aop_loss_csv(variant);
    opts.checkpoint = ckpt;
    opts.resume = args.resume;
    opts.dump_dir = layout.aop_dir(variant);
    opts.stop_after_epochs = args.stop_after_epochs;
    opts.on_epoch = [](const AopEpochLoss& e) {
        std::cerr << "epoch " << e.epoch << " d_loss " << e.d_loss << " g_adv " << e.g_adv << " content "
                  << e.content_loss << '\n';
    };
    aop::train_aop(model, ds.train, r.aop_train, opts);
    write_provenance(layout.aop_dir(variant), cfg, "train-aop", {{"variant", variant_name(variant)}});
    return ckpt;
}

std::optional<AopModel> load_arm_aop(const RunConfig& cfg, Arm arm) {
    const auto v = arm_variant(arm);
    if (!v) return std::nullopt;
    const auto ckpt = layout_of(cfg).aop_checkpoint(*v);
    require_file(ckpt, "AOP checkpoint (run train-aop --variant " + std::string(variant_name(*v)) + ")");
    return AopModel::load(ckpt);
}

std::optional<Pretreatment> arm_pretreatment(const RunConfig& cfg, Arm arm, std::optional<AopModel>& aop) {
    if (!aop) return std::nullopt;
    const auto ckpt = layout_of(cfg).aop_checkpoint(*arm_variant(arm));
    Pretreatment p;
    p.tag = arm_display_name(arm) + "@" + sha256_file(ckpt).substr(0, 16);
    const auto size = cfg.classifier_hold_size();
    AopModel* model = &*aop;
    p.apply = [model, size](const std::vector<Image>& imgs) { return pretreat_batch(imgs, *model, size); };
    return p;
}

ClassifierTrainResult train_classifier(const RunConfig& cfg, Arm arm) {
    const auto layout = layout_of(cfg);
    auto aop = load_arm_aop(cfg, arm);
    const auto pre = arm_pretreatment(cfg, arm, aop);
    const auto ds = load_classification(cfg);
    ClassifierTrainOptions opts;
    opts.metrics_csv = layout.classifier_dir(arm) / "metrics.csv";
    opts.checkpoint = layout.classifier_checkpoint(arm);
    opts.on_epoch = [&arm](const ClassifierEpoch& e) {
        std::cerr << arm_display_name(arm) << " epoch " << e.epoch << " train " << e.train_accuracy << " val "
                  << e.val_accuracy << " loss " << e.loss << '\n';
    };
    auto result = aop::train_classifier(ds.of_split(Split::Training), ds.of_split(Split::Validation),
                                        cfg.classifier, classifier_train_config(cfg), pre, opts);
    result.model.save(layout.classifier_checkpoint(arm));
    write_provenance(layout.classifier_dir(arm), cfg, "train-classifier",
                     {{"arm", arm_display_name(arm)}, {"pretreat", result.model.pretreat_tag}});
    return result;
}

PretreatSummary pretreat_dir(const RunConfig& cfg, const fs::path& checkpoint, const fs::path& in_dir,
                             const fs::path& out_dir, int64_t size) {
    require_file(checkpoint, "AOP checkpoint");
    if (!fs::is_directory(in_dir)) throw DataError("missing input directory: " + in_dir.string());
    PretreatSummary summary;
    if (fs::exists(in_dir / kPretreatMarker)) {
        summary.input_was_pretreated = true;
        std::cerr << "warning: " << in_dir.string()
                  << " holds pretreated images; pretreating them again is not a supported protocol\n";
    }
    auto model = AopModel::load(checkpoint);
    std::vector<fs::path> files;
    for (const auto& entry : fs::recursive_directory_iterator(in_dir)) {
        if (entry.is_regular_file() && has_image_extension(entry.path())) files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end());
    constexpr size_t kChunk = 64;
    for (size_t start = 0; start < files.size(); start += kChunk) {
        const auto end = std::min(files.size(), start + kChunk);
        std::vector<Image> imgs;
        for (size_t i = start; i < end; ++i) imgs.push_back(read_image(files[i]));
        const auto treated = pretreat_batch(imgs, model, size);
        for (size_t i = start; i < end; ++i) {
            auto dest = out_dir / files[i].lexically_relative(in_dir);
            dest.replace_extension(".png");
            fs::create_directories(dest.parent_path());
            write_image(dest, treated[i - start]);
            ++summary.written;
        }
    }
    fs::create_directories(out_dir);
    nlohmann::json marker = {{"checkpoint", checkpoint.string()},
                             {"checkpoint_sha256", sha256_file(checkpoint)},
                             {"variant", variant_name(model.variant())},
                             {"config_hash", cfg.hash()},
                             {"size", size}};
    std::ofstream(out_dir / kPretreatMarker) << marker.dump(2) << '\n';
    return summary;
}

std::vector<std::pair<std::string, SegmentationScores>> evaluate_seg(const RunConfig& cfg,
                                                                     const std::vector<AopVariant>& variants,
                                                                     bool oracle) {
    const auto r = cfg.resolved();
    const auto layout = layout_of(cfg);
    for (auto v : variants) require_file(layout.aop_checkpoint(v), "AOP checkpoint");
    require_file(segmentation_root(cfg), "segmentation corpus");
    const auto ds = load_segmentation_dataset(segmentation_root(cfg), r.split, r.geometry.load_size);
    std::vector<std::pair<std::string, SegmentationScores>> rows;
    for (auto v : variants) {
        auto model = AopModel::load(layout.aop_checkpoint(v));
        rows.emplace_back(std::string(variant_name(v)), evaluate_segmentation(ds.test, model));
    }
    if (oracle) {
        const auto passthrough = [](const std::vector<SegmentationPair>& working) {
            std::vector<MaskImage> masks;
            for (const auto& p : working) masks.push_back(p.mask);
            return masks;
        };
        rows.emplace_back("oracle", evaluate_segmentation(ds.test, r.geometry, passthrough));
    }
    write_segmentation_csv(layout.report_dir() / "segmentation.csv", rows);
    write_provenance(layout.report_dir(), cfg, "evaluate-seg");
    return rows;
}

GradcamSummary gradcam(const RunConfig& cfg, Arm arm, ClassifierModel& model, std::optional<AopModel>& aop,
                       const fs::path& out_dir, bool write_images) {
    const auto ds = load_classification(cfg);
    const LeafMaskIndex masks(cfg);
    const auto chosen = balanced_head(ds.of_split(Split::Test), cfg.gradcam_images);
    const auto pre = arm_pretreatment(cfg, arm, aop);
    const auto inputs = pre ? (*pre)(images_of(chosen)) : images_of(chosen);
    const auto size = cfg.classifier.input_size;
    const auto predicted = predict_labels(model, inputs);

    fs::create_directories(out_dir);
    std::ofstream csv(out_dir / "overlap.csv");
    csv.precision(10);
    csv << "filename,true_class,predicted_class,target_class,overlap\n";
    GradcamSummary summary;
    double total = 0.0;
    for (size_t i = 0; i < chosen.size(); ++i) {
        const auto target = cfg.gradcam_class == "true" ? chosen[i].label : predicted[i];
        const auto map = gradcam_map(inputs[i], model, target);
        auto leaf = masks.mask_for(chosen[i].path, size);
        if (aop) leaf = pretreat_geometry(leaf, aop->geometry(), size);
        const double overlap = overlap_score(map, leaf);
        total += overlap;
        const auto name = fs::path(chosen[i].path).filename().string();
        csv << name << ',' << label_name(chosen[i].label) << ',' << label_name(predicted[i]) << ','
            << label_name(target) << ',' << overlap << '\n';
        if (write_images) write_image(out_dir / name, gradcam_overlay(resize_image(inputs[i], size, size), map));
    }
    summary.images = static_cast<int64_t>(chosen.size());
    summary.mean_overlap = chosen.empty() ? 0.0 : total / static_cast<double>(chosen.size());
    write_provenance(out_dir, cfg, "gradcam", {{"arm", arm_display_name(arm)}, {"mean_overlap", summary.mean_overlap}});
    return summary;
}

GradcamSummary gradcam(const RunConfig& cfg, Arm arm) {
    const auto layout = layout_of(cfg);
    require_file(layout.classifier_checkpoint(arm), "classifier checkpoint (run train-classifier --arm " + arm_id(arm) + ")");
    auto model = ClassifierModel::load(layout.classifier_checkpoint(arm));
    auto aop = load_arm_aop(cfg, arm);
    return gradcam(cfg, arm, model, aop, layout.report_dir() / "gradcam" / arm_id(arm));
}

MetricsReport run_comparison(const RunConfig& cfg) {
    const auto layout = layout_of(cfg);
    require_file(manifest_path(cfg), "corpus manifest (run synth-gen)");
    for (auto v : kAllVariants)
        require_file(layout.aop_checkpoint(v), "AOP checkpoint (run train-aop --variant " + std::string(variant_name(v)) + ")");

    MetricsReport report;
    report.provenance.config_hash = cfg.hash();
    report.provenance.git_revision = git_revision();
    report.provenance.started = utc_timestamp();

    const auto ds = load_classification(cfg);
    const auto report_dir = layout.report_dir();
    for (auto arm : kAllArms) {
        auto trained = train_classifier(cfg, arm);
        auto aop = load_arm_aop(cfg, arm);
        const auto pre = arm_pretreatment(cfg, arm, aop);
        ArmResult result;
        result.arm = arm_display_name(arm);
        result.pretreat_tag = trained.model.pretreat_tag;
        result.classifier_config_hash = trained.model.config_hash;
        for (auto split : {Split::Training, Split::Validation, Split::Test}) {
            const auto exs = ds.of_split(split);
            if (exs.empty()) continue;
            const auto inputs = pre ? (*pre)(images_of(exs)) : images_of(exs);
            result.set_split(split, confusion_matrix(predict_labels(trained.model, inputs), labels_of(exs)));
        }
        const auto cam = gradcam(cfg, arm, trained.model, aop, report_dir / "gradcam" / arm_id(arm));
        result.gradcam_overlap = cam.mean_overlap;
        result.gradcam_images = cam.images;
        for (auto split : {Split::Validation, Split::Test}) {
            plot_confusion_matrix(result.confusion[static_cast<int>(split)],
                                  result.arm + " (" + std::string(split_name(split)) + ")",
                                  report_dir / ("confusion_" + arm_id(arm) + "_" + std::string(split_name(split)) + ".png"));
        }
        report.arms.push_back(std::move(result));
    }

    for (const auto& [variant, scores] : evaluate_seg(cfg, {kAllVariants.begin(), kAllVariants.end()}))
        report.segmentation[variant] = scores;

    std::vector<BarGroup> acc_groups, cam_groups;
    for (const auto& a : report.arms) {
        acc_groups.push_back({a.arm, {a.accuracy[0], a.accuracy[1], a.accuracy[2]}});
        cam_groups.push_back({a.arm, {a.gradcam_overlap.value_or(0.0)}});
    }
    plot_bar_chart(acc_groups, {"training", "validation", "test"}, "Accuracy per split", report_dir / "accuracy.png");
    plot_bar_chart(cam_groups, {"mean overlap"}, "Grad-CAM evidence inside the leaf", report_dir / "gradcam_overlap.png");

    report.provenance.finished = utc_timestamp();
    report.save(report_dir / "metrics.json");
    report.write_accuracy_csv(report_dir / "accuracy.csv");
    write_provenance(report_dir, cfg, "run-comparison");
    return report;
}

int main(int argc, char** argv) {
    CLI::App app{"Leaf segmentation pretreatment and disease classifier experiments"};
    app.require_subcommand(1);
    app.fallthrough();
    std::string config_path;
    std::optional<uint64_t> seed;
    std::string out;
    app.add_option("--config", config_path, "Run configuration (JSON)");
    app.add_option("--seed", seed, "Override the master seed");
    app.add_option("--out", out, "Output directory (corpus root for synth-gen)");

    auto* synth = app.add_subcommand("synth-gen", "Generate the synthetic corpus");

    auto* taop = app.add_subcommand("train-aop", "Train one segmentation variant");
    std::string variant;
    TrainAopArgs aop_args;
    taop->add_option("--variant", variant, "MAE_prob | MAE | SSIM")->required();
    taop->add_flag("--resume", aop_args.resume, "Continue from the last checkpoint");
    taop->add_option("--stop-after", aop_args.stop_after_epochs, "Stop after this many epochs in this call");

    auto* tcls = app.add_subcommand("train-classifier", "Train the classifier for one arm");
    std::string arm = "none";
    tcls->add_option("--arm", arm, "none | MAE_prob | MAE | SSIM");

    auto* pre = app.add_subcommand("pretreat", "Apply a segmentation checkpoint to a directory of images");
    std::string pre_ckpt, pre_in;
    int64_t pre_size = kClassificationSize;
    pre->add_option("--checkpoint", pre_ckpt, "AOP checkpoint")->required();
    pre->add_option("--input", pre_in, "Input image directory")->required();
    pre->add_option("--size", pre_size, "Output side length");

    auto* eval = app.add_subcommand("evaluate-seg", "Pixel precision/recall/F1 on held-out pairs");
    std::vector<std::string> eval_variants;
    bool oracle = false;
    eval->add_option("--variant", eval_variants, "Variants to evaluate (default: all)");
    eval->add_flag("--oracle", oracle, "Add a ground-truth passthrough row");

    auto* cmp = app.add_subcommand("run-comparison", "Train and evaluate all four classifier arms");

    auto* cam = app.add_subcommand("gradcam", "Evidence maps for one trained arm");
    std::string cam_arm = "none", cam_class;
    int64_t cam_images = 0;
    cam->add_option("--arm", cam_arm, "none | MAE_prob | MAE | SSIM");
    cam->add_option("--class", cam_class, "predicted | true");
    cam->add_option("--images", cam_images, "Number of test images");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    try {
        RunConfig cfg = config_path.empty() ? RunConfig{} : RunConfig::load(config_path);
        if (seed) cfg.master_seed = *seed;
        apply_runtime(cfg);

        if (*synth) {
            if (!out.empty()) cfg.corpus_dir = out;
            const auto paths = synth_gen(cfg);
            std::cout << paths.manifest.string() << '\n';
            return 0;
        }
        if (!out.empty() && !*pre) cfg.out_dir = out;
        if (*taop) {
            std::cout << train_aop(cfg, parse_variant(variant), aop_args).string() << '\n';
        } else if (*tcls) {
            const auto a = parse_arm(arm);
            const auto result = train_classifier(cfg, a);
            std::cout << layout_of(cfg).classifier_checkpoint(a).string() << " best_val "
                      << result.model.best_val_accuracy << '\n';
        } else if (*pre) {
            if (out.empty()) throw InvalidInput("pretreat needs --out <dir>");
            const auto s = pretreat_dir(cfg, pre_ckpt, pre_in, out, pre_size);
            std::cout << s.written << " images written to " << out << '\n';
        } else if (*eval) {
            std::vector<AopVariant> vs;
            for (const auto& v : eval_variants) vs.push_back(parse_variant(v));
            if (vs.empty()) vs.assign(kAllVariants.begin(), kAllVariants.end());
            std::cout << "variant,precision,recall,f1\n";
            for (const auto& [name, s] : evaluate_seg(cfg, vs, oracle))
                std::cout << name << ',' << s.precision << ',' << s.recall << ',' << s.f1 << '\n';
        } else if (*cmp) {
            const auto report = run_comparison(cfg);
            std::cout << "arm,training,validation,test,gap\n";
            for (const auto& a : report.arms)
                std::cout << a.arm << ',' << a.accuracy[0] << ',' << a.accuracy[1] << ',' << a.accuracy[2] << ','
                          << a.gap << '\n';
        } else if (*cam) {
            if (!cam_class.empty()) cfg.gradcam_class = cam_class;
            if (cam_images > 0) cfg.gradcam_images = cam_images;
            if (cfg.gradcam_class != "predicted" && cfg.gradcam_class != "true")
                throw InvalidInput("--class must be 'predicted' or 'true'");
            const auto s = gradcam(cfg, parse_arm(cam_arm));
            std::cout << "mean_overlap " << s.mean_overlap << " over " << s.images << " images\n";
        }
        return 0;
    } catch (const InvalidInput& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    } catch (const DivergenceError& e) {
        std::cerr << "training diverged: " << e.what() << '\n';
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    }
}

}  // namespace aop::cli
