#include "aop/aop_model.hpp"

#include <cmath>
#include <fstream>
#include <numeric>

#include "aop/dataset_io.hpp"
#include "aop/errors.hpp"
#include "aop/hashing.hpp"

namespace fs = std::filesystem;

namespace aop {

VariantTraits traits(AopVariant v) {
    switch (v) {
        case AopVariant::MaeProb: return {OutputMode::ProbabilityMap, ContentLoss::Mae, true};
        case AopVariant::Mae: return {OutputMode::RgbImage, ContentLoss::Mae, false};
        case AopVariant::Ssim: return {OutputMode::RgbImage, ContentLoss::Ssim, false};
    }
    throw InvalidInput("unknown variant");
}

std::string_view variant_name(AopVariant v) {
    switch (v) {
        case AopVariant::MaeProb: return "MAE_prob";
        case AopVariant::Mae: return "MAE";
        case AopVariant::Ssim: return "SSIM";
    }
    return "?";
}

AopVariant parse_variant(std::string_view name) {
    for (auto v : kAllVariants) {
        if (variant_name(v) == name) return v;
    }
    throw InvalidInput("unknown AOP variant '" + std::string(name) + "' (expected MAE_prob, MAE or SSIM)");
}

void TrainConfigAOP::validate() const {
    if (!(learning_rate > 0.0) || !(beta1 > 0.0 && beta1 < 1.0) || !(beta2 > 0.0 && beta2 < 1.0))
        throw InvalidInput("invalid Adam settings");
    if (batch_size < 1 || epochs < 1) throw InvalidInput("batch size and epochs must be positive");
    if (content_weight < 0.0) throw InvalidInput("content weight must be >= 0");
}

void to_json(nlohmann::json& j, const TrainConfigAOP& c) {
    j = {{"learning_rate", c.learning_rate}, {"beta1", c.beta1},   {"beta2", c.beta2},
         {"batch_size", c.batch_size},       {"epochs", c.epochs}, {"content_weight", c.content_weight},
         {"seed", c.seed}};
}

void from_json(const nlohmann::json& j, TrainConfigAOP& c) {
    c.learning_rate = j.value("learning_rate", c.learning_rate);
    c.beta1 = j.value("beta1", c.beta1);
    c.beta2 = j.value("beta2", c.beta2);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.epochs = j.value("epochs", c.epochs);
    c.content_weight = j.value("content_weight", c.content_weight);
    c.seed = j.value("seed", c.seed);
}

void AopGeometry::validate() const {
    if (working_size < 1 || load_size < working_size)
        throw InvalidInput("AOP geometry needs 1 <= working_size <= load_size");
    if (!(mask_threshold > 0.0 && mask_threshold < 1.0)) throw InvalidInput("mask threshold must lie in (0,1)");
    if (!(rgb_mask_threshold > 0.0 && rgb_mask_threshold < 1.0))
        throw InvalidInput("rgb mask threshold must lie in (0,1)");
}

void to_json(nlohmann::json& j, const AopGeometry& g) {
    j = {{"load_size", g.load_size},
         {"working_size", g.working_size},
         {"mask_threshold", g.mask_threshold},
         {"rgb_mask_threshold", g.rgb_mask_threshold}};
}

void from_json(const nlohmann::json& j, AopGeometry& g) {
    g.load_size = j.value("load_size", g.load_size);
    g.working_size = j.value("working_size", g.working_size);
    g.mask_threshold = j.value("mask_threshold", g.mask_threshold);
    g.rgb_mask_threshold = j.value("rgb_mask_threshold", g.rgb_mask_threshold);
}

AopModel::AopModel(AopVariant variant, GeneratorSpec gen, DiscriminatorSpec disc, AopGeometry geometry,
                   uint64_t init_seed)
    : variant_(variant), geometry_(geometry) {
    geometry_.validate();
    gen.output_mode = traits(variant).output_mode;
    disc.in_channels = gen.in_channels + gen.out_channels();
    torch::manual_seed(init_seed);
    generator_ = UNetGenerator(gen);
    discriminator_ = PatchDiscriminator(disc);
}

torch::Tensor AopModel::generate(const torch::Tensor& batch) {
    torch::NoGradGuard no_grad;
    generator_->eval();
    return generator_->forward(batch);
}

nlohmann::json AopModel::metadata() const {
    return {{"format_version", kCheckpointFormatVersion},
            {"kind", "aop"},
            {"variant", std::string(variant_name(variant_))},
            {"epoch", epoch},
            {"config_hash", config_hash},
            {"generator", generator_->spec()},
            {"discriminator", discriminator_->spec()},
            {"geometry", geometry_}};
}

void AopModel::save(const fs::path& path, torch::optim::Optimizer* opt_g, torch::optim::Optimizer* opt_d) const {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    torch::serialize::OutputArchive archive;
    archive.write("metadata", c10::IValue(metadata().dump()));
    torch::serialize::OutputArchive gen_archive, disc_archive;
    generator_->save(gen_archive);
    discriminator_->save(disc_archive);
    archive.write("generator", gen_archive);
    archive.write("discriminator", disc_archive);
    if (opt_g && opt_d) {
        torch::serialize::OutputArchive og, od;
        opt_g->save(og);
        opt_d->save(od);
        archive.write("opt_g", og);
        archive.write("opt_d", od);
    }
    // Write-then-rename so an interrupted save never leaves a truncated checkpoint.
    const auto tmp = fs::path(path.string() + ".tmp");
    archive.save_to(tmp.string());
    fs::rename(tmp, path);
}

namespace {

nlohmann::json read_metadata(torch::serialize::InputArchive& archive, const fs::path& path) {
    c10::IValue meta;
    if (!archive.try_read("metadata", meta) || !meta.isString())
        throw DataError("checkpoint has no metadata: " + path.string());
    auto j = nlohmann::json::parse(meta.toStringRef());
    if (j.value("format_version", 0) < 1) throw DataError("unsupported checkpoint version: " + path.string());
    return j;
}

torch::serialize::InputArchive open_archive(const fs::path& path) {
    if (!fs::exists(path)) throw DataError("checkpoint not found: " + path.string());
    torch::serialize::InputArchive archive;
    archive.load_from(path.string());
    return archive;
}

}  // namespace

AopModel AopModel::load(const fs::path& path) {
    auto archive = open_archive(path);
    auto j = read_metadata(archive, path);
    if (j.value("kind", "") != "aop") throw DataError("not an AOP checkpoint: " + path.string());
    AopModel model(parse_variant(j.at("variant").get<std::string>()), j.at("generator").get<GeneratorSpec>(),
                   j.at("discriminator").get<DiscriminatorSpec>(), j.at("geometry").get<AopGeometry>());
    model.restore(path);
    return model;
}

void AopModel::restore(const fs::path& path, torch::optim::Optimizer* opt_g, torch::optim::Optimizer* opt_d) {
    auto archive = open_archive(path);
    auto j = read_metadata(archive, path);
    if (j.at("variant").get<std::string>() != variant_name(variant_))
        throw InvalidInput("checkpoint variant " + j.at("variant").get<std::string>() + " does not match model variant " +
                           std::string(variant_name(variant_)));
    torch::serialize::InputArchive gen_archive, disc_archive;
    archive.read("generator", gen_archive);
    archive.read("discriminator", disc_archive);
    generator_->load(gen_archive);
    discriminator_->load(disc_archive);
    epoch = j.value("epoch", int64_t{0});
    config_hash = j.value("config_hash", std::string{});
    if (opt_g && opt_d) {
        torch::serialize::InputArchive og, od;
        if (archive.try_read("opt_g", og) && archive.try_read("opt_d", od)) {
            opt_g->load(og);
            opt_d->load(od);
        }
    }
}

torch::Tensor content_target(AopVariant v, const torch::Tensor& images, const torch::Tensor& masks) {
    if (traits(v).target_is_mask) return masks;
    return images * masks;
}

torch::Tensor content_loss(AopVariant v, const torch::Tensor& pred, const torch::Tensor& target,
                           const SSIMConfig& ssim_cfg) {
    return traits(v).content_loss == ContentLoss::Ssim ? ssim_loss(pred, target, ssim_cfg) : mae_loss(pred, target);
}

namespace {

struct Batch {
    torch::Tensor input, image, mask;
};

Batch make_batch(const std::vector<SegmentationPair>& pairs, const std::vector<size_t>& idx,
                 const AugmentationRecipe& recipe, Rng& rng) {
    std::vector<torch::Tensor> inputs, images, masks;
    for (auto i : idx) {
        auto s = augment_for_aop(pairs[i], recipe, rng);
        inputs.push_back(s.input.to_chw());
        images.push_back(s.image.to_chw());
        masks.push_back(s.mask.tensor().unsqueeze(0));
    }
    return {torch::stack(inputs), torch::stack(images), torch::stack(masks)};
}

void dump_divergence(const fs::path& dir, int64_t epoch, int64_t step, double d_loss, double g_adv, double content,
                     const Batch& batch) {
    fs::create_directories(dir);
    nlohmann::json j = {{"epoch", epoch},
                        {"step", step},
                        {"d_loss", d_loss},
                        {"g_adv", g_adv},
                        {"content_loss", content},
                        {"input_min", batch.input.min().item<double>()},
                        {"input_max", batch.input.max().item<double>()},
                        {"batch_size", batch.input.size(0)}};
    std::ofstream(dir / "divergence.json") << j.dump(2) << '\n';
}

}  // namespace

std::vector<AopEpochLoss> train_aop(AopModel& model, const std::vector<SegmentationPair>& train_pairs,
                                    const TrainConfigAOP& cfg, const AopTrainOptions& options) {
    cfg.validate();
    options.recipe.validate();
    options.ssim.validate();
    if (train_pairs.empty()) throw InvalidInput("no training pairs");
    const auto variant = model.variant();
    auto& gen = model.generator();
    auto& disc = model.discriminator();

    auto adam = [&](std::vector<torch::Tensor> params) {
        return torch::optim::Adam(std::move(params), torch::optim::AdamOptions(cfg.learning_rate)
                                                         .betas({cfg.beta1, cfg.beta2}));
    };
    auto opt_g = adam(gen->parameters());
    auto opt_d = adam(disc->parameters());

    int64_t start_epoch = 1;
    bool append_csv = false;
    if (options.resume && options.checkpoint && fs::exists(*options.checkpoint)) {
        model.restore(*options.checkpoint, &opt_g, &opt_d);
        start_epoch = model.epoch + 1;
        append_csv = true;
    }
    if (options.loss_csv && !append_csv) {
        if (options.loss_csv->has_parent_path()) fs::create_directories(options.loss_csv->parent_path());
        std::ofstream(*options.loss_csv, std::ios::trunc) << "epoch,d_loss,g_adv,content_loss\n";
    }

    std::vector<AopEpochLoss> curve;
    const auto n = train_pairs.size();
    int64_t epochs_run = 0;
    for (int64_t epoch = start_epoch; epoch <= cfg.epochs; ++epoch) {
        if (options.stop_after_epochs > 0 && epochs_run >= options.stop_after_epochs) break;
        Rng rng(derive_seed(cfg.seed, static_cast<uint64_t>(epoch)));
        std::vector<size_t> order(n);
        std::iota(order.begin(), order.end(), size_t{0});
        std::shuffle(order.begin(), order.end(), rng);

        gen->train();
        disc->train();
        double sum_d = 0.0, sum_adv = 0.0, sum_content = 0.0;
        int64_t steps = 0;
        for (size_t start = 0; start < n; start += static_cast<size_t>(cfg.batch_size)) {
            const auto end = std::min(n, start + static_cast<size_t>(cfg.batch_size));
            std::vector<size_t> idx(order.begin() + static_cast<std::ptrdiff_t>(start),
                                    order.begin() + static_cast<std::ptrdiff_t>(end));
            const auto batch = make_batch(train_pairs, idx, options.recipe, rng);
            const auto target = content_target(variant, batch.image, batch.mask);

            auto fake = gen->forward(batch.input);

            double d_value = 0.0;
            if (!options.freeze_discriminator) {
                opt_d.zero_grad();
                auto d_real = disc->forward(batch.input, target);
                auto d_fake = disc->forward(batch.input, fake.detach());
                auto d_loss = adversarial_losses(d_real, d_fake).d_loss;
                d_loss.backward();
                opt_d.step();
                d_value = d_loss.item<double>();
            } else {
                torch::NoGradGuard no_grad;
                d_value = adversarial_losses(disc->forward(batch.input, target), disc->forward(batch.input, fake))
                              .d_loss.item<double>();
            }

            opt_g.zero_grad();
            auto d_fake_for_g = disc->forward(batch.input, fake);
            auto g_adv = -torch::log(d_fake_for_g.clamp(kProbabilityEps, 1.0 - kProbabilityEps)).mean();
            auto content = content_loss(variant, fake, target, options.ssim);
            auto total = g_adv + cfg.content_weight * content;
            total.backward();
            opt_g.step();
            opt_d.zero_grad();

            const double adv_value = g_adv.item<double>();
            const double content_value = content.item<double>();
            if (!std::isfinite(d_value) || !std::isfinite(adv_value) || !std::isfinite(content_value)) {
                if (options.dump_dir)
                    dump_divergence(*options.dump_dir, epoch, steps, d_value, adv_value, content_value, batch);
                throw DivergenceError("AOP training diverged at epoch " + std::to_string(epoch) + ", step " +
                                      std::to_string(steps) + " (d_loss=" + std::to_string(d_value) +
                                      ", g_adv=" + std::to_string(adv_value) +
                                      ", content=" + std::to_string(content_value) + ")");
            }
            sum_d += d_value;
            sum_adv += adv_value;
            sum_content += content_value;
            ++steps;
        }

        AopEpochLoss row{epoch, sum_d / steps, sum_adv / steps, sum_content / steps};
        curve.push_back(row);
        model.epoch = epoch;
        ++epochs_run;
        if (options.loss_csv) {
            std::ofstream csv(*options.loss_csv, std::ios::app);
            csv.precision(10);
            csv << row.epoch << ',' << row.d_loss << ',' << row.g_adv << ',' << row.content_loss << '\n';
        }
        if (options.checkpoint) model.save(*options.checkpoint, &opt_g, &opt_d);
        if (options.on_epoch) options.on_epoch(row);
    }
    return curve;
}

MaskImage threshold_mask(const MaskImage& prob, double t) {
    if (!(t > 0.0 && t < 1.0)) throw InvalidInput("threshold must lie in (0,1)");
    return MaskImage((prob.tensor() >= static_cast<float>(t)).to(torch::kFloat32), true);
}

Image apply_mask(const Image& img, const MaskImage& mask) {
    if (!mask.is_binary()) throw InvalidInput("apply_mask needs a binary mask");
    if (img.height() != mask.height() || img.width() != mask.width())
        throw InvalidInput("image and mask dimensions differ");
    return Image::trusted(img.tensor() * mask.tensor().unsqueeze(2));
}

Image to_working_resolution(const Image& img, const AopGeometry& g) {
    auto resized = resize_image(img, g.load_size, g.load_size);
    const int64_t off = (g.load_size - g.working_size) / 2;
    return crop(resized, {off, off}, g.working_size);
}

MaskImage to_working_resolution(const MaskImage& mask, const AopGeometry& g) {
    auto resized = resize_mask(mask, g.load_size, g.load_size);
    const int64_t off = (g.load_size - g.working_size) / 2;
    return crop(resized, {off, off}, g.working_size);
}

namespace {

torch::Tensor rgb_chw(const Image& img) {
    auto chw = img.to_chw();
    return chw.size(0) == 1 ? chw.expand({3, chw.size(1), chw.size(2)}).contiguous() : chw;
}

// Runs the generator over working-resolution images in batches; returns N×k×H×W.
torch::Tensor generate_all(AopModel& model, const std::vector<Image>& working, int64_t batch_size) {
    std::vector<torch::Tensor> outs;
    for (size_t start = 0; start < working.size(); start += static_cast<size_t>(batch_size)) {
        const auto end = std::min(working.size(), start + static_cast<size_t>(batch_size));
        std::vector<torch::Tensor> chunk;
        for (size_t i = start; i < end; ++i) chunk.push_back(rgb_chw(working[i]));
        outs.push_back(model.generate(torch::stack(chunk)));
    }
    return outs.empty() ? torch::Tensor() : torch::cat(outs);
}

MaskImage mask_from_output(const torch::Tensor& out, AopVariant v, const AopGeometry& g) {
    if (traits(v).output_mode == OutputMode::ProbabilityMap)
        return threshold_mask(MaskImage(out[0].clamp(0.0, 1.0), false), g.mask_threshold);
    return MaskImage((std::get<0>(out.max(0)) > static_cast<float>(g.rgb_mask_threshold)).to(torch::kFloat32), true);
}

Image image_from_output(const torch::Tensor& out, const Image& working, AopVariant v, const AopGeometry& g) {
    if (traits(v).output_mode == OutputMode::ProbabilityMap) return apply_mask(working, mask_from_output(out, v, g));
    return Image::from_chw(out);
}

}  // namespace

std::vector<MaskImage> segment(AopModel& model, const std::vector<Image>& working_images, int64_t batch_size) {
    auto out = generate_all(model, working_images, batch_size);
    std::vector<MaskImage> masks;
    masks.reserve(working_images.size());
    for (size_t i = 0; i < working_images.size(); ++i)
        masks.push_back(mask_from_output(out[static_cast<int64_t>(i)], model.variant(), model.geometry()));
    return masks;
}

Image pretreat(const Image& img, AopModel& model, int64_t output_size) {
    return pretreat_batch({img}, model, output_size, 1).front();
}

std::vector<Image> pretreat_batch(const std::vector<Image>& imgs, AopModel& model, int64_t output_size,
                                  int64_t batch_size) {
    std::vector<Image> working;
    working.reserve(imgs.size());
    for (const auto& img : imgs) working.push_back(to_working_resolution(img, model.geometry()));
    auto out = generate_all(model, working, batch_size);
    std::vector<Image> result;
    result.reserve(imgs.size());
    for (size_t i = 0; i < imgs.size(); ++i) {
        auto treated = image_from_output(out[static_cast<int64_t>(i)], working[i], model.variant(), model.geometry());
        result.push_back(resize_image(treated, output_size, output_size));
    }
    return result;
}

MaskImage pretreat_geometry(const MaskImage& mask, const AopGeometry& g, int64_t output_size) {
    return resize_mask(to_working_resolution(mask, g), output_size, output_size);
}

SegmentationScores evaluate_segmentation(const std::vector<SegmentationPair>& pairs, const AopGeometry& g,
                                         const MaskPredictor& predict) {
    std::vector<SegmentationPair> working;
    working.reserve(pairs.size());
    for (const auto& p : pairs)
        working.emplace_back(to_working_resolution(p.image, g), to_working_resolution(p.mask, g), p.name);
    const auto predicted = predict(working);
    if (predicted.size() != working.size()) throw InvalidInput("predictor returned wrong number of masks");
    PixelCounts counts;
    for (size_t i = 0; i < working.size(); ++i) counts.add(predicted[i], working[i].mask);
    return scores_from_counts(counts);
}

SegmentationScores evaluate_segmentation(const std::vector<SegmentationPair>& pairs, AopModel& model) {
    return evaluate_segmentation(pairs, model.geometry(), [&](const std::vector<SegmentationPair>& working) {
        std::vector<Image> images;
        images.reserve(working.size());
        for (const auto& p : working) images.push_back(p.image);
        return segment(model, images);
    });
}

}  // namespace aop
