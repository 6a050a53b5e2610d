#include "aop/classifier.hpp"

#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>

#include "aop/dataset_io.hpp"
#include "aop/errors.hpp"
#include "aop/hashing.hpp"

namespace fs = std::filesystem;

namespace aop {

std::array<int64_t, 5> ClassifierSpec::block_channels() const {
    constexpr std::array<int64_t, 5> base = {64, 128, 256, 512, 512};
    std::array<int64_t, 5> out{};
    for (size_t i = 0; i < base.size(); ++i)
        out[i] = std::max<int64_t>(1, std::llround(static_cast<double>(base[i]) * width_multiplier));
    return out;
}

void ClassifierSpec::validate() const {
    if (input_size < 32 || input_size % 32 != 0) throw InvalidInput("classifier input size must be a multiple of 32");
    if (!(width_multiplier > 0.0)) throw InvalidInput("width multiplier must be > 0");
    if (fc1 < 1 || fc2 < 1) throw InvalidInput("fully connected widths must be positive");
}

void to_json(nlohmann::json& j, const ClassifierSpec& s) {
    j = {{"input_size", s.input_size}, {"width_multiplier", s.width_multiplier},
         {"fc1", s.fc1},               {"fc2", s.fc2},
         {"batch_norm", s.batch_norm}, {"pretrained_weights", s.pretrained_weights}};
}

void from_json(const nlohmann::json& j, ClassifierSpec& s) {
    s.input_size = j.value("input_size", s.input_size);
    s.width_multiplier = j.value("width_multiplier", s.width_multiplier);
    s.fc1 = j.value("fc1", s.fc1);
    s.fc2 = j.value("fc2", s.fc2);
    s.batch_norm = j.value("batch_norm", s.batch_norm);
    s.pretrained_weights = j.value("pretrained_weights", s.pretrained_weights);
}

void TrainConfigCls::validate() const {
    if (!(learning_rate > 0.0) || momentum < 0.0 || momentum >= 1.0) throw InvalidInput("invalid SGD settings");
    if (batch_size < 1 || epochs < 1) throw InvalidInput("batch size and epochs must be positive");
    recipe.validate();
}

void to_json(nlohmann::json& j, const TrainConfigCls& c) {
    j = {{"learning_rate", c.learning_rate}, {"momentum", c.momentum}, {"batch_size", c.batch_size},
         {"epochs", c.epochs},               {"seed", c.seed},         {"augment", c.augment},
         {"recipe", c.recipe}};
}

void from_json(const nlohmann::json& j, TrainConfigCls& c) {
    c.learning_rate = j.value("learning_rate", c.learning_rate);
    c.momentum = j.value("momentum", c.momentum);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.epochs = j.value("epochs", c.epochs);
    c.seed = j.value("seed", c.seed);
    c.augment = j.value("augment", c.augment);
    if (j.contains("recipe")) c.recipe = j.at("recipe").get<AugmentationRecipe>();
}

std::string classifier_config_hash(const ClassifierSpec& spec, const TrainConfigCls& cfg) {
    nlohmann::json j = {{"spec", spec}, {"train", cfg}};
    return sha256_hex(j.dump());
}

VggClassifierImpl::VggClassifierImpl(const ClassifierSpec& spec) : spec_(spec) {
    spec_.validate();
    constexpr std::array<int, 5> convs_per_block = {2, 2, 3, 3, 3};
    const auto widths = spec_.block_channels();
    backbone_ = torch::nn::Sequential();
    int64_t in = 3;
    for (size_t b = 0; b < widths.size(); ++b) {
        // The final max-pool is applied in forward() so the last ReLU output stays addressable.
        if (b > 0) backbone_->push_back(torch::nn::MaxPool2d(torch::nn::MaxPool2dOptions(2)));
        for (int c = 0; c < convs_per_block[b]; ++c) {
            backbone_->push_back(torch::nn::Conv2d(torch::nn::Conv2dOptions(in, widths[b], 3).padding(1)));
            if (spec_.batch_norm) backbone_->push_back(torch::nn::BatchNorm2d(widths[b]));
            backbone_->push_back(torch::nn::ReLU());
            in = widths[b];
        }
    }
    register_module("backbone", backbone_);
    const int64_t spatial = spec_.input_size / 32;
    fc1_ = register_module("fc1", torch::nn::Linear(in * spatial * spatial, spec_.fc1));
    fc2_ = register_module("fc2", torch::nn::Linear(spec_.fc1, spec_.fc2));
    out_ = register_module("out", torch::nn::Linear(spec_.fc2, kNumClasses));

    torch::NoGradGuard no_grad;
    for (auto& m : modules(false)) {
        if (auto* conv = m->as<torch::nn::Conv2d>()) {
            torch::nn::init::kaiming_normal_(conv->weight, 0.0, torch::kFanOut, torch::kReLU);
            conv->bias.zero_();
        } else if (auto* fc = m->as<torch::nn::Linear>()) {
            torch::nn::init::kaiming_uniform_(fc->weight, std::sqrt(5.0));
            fc->bias.zero_();
        }
    }
}

void VggClassifierImpl::check_input(const torch::Tensor& x) const {
    if (x.dim() != 4 || x.size(1) != 3 || x.size(2) != spec_.input_size || x.size(3) != spec_.input_size)
        throw InvalidInput("classifier expects N×3×" + std::to_string(spec_.input_size) + "×" +
                           std::to_string(spec_.input_size) + " input");
}

FeaturesAndLogits VggClassifierImpl::forward_with_features(const torch::Tensor& x) {
    check_input(x);
    auto features = backbone_->forward(x);
    auto h = torch::max_pool2d(features, 2).flatten(1);
    h = torch::relu(fc1_(h));
    h = torch::relu(fc2_(h));
    return {features, out_(h)};
}

torch::Tensor VggClassifierImpl::forward(const torch::Tensor& x) { return forward_with_features(x).logits; }

void save_backbone_weights(VggClassifier& net, const fs::path& path) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    torch::serialize::OutputArchive archive;
    for (const auto& p : net->backbone()->named_parameters()) archive.write(p.key(), p.value());
    for (const auto& b : net->backbone()->named_buffers()) archive.write(b.key(), b.value(), /*is_buffer=*/true);
    archive.save_to(path.string());
}

void load_backbone_weights(VggClassifier& net, const fs::path& path) {
    if (!fs::exists(path)) throw InvalidInput("pretrained weights file not found: " + path.string());
    torch::serialize::InputArchive archive;
    archive.load_from(path.string());
    std::ostringstream diff;
    std::vector<std::pair<torch::Tensor, torch::Tensor>> assignments;
    auto visit = [&](const std::string& key, torch::Tensor& dst, bool is_buffer) {
        torch::Tensor src;
        if (!archive.try_read(key, src, is_buffer)) {
            diff << "  missing " << key << " (expected " << dst.sizes() << ")\n";
        } else if (src.sizes() != dst.sizes()) {
            diff << "  " << key << ": shape " << src.sizes() << " in file, " << dst.sizes() << " in model\n";
        } else {
            assignments.emplace_back(dst, src);
        }
    };
    for (auto& p : net->backbone()->named_parameters()) visit(p.key(), p.value(), false);
    for (auto& b : net->backbone()->named_buffers()) visit(b.key(), b.value(), true);
    if (!diff.str().empty()) throw InvalidInput("incompatible pretrained weights " + path.string() + ":\n" + diff.str());
    torch::NoGradGuard no_grad;
    for (auto& [dst, src] : assignments) dst.copy_(src);
}

Pretreatment Pretreatment::identity() {
    return {"none", [](const std::vector<Image>& imgs) { return imgs; }};
}

std::vector<Image> Pretreatment::operator()(const std::vector<Image>& imgs) const {
    return apply ? apply(imgs) : imgs;
}

ClassifierModel::ClassifierModel(const ClassifierSpec& spec, uint64_t init_seed) {
    torch::manual_seed(init_seed);
    net_ = VggClassifier(spec);
    if (!spec.pretrained_weights.empty()) load_backbone_weights(net_, spec.pretrained_weights);
}

void ClassifierModel::save(const fs::path& path) const {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    nlohmann::json meta = {{"format_version", 1},
                           {"kind", "classifier"},
                           {"spec", net_->spec()},
                           {"pretreat", pretreat_tag},
                           {"epoch", epoch},
                           {"best_val_accuracy", best_val_accuracy},
                           {"config_hash", config_hash}};
    torch::serialize::OutputArchive archive, weights;
    archive.write("metadata", c10::IValue(meta.dump()));
    net_->save(weights);
    archive.write("weights", weights);
    const auto tmp = fs::path(path.string() + ".tmp");
    archive.save_to(tmp.string());
    fs::rename(tmp, path);
}

ClassifierModel ClassifierModel::load(const fs::path& path) {
    if (!fs::exists(path)) throw DataError("checkpoint not found: " + path.string());
    torch::serialize::InputArchive archive;
    archive.load_from(path.string());
    c10::IValue meta_value;
    if (!archive.try_read("metadata", meta_value) || !meta_value.isString())
        throw DataError("checkpoint has no metadata: " + path.string());
    auto meta = nlohmann::json::parse(meta_value.toStringRef());
    if (meta.value("kind", "") != "classifier") throw DataError("not a classifier checkpoint: " + path.string());
    auto spec = meta.at("spec").get<ClassifierSpec>();
    spec.pretrained_weights.clear();
    ClassifierModel model(spec);
    torch::serialize::InputArchive weights;
    archive.read("weights", weights);
    model.net_->load(weights);
    model.pretreat_tag = meta.value("pretreat", std::string("none"));
    model.epoch = meta.value("epoch", int64_t{0});
    model.best_val_accuracy = meta.value("best_val_accuracy", 0.0);
    model.config_hash = meta.value("config_hash", std::string{});
    return model;
}

torch::Tensor classification_loss(const torch::Tensor& logits, const torch::Tensor& labels) {
    return torch::nn::functional::cross_entropy(logits, labels);
}

namespace {

using StateCopy = std::vector<torch::Tensor>;

StateCopy snapshot(torch::nn::Module& m) {
    StateCopy s;
    for (auto& p : m.parameters()) s.push_back(p.detach().clone());
    for (auto& b : m.buffers()) s.push_back(b.detach().clone());
    return s;
}

void restore(torch::nn::Module& m, const StateCopy& s) {
    torch::NoGradGuard no_grad;
    size_t i = 0;
    for (auto& p : m.parameters()) p.copy_(s[i++]);
    for (auto& b : m.buffers()) b.copy_(s[i++]);
}

torch::Tensor labels_tensor(const std::vector<LabeledExample>& exs, const std::vector<size_t>& idx) {
    std::vector<int64_t> labels;
    labels.reserve(idx.size());
    for (auto i : idx) labels.push_back(to_index(exs[i].label));
    return torch::tensor(labels, torch::kInt64);
}

double accuracy_on(ClassifierModel& model, const std::vector<Image>& images, const std::vector<LabeledExample>& exs) {
    if (images.empty()) return 0.0;
    const auto preds = predict_labels(model, images);
    size_t hits = 0;
    for (size_t i = 0; i < preds.size(); ++i) hits += preds[i] == exs[i].label ? 1 : 0;
    return static_cast<double>(hits) / static_cast<double>(preds.size());
}

std::vector<Image> images_of(const std::vector<LabeledExample>& exs) {
    std::vector<Image> out;
    out.reserve(exs.size());
    for (const auto& e : exs) out.push_back(e.image);
    return out;
}

}  // namespace

ClassifierTrainResult train_classifier(const std::vector<LabeledExample>& train, const std::vector<LabeledExample>& val,
                                       const ClassifierSpec& spec, const TrainConfigCls& cfg,
                                       const std::optional<Pretreatment>& pretreat,
                                       const ClassifierTrainOptions& options) {
    cfg.validate();
    if (train.empty()) throw InvalidInput("no training examples");
    const auto treatment = pretreat.value_or(Pretreatment::identity());

    ClassifierTrainResult result{ClassifierModel(spec, derive_seed(cfg.seed, "init")), {}};
    auto& m = result.model;
    m.pretreat_tag = treatment.tag;
    m.config_hash = classifier_config_hash(spec, cfg);
    auto& net = m.network();

    const auto train_images = treatment(images_of(train));
    const auto val_images = treatment(images_of(val));

    torch::optim::SGD opt(net->parameters(), torch::optim::SGDOptions(cfg.learning_rate).momentum(cfg.momentum));

    if (options.metrics_csv) {
        if (options.metrics_csv->has_parent_path()) fs::create_directories(options.metrics_csv->parent_path());
        std::ofstream(*options.metrics_csv, std::ios::trunc) << "epoch,train_acc,val_acc,loss\n";
    }

    StateCopy best_state = snapshot(*net);
    double best_val = -1.0;
    int64_t best_epoch = 0;

    const size_t n = train.size();
    for (int64_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
        Rng rng(derive_seed(cfg.seed, static_cast<uint64_t>(epoch)));
        std::vector<size_t> order(n);
        std::iota(order.begin(), order.end(), size_t{0});
        std::shuffle(order.begin(), order.end(), rng);

        net->train();
        double loss_sum = 0.0;
        int64_t correct = 0;
        int64_t steps = 0;
        for (size_t start = 0; start < n; start += static_cast<size_t>(cfg.batch_size)) {
            const auto end = std::min(n, start + static_cast<size_t>(cfg.batch_size));
            std::vector<size_t> idx(order.begin() + static_cast<std::ptrdiff_t>(start),
                                    order.begin() + static_cast<std::ptrdiff_t>(end));
            // Single-example batches cannot be batch-normalized in train mode.
            if (idx.size() < 2 && spec.batch_norm) continue;
            std::vector<torch::Tensor> batch;
            batch.reserve(idx.size());
            for (auto i : idx) {
                if (cfg.augment) {
                    const auto draw = draw_augmentation(cfg.recipe, train_images[i].height(), train_images[i].width(), rng);
                    batch.push_back(input_tensor(apply_classifier_draw(train_images[i], draw), spec.input_size));
                } else {
                    batch.push_back(input_tensor(train_images[i], spec.input_size));
                }
            }
            const auto labels = labels_tensor(train, idx);
            opt.zero_grad();
            auto logits = net->forward(torch::stack(batch));
            auto loss = classification_loss(logits, labels);
            const double loss_value = loss.item<double>();
            if (!std::isfinite(loss_value))
                throw DivergenceError("classifier training diverged at epoch " + std::to_string(epoch) + ", step " +
                                      std::to_string(steps));
            loss.backward();
            opt.step();
            loss_sum += loss_value;
            correct += (logits.argmax(1) == labels).sum().item<int64_t>();
            ++steps;
        }

        ClassifierEpoch row;
        row.epoch = epoch;
        row.loss = steps > 0 ? loss_sum / static_cast<double>(steps) : 0.0;
        row.train_accuracy = static_cast<double>(correct) / static_cast<double>(n);
        row.val_accuracy = val.empty() ? row.train_accuracy : accuracy_on(m, val_images, val);
        result.history.push_back(row);
        if (row.val_accuracy > best_val) {
            best_val = row.val_accuracy;
            best_epoch = epoch;
            best_state = snapshot(*net);
        }
        if (options.metrics_csv) {
            std::ofstream csv(*options.metrics_csv, std::ios::app);
            csv.precision(10);
            csv << row.epoch << ',' << row.train_accuracy << ',' << row.val_accuracy << ',' << row.loss << '\n';
        }
        if (options.on_epoch) options.on_epoch(row);
    }

    restore(*net, best_state);
    m.epoch = best_epoch;
    m.best_val_accuracy = best_val;
    if (options.checkpoint) m.save(*options.checkpoint);
    return result;
}

torch::Tensor input_tensor(const Image& img, int64_t input_size) {
    const auto sized = img.height() == input_size && img.width() == input_size ? img : resize_image(img, input_size, input_size);
    auto chw = sized.to_chw();
    if (chw.size(0) == 1) chw = chw.expand({3, chw.size(1), chw.size(2)}).contiguous();
    return chw;
}

torch::Tensor classify(ClassifierModel& model, const std::vector<Image>& images, int64_t batch_size) {
    torch::NoGradGuard no_grad;
    auto& net = model.network();
    net->eval();
    std::vector<torch::Tensor> outs;
    for (size_t start = 0; start < images.size(); start += static_cast<size_t>(batch_size)) {
        const auto end = std::min(images.size(), start + static_cast<size_t>(batch_size));
        std::vector<torch::Tensor> chunk;
        for (size_t i = start; i < end; ++i) chunk.push_back(input_tensor(images[i], model.spec().input_size));
        outs.push_back(torch::softmax(net->forward(torch::stack(chunk)), 1));
    }
    return outs.empty() ? torch::empty({0, kNumClasses}) : torch::cat(outs);
}

std::vector<DiseaseLabel> predict_labels(ClassifierModel& model, const std::vector<Image>& images, int64_t batch_size) {
    auto probs = classify(model, images, batch_size);
    std::vector<DiseaseLabel> out;
    out.reserve(images.size());
    if (probs.size(0) == 0) return out;
    auto idx = probs.argmax(1);
    auto acc = idx.accessor<int64_t, 1>();
    for (int64_t i = 0; i < idx.size(0); ++i) out.push_back(label_from_index(static_cast<int>(acc[i])));
    return out;
}

Prediction predict(const Image& img, ClassifierModel& model, const std::optional<Pretreatment>& pretreat) {
    const auto treatment = pretreat.value_or(Pretreatment::identity());
    if (treatment.tag != model.pretreat_tag)
        throw InvalidInput("pretreatment '" + treatment.tag + "' does not match the '" + model.pretreat_tag +
                           "' pretreatment the classifier was trained with");
    auto probs = classify(model, treatment({img})).squeeze(0).to(torch::kFloat64);
    Prediction p;
    for (int c = 0; c < kNumClasses; ++c) p.probs[c] = probs[c].item<double>();
    p.label = label_from_index(static_cast<int>(probs.argmax().item<int64_t>()));
    return p;
}

}  // namespace aop
