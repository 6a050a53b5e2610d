#pragma once

#include <array>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "aop/augmentation.hpp"
#include "aop/image.hpp"

namespace aop {

// VGG-16-shaped backbone (13 convs in 5 blocks) with a 1024 → 32 → 8 head.
struct ClassifierSpec {
    int64_t input_size = 224;
    double width_multiplier = 1.0;  // scales the 64/128/256/512/512 block widths
    int64_t fc1 = 1024;
    int64_t fc2 = 32;
    bool batch_norm = true;
    std::string pretrained_weights;  // empty → random init

    std::array<int64_t, 5> block_channels() const;
    void validate() const;
};

void to_json(nlohmann::json& j, const ClassifierSpec& s);
void from_json(const nlohmann::json& j, ClassifierSpec& s);

struct TrainConfigCls {
    double learning_rate = 1e-3;
    double momentum = 0.9;
    int64_t batch_size = 32;
    int64_t epochs = 100;
    uint64_t seed = 0;
    bool augment = true;
    AugmentationRecipe recipe = AugmentationRecipe::classifier_default();

    void validate() const;
};

void to_json(nlohmann::json& j, const TrainConfigCls& c);
void from_json(const nlohmann::json& j, TrainConfigCls& c);

// Hash of everything that defines a classifier arm except its pretreatment.
std::string classifier_config_hash(const ClassifierSpec& spec, const TrainConfigCls& cfg);

struct FeaturesAndLogits {
    torch::Tensor features;  // last conv activation, N×C×h×w
    torch::Tensor logits;    // N×8
};

class VggClassifierImpl : public torch::nn::Module {
public:
    explicit VggClassifierImpl(const ClassifierSpec& spec);

    torch::Tensor forward(const torch::Tensor& x);
    FeaturesAndLogits forward_with_features(const torch::Tensor& x);

    const ClassifierSpec& spec() const { return spec_; }
    torch::nn::Sequential& backbone() { return backbone_; }

private:
    void check_input(const torch::Tensor& x) const;

    ClassifierSpec spec_;
    torch::nn::Sequential backbone_{nullptr};  // convs up to the last ReLU
    torch::nn::Linear fc1_{nullptr}, fc2_{nullptr}, out_{nullptr};
};
TORCH_MODULE(VggClassifier);

// Writes / reads the conv backbone alone (the pretrained-weights file format).
void save_backbone_weights(VggClassifier& net, const std::filesystem::path& path);
// Throws InvalidInput listing every missing key or shape difference.
void load_backbone_weights(VggClassifier& net, const std::filesystem::path& path);

// Tag + batch function. The tag is stored in the classifier checkpoint.
struct Pretreatment {
    std::string tag = "none";
    std::function<std::vector<Image>(const std::vector<Image>&)> apply;

    static Pretreatment identity();
    std::vector<Image> operator()(const std::vector<Image>& imgs) const;
};

class ClassifierModel {
public:
    explicit ClassifierModel(const ClassifierSpec& spec, uint64_t init_seed = 0);

    VggClassifier& network() { return net_; }
    const ClassifierSpec& spec() const { return net_->spec(); }

    std::string pretreat_tag = "none";
    int64_t epoch = 0;
    double best_val_accuracy = 0.0;
    std::string config_hash;

    void save(const std::filesystem::path& path) const;
    static ClassifierModel load(const std::filesystem::path& path);

private:
    VggClassifier net_{nullptr};
};

struct ClassifierEpoch {
    int64_t epoch = 0;
    double train_accuracy = 0.0;  // running accuracy over the epoch's minibatches
    double val_accuracy = 0.0;
    double loss = 0.0;
};

struct ClassifierTrainOptions {
    std::optional<std::filesystem::path> metrics_csv;  // epoch,train_acc,val_acc,loss
    std::optional<std::filesystem::path> checkpoint;   // best-validation checkpoint
    std::function<void(const ClassifierEpoch&)> on_epoch;
};

struct ClassifierTrainResult {
    ClassifierModel model;
    std::vector<ClassifierEpoch> history;
};

// Momentum SGD on cross-entropy with a constant learning rate; keeps the best-validation weights.
// The pretreatment is applied once to every image before augmentation.
ClassifierTrainResult train_classifier(const std::vector<LabeledExample>& train, const std::vector<LabeledExample>& val,
                                       const ClassifierSpec& spec, const TrainConfigCls& cfg,
                                       const std::optional<Pretreatment>& pretreat = std::nullopt,
                                       const ClassifierTrainOptions& options = {});

// 3×S×S network input for one image: grey expanded to RGB, bilinear resize to input_size.
torch::Tensor input_tensor(const Image& img, int64_t input_size);

// Softmax probabilities for already-pretreated images, eval mode, batched.
torch::Tensor classify(ClassifierModel& model, const std::vector<Image>& images, int64_t batch_size = 64);
std::vector<DiseaseLabel> predict_labels(ClassifierModel& model, const std::vector<Image>& images,
                                         int64_t batch_size = 64);

struct Prediction {
    DiseaseLabel label;
    std::array<double, kNumClasses> probs{};
};

// Applies the pretreatment (which must match the one the model was trained with) and classifies.
Prediction predict(const Image& img, ClassifierModel& model, const std::optional<Pretreatment>& pretreat = std::nullopt);

// Mean cross-entropy of logits (N×8) against labels.
torch::Tensor classification_loss(const torch::Tensor& logits, const torch::Tensor& labels);

}  // namespace aop
