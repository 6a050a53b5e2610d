#pragma once

#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "aop/augmentation.hpp"
#include "aop/image.hpp"
#include "aop/metrics.hpp"
#include "aop/networks.hpp"

namespace aop {

enum class AopVariant { MaeProb, Mae, Ssim };

enum class ContentLoss { Mae, Ssim };

struct VariantTraits {
    OutputMode output_mode;
    ContentLoss content_loss;
    // Targets are the mask itself (probability map) or the masked image.
    bool target_is_mask;
};

VariantTraits traits(AopVariant v);
std::string_view variant_name(AopVariant v);
AopVariant parse_variant(std::string_view name);  // "MAE_prob" | "MAE" | "SSIM"
inline constexpr std::array<AopVariant, 3> kAllVariants = {AopVariant::MaeProb, AopVariant::Mae, AopVariant::Ssim};

struct TrainConfigAOP {
    double learning_rate = 2e-4;
    double beta1 = 0.5;
    double beta2 = 0.999;
    int64_t batch_size = 16;
    int64_t epochs = 100;
    double content_weight = 100.0;
    uint64_t seed = 0;

    void validate() const;
};

void to_json(nlohmann::json& j, const TrainConfigAOP& c);
void from_json(const nlohmann::json& j, TrainConfigAOP& c);

// Geometry of the segmentation stage: sources are loaded at load_size and the generator
// runs on working_size crops (316 and 256 at full scale).
struct AopGeometry {
    int64_t load_size = 316;
    int64_t working_size = 256;
    double mask_threshold = 0.5;      // probability-map variant
    double rgb_mask_threshold = 0.175; // image variants: leaf where max channel exceeds this

    void validate() const;
};

void to_json(nlohmann::json& j, const AopGeometry& g);
void from_json(const nlohmann::json& j, AopGeometry& g);

inline constexpr int kCheckpointFormatVersion = 1;

// Generator + discriminator for one variant, plus the metadata stored with every checkpoint.
class AopModel {
public:
    AopModel(AopVariant variant, GeneratorSpec gen, DiscriminatorSpec disc, AopGeometry geometry,
             uint64_t init_seed = 0);

    AopVariant variant() const { return variant_; }
    const AopGeometry& geometry() const { return geometry_; }
    const GeneratorSpec& generator_spec() const { return generator_->spec(); }
    const DiscriminatorSpec& discriminator_spec() const { return discriminator_->spec(); }

    UNetGenerator& generator() { return generator_; }
    PatchDiscriminator& discriminator() { return discriminator_; }
    // Eval-mode generator forward on N×C×H×W, no gradients.
    torch::Tensor generate(const torch::Tensor& batch);

    int64_t epoch = 0;
    std::string config_hash;

    // Single-file container: format version, metadata JSON, weights and (optionally) optimizer state.
    void save(const std::filesystem::path& path, torch::optim::Optimizer* opt_g = nullptr,
              torch::optim::Optimizer* opt_d = nullptr) const;
    static AopModel load(const std::filesystem::path& path);
    // Restores weights/metadata into this instance (specs must agree) and optimizer state if present.
    void restore(const std::filesystem::path& path, torch::optim::Optimizer* opt_g = nullptr,
                 torch::optim::Optimizer* opt_d = nullptr);

    nlohmann::json metadata() const;

private:
    AopVariant variant_;
    AopGeometry geometry_;
    UNetGenerator generator_{nullptr};
    PatchDiscriminator discriminator_{nullptr};
};

struct AopEpochLoss {
    int64_t epoch = 0;
    double d_loss = 0.0;
    double g_adv = 0.0;
    double content_loss = 0.0;
};

struct AopTrainOptions {
    AugmentationRecipe recipe = AugmentationRecipe::aop_default();
    SSIMConfig ssim;
    std::optional<std::filesystem::path> loss_csv;    // epoch,d_loss,g_adv,content_loss
    std::optional<std::filesystem::path> checkpoint;  // rewritten after every epoch
    bool resume = false;                              // continue from `checkpoint` if it exists
    std::optional<std::filesystem::path> dump_dir;    // divergence diagnostics
    // Stops after this many epochs in this call (simulated interruption); 0 = run to cfg.epochs.
    int64_t stop_after_epochs = 0;
    bool freeze_discriminator = false;
    std::function<void(const AopEpochLoss&)> on_epoch;
};

// Alternating discriminator/generator Adam updates; generator objective g_adv + λ·content.
std::vector<AopEpochLoss> train_aop(AopModel& model, const std::vector<SegmentationPair>& train_pairs,
                                    const TrainConfigAOP& cfg, const AopTrainOptions& options = {});

// Content-loss target for a batch: mask (N×1×H×W) or image⊙mask (N×3×H×W).
torch::Tensor content_target(AopVariant v, const torch::Tensor& images, const torch::Tensor& masks);
torch::Tensor content_loss(AopVariant v, const torch::Tensor& pred, const torch::Tensor& target,
                           const SSIMConfig& ssim_cfg);

// Binary mask with 1 where prob >= t.
MaskImage threshold_mask(const MaskImage& prob, double t);
// Pixelwise product; background becomes exactly 0.
Image apply_mask(const Image& img, const MaskImage& mask);

// Resize to load_size, then a centered working_size crop.
Image to_working_resolution(const Image& img, const AopGeometry& g);
MaskImage to_working_resolution(const MaskImage& mask, const AopGeometry& g);

// Predicted leaf masks for working-resolution images.
std::vector<MaskImage> segment(AopModel& model, const std::vector<Image>& working_images, int64_t batch_size = 16);

// Background removal and brightness calibration, output resized to output_size.
Image pretreat(const Image& img, AopModel& model, int64_t output_size = 224);
std::vector<Image> pretreat_batch(const std::vector<Image>& imgs, AopModel& model, int64_t output_size = 224,
                                  int64_t batch_size = 16);
// Same geometry as pretreat() applied to a mask (for overlap scoring).
MaskImage pretreat_geometry(const MaskImage& mask, const AopGeometry& g, int64_t output_size);

// Pooled pixel precision/recall/F1 on test pairs brought to working resolution.
using MaskPredictor = std::function<std::vector<MaskImage>(const std::vector<SegmentationPair>&)>;
SegmentationScores evaluate_segmentation(const std::vector<SegmentationPair>& pairs, const AopGeometry& g,
                                         const MaskPredictor& predict);
SegmentationScores evaluate_segmentation(const std::vector<SegmentationPair>& pairs, AopModel& model);

}  // namespace aop
