#pragma once

#include <optional>
#include <random>
#include <vector>

#include <json.hpp>

#include "aop/image.hpp"

namespace aop {

using Rng = std::mt19937_64;

struct AugmentationRecipe {
    double rotation_step_deg = 90.0;
    bool mirror = true;
    std::optional<int64_t> crop_size;
    std::vector<double> gamma_choices;

    // Segmentation-network stage: 90° steps, mirroring, 256 crops, γ ∈ {0.8,1.0,1.5,2.0,2.2}.
    static AugmentationRecipe aop_default();
    // Classifier stage: 10° steps, mirroring, no crop, γ ∈ {0.5,1.0,1.5}.
    static AugmentationRecipe classifier_default();

    void validate() const;
    // Angles {0, step, 2·step, ...} below 360.
    std::vector<double> angles() const;
};

void to_json(nlohmann::json& j, const AugmentationRecipe& r);
void from_json(const nlohmann::json& j, AugmentationRecipe& r);

// out = in^γ, elementwise. γ = 1 returns an exact copy.
Image gamma_correct(const Image& img, double gamma);
torch::Tensor gamma_correct(const torch::Tensor& pixels, double gamma);

// Counter-clockwise rotation about the image center. Multiples of 90° are exact index
// permutations; other angles resample bilinearly with zero padding on the same canvas.
Image rotate(const Image& img, double angle_deg);
MaskImage rotate(const MaskImage& mask, double angle_deg);

// Horizontal flip.
Image mirror(const Image& img);
MaskImage mirror(const MaskImage& mask);

struct CropOffset {
    int64_t top = 0;
    int64_t left = 0;
};

CropOffset draw_crop_offset(int64_t h, int64_t w, int64_t size, Rng& rng);
Image crop(const Image& img, CropOffset at, int64_t size);
MaskImage crop(const MaskImage& mask, CropOffset at, int64_t size);
Image random_crop(const Image& img, int64_t size, Rng& rng);

// One draw of the geometric/photometric parameters.
struct AugmentationDraw {
    double angle_deg = 0.0;
    bool mirrored = false;
    CropOffset offset;
    double gamma = 1.0;
};

AugmentationDraw draw_augmentation(const AugmentationRecipe& recipe, int64_t h, int64_t w, Rng& rng);

struct AopSample {
    Image input;    // geometric transforms + gamma
    Image image;    // geometric transforms only (original brightness)
    MaskImage mask; // geometric transforms only
    AugmentationDraw draw;
};

// Same geometry for image and mask; gamma on the generator input only.
AopSample augment_for_aop(const SegmentationPair& pair, const AugmentationRecipe& recipe, Rng& rng);
AopSample apply_aop_draw(const SegmentationPair& pair, const AugmentationDraw& draw, std::optional<int64_t> crop_size);

Image augment_for_classifier(const LabeledExample& ex, const AugmentationRecipe& recipe, Rng& rng);
Image apply_classifier_draw(const Image& img, const AugmentationDraw& draw);

}  // namespace aop
