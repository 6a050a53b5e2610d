#include "aop/augmentation.hpp"

#include <cmath>
#include <numbers>

#include "aop/errors.hpp"

namespace aop {

namespace {

// Returns k in {0,1,2,3} when the angle is a multiple of 90°.
std::optional<int64_t> quarter_turns(double angle_deg) {
    const double turns = angle_deg / 90.0;
    const double rounded = std::round(turns);
    if (std::abs(turns - rounded) > 1e-9) return std::nullopt;
    return ((static_cast<int64_t>(rounded) % 4) + 4) % 4;
}

// hw(c) tensor → rotated copy; mode is "bilinear" or "nearest".
torch::Tensor rotate_hw(const torch::Tensor& hwc, double angle_deg, bool nearest) {
    if (auto k = quarter_turns(angle_deg)) {
        if (*k == 0) return hwc.clone();
        return torch::rot90(hwc, *k, {0, 1}).contiguous();
    }
    const double rad = angle_deg * std::numbers::pi / 180.0;
    const double c = std::cos(rad);
    const double s = std::sin(rad);
    const double h = static_cast<double>(hwc.size(0));
    const double w = static_cast<double>(hwc.size(1));
    // Normalized output coords → normalized input coords, aspect corrected.
    auto theta = torch::tensor({c, -s * h / w, 0.0, s * w / h, c, 0.0}, torch::kFloat32).view({1, 2, 3});
    auto chw = hwc.permute({2, 0, 1}).unsqueeze(0);
    namespace F = torch::nn::functional;
    auto grid = F::affine_grid(theta, chw.sizes(), false);
    auto opts = F::GridSampleFuncOptions().padding_mode(torch::kZeros).align_corners(false);
    if (nearest) opts.mode(torch::kNearest);
    else opts.mode(torch::kBilinear);
    auto out = F::grid_sample(chw, grid, opts);
    return out.squeeze(0).permute({1, 2, 0}).clamp(0.0, 1.0).contiguous();
}

}  // namespace

AugmentationRecipe AugmentationRecipe::aop_default() {
    return {90.0, true, int64_t{256}, {0.8, 1.0, 1.5, 2.0, 2.2}};
}

AugmentationRecipe AugmentationRecipe::classifier_default() {
    return {10.0, true, std::nullopt, {0.5, 1.0, 1.5}};
}

void AugmentationRecipe::validate() const {
    if (!(rotation_step_deg >= 0.0 && rotation_step_deg <= 360.0))
        throw InvalidInput("rotation step must lie in [0,360]");
    if (rotation_step_deg > 0.0) {
        const double n = 360.0 / rotation_step_deg;
        if (std::abs(n - std::round(n)) > 1e-9) throw InvalidInput("rotation step must divide 360");
    }
    if (crop_size && *crop_size < 1) throw InvalidInput("crop size must be positive");
    if (gamma_choices.empty()) throw InvalidInput("gamma choices must be nonempty");
    for (double g : gamma_choices) {
        if (!(g > 0.0)) throw InvalidInput("gamma choices must be > 0");
    }
}

std::vector<double> AugmentationRecipe::angles() const {
    if (rotation_step_deg <= 0.0 || rotation_step_deg >= 360.0) return {0.0};
    const auto n = static_cast<int>(std::lround(360.0 / rotation_step_deg));
    std::vector<double> out;
    out.reserve(n);
    for (int i = 0; i < n; ++i) out.push_back(i * rotation_step_deg);
    return out;
}

void to_json(nlohmann::json& j, const AugmentationRecipe& r) {
    j = {{"rotation_step_deg", r.rotation_step_deg},
         {"mirror", r.mirror},
         {"crop_size", r.crop_size ? nlohmann::json(*r.crop_size) : nlohmann::json(nullptr)},
         {"gamma_choices", r.gamma_choices}};
}

void from_json(const nlohmann::json& j, AugmentationRecipe& r) {
    r.rotation_step_deg = j.value("rotation_step_deg", r.rotation_step_deg);
    r.mirror = j.value("mirror", r.mirror);
    if (j.contains("crop_size"))
        r.crop_size = j.at("crop_size").is_null() ? std::nullopt : std::optional<int64_t>(j.at("crop_size").get<int64_t>());
    if (j.contains("gamma_choices")) r.gamma_choices = j.at("gamma_choices").get<std::vector<double>>();
}

torch::Tensor gamma_correct(const torch::Tensor& pixels, double gamma) {
    if (!(gamma > 0.0)) throw InvalidInput("gamma must be > 0");
    if (gamma == 1.0) return pixels.clone();
    return pixels.pow(gamma).clamp(0.0, 1.0);
}

Image gamma_correct(const Image& img, double gamma) { return Image::trusted(gamma_correct(img.tensor(), gamma)); }

Image rotate(const Image& img, double angle_deg) {
    return Image::trusted(rotate_hw(img.tensor(), angle_deg, false));
}

MaskImage rotate(const MaskImage& mask, double angle_deg) {
    auto out = rotate_hw(mask.tensor().unsqueeze(2), angle_deg, mask.is_binary()).squeeze(2);
    return MaskImage(out, mask.is_binary());
}

Image mirror(const Image& img) { return Image::trusted(img.tensor().flip({1})); }

MaskImage mirror(const MaskImage& mask) { return MaskImage(mask.tensor().flip({1}), mask.is_binary()); }

CropOffset draw_crop_offset(int64_t h, int64_t w, int64_t size, Rng& rng) {
    if (size < 1 || size > std::min(h, w)) throw InvalidInput("crop size exceeds image dimensions");
    std::uniform_int_distribution<int64_t> top(0, h - size);
    std::uniform_int_distribution<int64_t> left(0, w - size);
    CropOffset at;
    at.top = top(rng);
    at.left = left(rng);
    return at;
}

Image crop(const Image& img, CropOffset at, int64_t size) {
    if (at.top < 0 || at.left < 0 || at.top + size > img.height() || at.left + size > img.width())
        throw InvalidInput("crop window outside image");
    return Image::trusted(img.tensor().narrow(0, at.top, size).narrow(1, at.left, size).clone());
}

MaskImage crop(const MaskImage& mask, CropOffset at, int64_t size) {
    if (at.top < 0 || at.left < 0 || at.top + size > mask.height() || at.left + size > mask.width())
        throw InvalidInput("crop window outside mask");
    return MaskImage(mask.tensor().narrow(0, at.top, size).narrow(1, at.left, size).clone(), mask.is_binary());
}

Image random_crop(const Image& img, int64_t size, Rng& rng) {
    return crop(img, draw_crop_offset(img.height(), img.width(), size, rng), size);
}

AugmentationDraw draw_augmentation(const AugmentationRecipe& recipe, int64_t h, int64_t w, Rng& rng) {
    recipe.validate();
    AugmentationDraw draw;
    const auto angles = recipe.angles();
    std::uniform_int_distribution<size_t> pick_angle(0, angles.size() - 1);
    draw.angle_deg = angles[pick_angle(rng)];
    if (recipe.mirror) {
        std::bernoulli_distribution coin(0.5);
        draw.mirrored = coin(rng);
    }
    if (recipe.crop_size) {
        // Quarter turns swap the axes of non-square inputs.
        const bool swapped = quarter_turns(draw.angle_deg).value_or(0) % 2 == 1;
        draw.offset = draw_crop_offset(swapped ? w : h, swapped ? h : w, *recipe.crop_size, rng);
    }
    std::uniform_int_distribution<size_t> pick_gamma(0, recipe.gamma_choices.size() - 1);
    draw.gamma = recipe.gamma_choices[pick_gamma(rng)];
    return draw;
}

AopSample apply_aop_draw(const SegmentationPair& pair, const AugmentationDraw& draw,
                         std::optional<int64_t> crop_size) {
    Image image = rotate(pair.image, draw.angle_deg);
    MaskImage mask = rotate(pair.mask, draw.angle_deg);
    if (draw.mirrored) {
        image = mirror(image);
        mask = mirror(mask);
    }
    if (crop_size) {
        image = crop(image, draw.offset, *crop_size);
        mask = crop(mask, draw.offset, *crop_size);
    }
    Image input = gamma_correct(image, draw.gamma);
    return {std::move(input), std::move(image), std::move(mask), draw};
}

AopSample augment_for_aop(const SegmentationPair& pair, const AugmentationRecipe& recipe, Rng& rng) {
    const auto draw = draw_augmentation(recipe, pair.image.height(), pair.image.width(), rng);
    return apply_aop_draw(pair, draw, recipe.crop_size);
}

Image apply_classifier_draw(const Image& img, const AugmentationDraw& draw) {
    Image out = rotate(img, draw.angle_deg);
    if (draw.mirrored) out = mirror(out);
    return gamma_correct(out, draw.gamma);
}

Image augment_for_classifier(const LabeledExample& ex, const AugmentationRecipe& recipe, Rng& rng) {
    const auto draw = draw_augmentation(recipe, ex.image.height(), ex.image.width(), rng);
    Image out = apply_classifier_draw(ex.image, draw);
    if (recipe.crop_size) out = crop(out, draw.offset, *recipe.crop_size);
    return out;
}

}  // namespace aop
