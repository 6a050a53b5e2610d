#include "aop/image.hpp"

#include "aop/errors.hpp"

namespace aop {

namespace {

void check_shape(const torch::Tensor& t) {
    if (!t.defined() || t.dim() != 3) throw InvalidInput("image tensor must be H×W×C");
    if (t.size(0) < 1 || t.size(1) < 1) throw InvalidInput("image must be at least 1×1");
    if (t.size(2) != 1 && t.size(2) != 3) throw InvalidInput("image must have 1 or 3 channels");
}

}  // namespace

Image::Image(torch::Tensor pixels)
    : pixels_(pixels.to(torch::kFloat32).contiguous()) {
    check_shape(pixels_);
    if (!torch::isfinite(pixels_).all().item<bool>()) throw InvalidInput("image has non-finite pixels");
    if (pixels_.min().item<float>() < 0.0f || pixels_.max().item<float>() > 1.0f)
        throw InvalidInput("image pixels outside [0,1]");
}

Image::Image(torch::Tensor pixels, TrustedTag) : pixels_(pixels.to(torch::kFloat32).contiguous()) {
    check_shape(pixels_);
}

Image Image::trusted(torch::Tensor pixels) { return Image(std::move(pixels), TrustedTag{}); }

Image Image::from_chw(const torch::Tensor& chw) {
    if (chw.dim() != 3) throw InvalidInput("expected C×H×W tensor");
    return Image(chw.detach().permute({1, 2, 0}).clamp(0.0, 1.0), TrustedTag{});
}

torch::Tensor Image::to_chw() const { return pixels_.permute({2, 0, 1}).contiguous(); }

bool Image::same_pixels(const Image& other) const {
    return pixels_.sizes() == other.pixels_.sizes() && torch::equal(pixels_, other.pixels_);
}

MaskImage::MaskImage(torch::Tensor values, bool is_binary)
    : values_(values.to(torch::kFloat32).contiguous()), binary_(is_binary) {
    if (values_.dim() != 2) throw InvalidInput("mask tensor must be H×W");
    if (values_.size(0) < 1 || values_.size(1) < 1) throw InvalidInput("mask must be at least 1×1");
    if (values_.min().item<float>() < 0.0f || values_.max().item<float>() > 1.0f ||
        !torch::isfinite(values_).all().item<bool>())
        throw InvalidInput("mask values outside [0,1]");
    if (binary_ && !((values_ == 0) | (values_ == 1)).all().item<bool>())
        throw InvalidInput("binary mask holds values other than 0 and 1");
}

MaskImage MaskImage::ones(int64_t h, int64_t w) { return MaskImage(torch::ones({h, w}), true); }

MaskImage MaskImage::zeros(int64_t h, int64_t w) { return MaskImage(torch::zeros({h, w}), true); }

SegmentationPair::SegmentationPair(Image img, MaskImage m, std::string n)
    : image(std::move(img)), mask(std::move(m)), name(std::move(n)) {
    if (image.height() != mask.height() || image.width() != mask.width())
        throw InvalidInput("image and mask dimensions differ");
}

}  // namespace aop
