#pragma once

#include <torch/torch.h>

#include "aop/labels.hpp"

namespace aop {

// H×W×C float32 pixels in [0,1], C ∈ {1,3}. The tensor is owned and contiguous.
class Image {
public:
    Image() = default;
    // Validates shape, finiteness and range.
    explicit Image(torch::Tensor pixels);

    // For tensors produced by range-preserving ops; only the shape is checked.
    static Image trusted(torch::Tensor pixels);

    // C×H×W view (float32) and the inverse.
    static Image from_chw(const torch::Tensor& chw);
    torch::Tensor to_chw() const;

    const torch::Tensor& tensor() const { return pixels_; }
    int64_t height() const { return pixels_.size(0); }
    int64_t width() const { return pixels_.size(1); }
    int64_t channels() const { return pixels_.size(2); }
    bool empty() const { return !pixels_.defined(); }

    bool same_pixels(const Image& other) const;

private:
    struct TrustedTag {};
    Image(torch::Tensor pixels, TrustedTag);

    torch::Tensor pixels_;
};

// H×W map in [0,1]. Binary masks hold only exact 0 and 1.
class MaskImage {
public:
    MaskImage() = default;
    MaskImage(torch::Tensor values, bool is_binary);

    static MaskImage ones(int64_t h, int64_t w);
    static MaskImage zeros(int64_t h, int64_t w);

    const torch::Tensor& tensor() const { return values_; }
    bool is_binary() const { return binary_; }
    int64_t height() const { return values_.size(0); }
    int64_t width() const { return values_.size(1); }
    bool empty() const { return !values_.defined(); }

private:
    torch::Tensor values_;
    bool binary_ = false;
};

struct SegmentationPair {
    Image image;
    MaskImage mask;
    std::string name;

    SegmentationPair() = default;
    SegmentationPair(Image img, MaskImage m, std::string n = {});
};

struct LabeledExample {
    LabeledExample(Image img, DiseaseLabel l, Split s, std::string p = {})
        : image(std::move(img)), label(l), split_(s), path(std::move(p)) {}

    Image image;
    DiseaseLabel label;
    Split split() const { return split_; }
    std::string path;

private:
    Split split_;
};

}  // namespace aop
