#pragma once

#include <array>
#include <filesystem>
#include <string>
#include <vector>

#include "aop/image.hpp"

namespace aop {

inline constexpr int64_t kSegmentationSize = 316;
inline constexpr int64_t kClassificationSize = 224;

struct SplitSpec {
    double seg_train_fraction = 0.8;
    uint64_t rng_seed = 0;
};

// Square window of side min(H,W); odd margins drop the extra row/column at the bottom/right.
Image center_crop_square(const Image& img);
MaskImage center_crop_square(const MaskImage& mask);

// Bilinear, half-pixel centers (align_corners = false).
Image resize_image(const Image& img, int64_t target_h, int64_t target_w);
// Nearest neighbour, half-pixel centers; keeps binary masks binary.
MaskImage resize_mask(const MaskImage& mask, int64_t target_h, int64_t target_w);

// 8-bit file → [0,1] by value/255. channels = 3 gives RGB order.
Image read_image(const std::filesystem::path& path, int channels = 3);
// Reads a single-channel mask, binarizing with a 1e-3 tolerance around {0,1}.
MaskImage read_mask(const std::filesystem::path& path);
void write_image(const std::filesystem::path& path, const Image& img);
void write_mask(const std::filesystem::path& path, const MaskImage& mask);

bool has_image_extension(const std::filesystem::path& path);

// Partition indices [0, n) into (train, test) deterministically for the seed.
std::pair<std::vector<size_t>, std::vector<size_t>> split_indices(size_t n, const SplitSpec& spec);

struct SegmentationDataset {
    std::vector<SegmentationPair> train;
    std::vector<SegmentationPair> test;
};

// Layout: root/images/<name>.<ext> with root/masks/<name>.png.
SegmentationDataset load_segmentation_dataset(const std::filesystem::path& root, const SplitSpec& spec,
                                              int64_t size = kSegmentationSize);

struct IngestionReport {
    std::array<std::array<int64_t, kNumClasses>, 3> counts{};  // [split][class]
    std::vector<std::string> skipped;                          // wrong extension
    std::vector<std::string> warnings;
};

struct ClassificationDataset {
    std::vector<LabeledExample> examples;
    IngestionReport report;

    std::vector<LabeledExample> of_split(Split s) const;
};

// Layout: root/<split>/<ClassName>/<file>. Missing split directories are allowed.
ClassificationDataset load_classification_dataset(const std::filesystem::path& root,
                                                  int64_t size = kClassificationSize);

}  // namespace aop
