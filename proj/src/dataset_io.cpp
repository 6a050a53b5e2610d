#include "aop/dataset_io.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>
#include <random>

#include "aop/errors.hpp"

namespace fs = std::filesystem;

namespace aop {

namespace {

struct CropWindow {
    int64_t top, left, side;
};

CropWindow center_window(int64_t h, int64_t w) {
    const int64_t side = std::min(h, w);
    return {(h - side) / 2, (w - side) / 2, side};
}

std::vector<fs::path> sorted_files(const fs::path& dir) {
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(dir)) {
        if (entry.is_regular_file()) files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end());
    return files;
}

std::vector<fs::path> sorted_dirs(const fs::path& dir) {
    std::vector<fs::path> dirs;
    for (const auto& entry : fs::directory_iterator(dir)) {
        if (entry.is_directory()) dirs.push_back(entry.path());
    }
    std::sort(dirs.begin(), dirs.end());
    return dirs;
}

torch::Tensor mat_to_tensor(const cv::Mat& mat) {
    cv::Mat contiguous = mat.isContinuous() ? mat : mat.clone();
    auto t = torch::from_blob(contiguous.data, {contiguous.rows, contiguous.cols, contiguous.channels()},
                              torch::kUInt8)
                 .clone();
    return t.to(torch::kFloat32) / 255.0f;
}

cv::Mat tensor_to_mat(const torch::Tensor& hwc) {
    auto bytes = (hwc * 255.0f).round().clamp(0, 255).to(torch::kUInt8).contiguous();
    const int h = static_cast<int>(bytes.size(0));
    const int w = static_cast<int>(bytes.size(1));
    const int c = static_cast<int>(bytes.size(2));
    cv::Mat mat(h, w, CV_8UC(c));
    std::memcpy(mat.data, bytes.data_ptr<uint8_t>(), static_cast<size_t>(h) * w * c);
    return mat;
}

}  // namespace

Image center_crop_square(const Image& img) {
    const auto win = center_window(img.height(), img.width());
    return Image::trusted(
        img.tensor().narrow(0, win.top, win.side).narrow(1, win.left, win.side).clone());
}

MaskImage center_crop_square(const MaskImage& mask) {
    const auto win = center_window(mask.height(), mask.width());
    return MaskImage(mask.tensor().narrow(0, win.top, win.side).narrow(1, win.left, win.side).clone(),
                     mask.is_binary());
}

Image resize_image(const Image& img, int64_t target_h, int64_t target_w) {
    if (target_h < 1 || target_w < 1) throw InvalidInput("resize target dimensions must be >= 1");
    if (target_h == img.height() && target_w == img.width()) return Image::trusted(img.tensor().clone());
    namespace F = torch::nn::functional;
    auto out = F::interpolate(img.to_chw().unsqueeze(0), F::InterpolateFuncOptions()
                                                             .size(std::vector<int64_t>{target_h, target_w})
                                                             .mode(torch::kBilinear)
                                                             .align_corners(false));
    return Image::from_chw(out.squeeze(0));
}

MaskImage resize_mask(const MaskImage& mask, int64_t target_h, int64_t target_w) {
    if (target_h < 1 || target_w < 1) throw InvalidInput("resize target dimensions must be >= 1");
    if (target_h == mask.height() && target_w == mask.width()) return MaskImage(mask.tensor().clone(), mask.is_binary());
    // ATen call directly: the functional wrapper warns about align_corners for nearest modes.
    auto out = torch::_upsample_nearest_exact2d(mask.tensor().unsqueeze(0).unsqueeze(0),
                                               at::IntArrayRef{target_h, target_w}, std::optional<at::ArrayRef<double>>{});
    return MaskImage(out.squeeze(0).squeeze(0), mask.is_binary());
}

bool has_image_extension(const fs::path& path) {
    auto ext = path.extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
    return ext == ".png" || ext == ".jpg" || ext == ".jpeg";
}

Image read_image(const fs::path& path, int channels) {
    if (channels != 1 && channels != 3) throw InvalidInput("channels must be 1 or 3");
    cv::Mat mat = cv::imread(path.string(), channels == 3 ? cv::IMREAD_COLOR : cv::IMREAD_GRAYSCALE);
    if (mat.empty()) throw DataError("cannot decode image: " + path.string());
    if (channels == 3) cv::cvtColor(mat, mat, cv::COLOR_BGR2RGB);
    return Image::trusted(mat_to_tensor(mat));
}

MaskImage read_mask(const fs::path& path) {
    cv::Mat mat = cv::imread(path.string(), cv::IMREAD_GRAYSCALE);
    if (mat.empty()) throw DataError("cannot decode mask: " + path.string());
    auto values = mat_to_tensor(mat).squeeze(2);
    constexpr float tol = 1e-3f;
    auto is_zero = values.abs() <= tol;
    auto is_one = (values - 1.0f).abs() <= tol;
    if (!(is_zero | is_one).all().item<bool>())
        throw DataError("mask is not binary (0/255): " + path.string());
    return MaskImage(is_one.to(torch::kFloat32), true);
}

void write_image(const fs::path& path, const Image& img) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    cv::Mat mat = tensor_to_mat(img.tensor());
    if (mat.channels() == 3) cv::cvtColor(mat, mat, cv::COLOR_RGB2BGR);
    if (!cv::imwrite(path.string(), mat)) throw DataError("cannot write image: " + path.string());
}

void write_mask(const fs::path& path, const MaskImage& mask) {
    write_image(path, Image::trusted(mask.tensor().unsqueeze(2)));
}

std::pair<std::vector<size_t>, std::vector<size_t>> split_indices(size_t n, const SplitSpec& spec) {
    if (!(spec.seg_train_fraction > 0.0 && spec.seg_train_fraction < 1.0))
        throw InvalidInput("seg_train_fraction must lie in (0,1)");
    std::vector<size_t> order(n);
    for (size_t i = 0; i < n; ++i) order[i] = i;
    std::mt19937_64 rng(spec.rng_seed);
    std::shuffle(order.begin(), order.end(), rng);
    const auto n_train = static_cast<size_t>(std::llround(spec.seg_train_fraction * static_cast<double>(n)));
    std::vector<size_t> train(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_train));
    std::vector<size_t> test(order.begin() + static_cast<std::ptrdiff_t>(n_train), order.end());
    std::sort(train.begin(), train.end());
    std::sort(test.begin(), test.end());
    return {std::move(train), std::move(test)};
}

SegmentationDataset load_segmentation_dataset(const fs::path& root, const SplitSpec& spec, int64_t size) {
    const auto image_dir = root / "images";
    const auto mask_dir = root / "masks";
    if (!fs::is_directory(image_dir)) throw DataError("missing directory: " + image_dir.string());
    if (!fs::is_directory(mask_dir)) throw DataError("missing directory: " + mask_dir.string());

    std::vector<SegmentationPair> all;
    for (const auto& file : sorted_files(image_dir)) {
        if (!has_image_extension(file)) continue;
        const auto mask_path = mask_dir / (file.stem().string() + ".png");
        if (!fs::exists(mask_path)) throw DataError("missing mask for image " + file.string());
        auto image = read_image(file);
        auto mask = read_mask(mask_path);
        if (image.height() != mask.height() || image.width() != mask.width())
            throw DataError("image/mask size mismatch for " + file.string());
        image = resize_image(center_crop_square(image), size, size);
        mask = resize_mask(center_crop_square(mask), size, size);
        all.emplace_back(std::move(image), std::move(mask), file.stem().string());
    }

    auto [train_idx, test_idx] = split_indices(all.size(), spec);
    SegmentationDataset ds;
    for (auto i : train_idx) ds.train.push_back(all[i]);
    for (auto i : test_idx) ds.test.push_back(all[i]);
    return ds;
}

std::vector<LabeledExample> ClassificationDataset::of_split(Split s) const {
    std::vector<LabeledExample> out;
    for (const auto& ex : examples) {
        if (ex.split() == s) out.push_back(ex);
    }
    return out;
}

ClassificationDataset load_classification_dataset(const fs::path& root, int64_t size) {
    if (!fs::is_directory(root)) throw DataError("missing directory: " + root.string());
    ClassificationDataset ds;
    for (const auto& split_dir : sorted_dirs(root)) {
        const auto split = parse_split(split_dir.filename().string());
        if (!split) throw DataError("unknown split directory: " + split_dir.string());
        for (const auto& class_dir : sorted_dirs(split_dir)) {
            const auto label = parse_label(class_dir.filename().string());
            if (!label) throw DataError("unknown class directory: " + class_dir.string());
            for (const auto& file : sorted_files(class_dir)) {
                if (!has_image_extension(file)) {
                    ds.report.skipped.push_back(file.string());
                    continue;
                }
                auto image = resize_image(read_image(file), size, size);
                ds.examples.emplace_back(std::move(image), *label, *split, file.string());
                ++ds.report.counts[static_cast<int>(*split)][to_index(*label)];
            }
        }
    }
    const auto& train_counts = ds.report.counts[static_cast<int>(Split::Training)];
    for (int c = 0; c < kNumClasses; ++c) {
        if (train_counts[c] == 0)
            ds.report.warnings.push_back("empty training class: " + std::string(kLabelNames[c]));
    }
    return ds;
}

}  // namespace aop
