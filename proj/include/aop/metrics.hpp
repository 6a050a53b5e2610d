#pragma once

#include <array>
#include <vector>

#include "aop/image.hpp"

namespace aop {

// Gaussian-windowed SSIM parameters; defaults are the usual 11×11, σ = 1.5.
struct SSIMConfig {
    int64_t window_size = 11;
    double window_sigma = 1.5;
    double k1 = 0.01;
    double k2 = 0.03;
    double dynamic_range = 1.0;

    void validate() const;
    double c1() const { return (k1 * dynamic_range) * (k1 * dynamic_range); }
    double c2() const { return (k2 * dynamic_range) * (k2 * dynamic_range); }
};

// Normalized 2-D Gaussian window, window_size × window_size, of the given dtype.
torch::Tensor gaussian_window(const SSIMConfig& cfg, torch::ScalarType dtype = torch::kFloat32);

// All tensor overloads take N×C×H×W (or C×H×W) and stay differentiable.
torch::Tensor mae_loss(const torch::Tensor& pred, const torch::Tensor& target);
double mae_loss(const Image& pred, const Image& target);

// Mean SSIM over valid (unpadded) windows, channels and batch.
torch::Tensor ssim(const torch::Tensor& x, const torch::Tensor& y, const SSIMConfig& cfg = {});
double ssim(const Image& x, const Image& y, const SSIMConfig& cfg = {});

torch::Tensor ssim_loss(const torch::Tensor& pred, const torch::Tensor& target, const SSIMConfig& cfg = {});
double ssim_loss(const Image& pred, const Image& target, const SSIMConfig& cfg = {});

inline constexpr double kProbabilityEps = 1e-7;

struct AdversarialLosses {
    torch::Tensor g_adv;   // −mean log D(fake)
    torch::Tensor d_loss;  // −mean log D(real) − mean log(1 − D(fake))
};

// Inputs are discriminator probabilities; clamped to [ε, 1−ε] before the logs.
AdversarialLosses adversarial_losses(const torch::Tensor& d_real, const torch::Tensor& d_fake);

// Pixel counts for precision/recall; add() pools several masks.
struct PixelCounts {
    int64_t tp = 0;
    int64_t fp = 0;
    int64_t fn = 0;
    int64_t tn = 0;

    void add(const MaskImage& pred, const MaskImage& truth);
};

struct SegmentationScores {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
};

// Empty denominators score 0, so F1 is always defined.
SegmentationScores scores_from_counts(const PixelCounts& counts);
SegmentationScores precision_recall_f1(const MaskImage& pred, const MaskImage& truth);

double accuracy(const std::vector<DiseaseLabel>& preds, const std::vector<DiseaseLabel>& truths);

// counts[true][predicted].
class ConfusionMatrix {
public:
    using Counts = std::array<std::array<int64_t, kNumClasses>, kNumClasses>;

    ConfusionMatrix() = default;
    explicit ConfusionMatrix(const Counts& counts);

    void add(DiseaseLabel truth, DiseaseLabel pred) { ++counts_[to_index(truth)][to_index(pred)]; }
    int64_t at(DiseaseLabel truth, DiseaseLabel pred) const { return counts_[to_index(truth)][to_index(pred)]; }
    const Counts& counts() const { return counts_; }

    int64_t total() const;
    int64_t trace() const;
    int64_t row_sum(DiseaseLabel truth) const;
    double accuracy() const;

    bool operator==(const ConfusionMatrix&) const = default;

private:
    Counts counts_{};
};

ConfusionMatrix confusion_matrix(const std::vector<DiseaseLabel>& preds, const std::vector<DiseaseLabel>& truths);

}  // namespace aop
