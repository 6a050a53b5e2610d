#include "aop/metrics.hpp"

#include <cmath>

#include "aop/errors.hpp"

namespace aop {

namespace {

torch::Tensor as_batch(const torch::Tensor& t) {
    if (t.dim() == 4) return t;
    if (t.dim() == 3) return t.unsqueeze(0);
    throw InvalidInput("expected N×C×H×W or C×H×W tensor");
}

void check_same_shape(const torch::Tensor& a, const torch::Tensor& b) {
    if (a.sizes() != b.sizes()) throw InvalidInput("shape mismatch between prediction and target");
}

}  // namespace

void SSIMConfig::validate() const {
    if (window_size < 3 || window_size % 2 == 0) throw InvalidInput("SSIM window must be odd and >= 3");
    if (!(window_sigma > 0.0)) throw InvalidInput("SSIM window sigma must be > 0");
    if (!(k1 > 0.0) || !(k2 > 0.0)) throw InvalidInput("SSIM constants must be > 0");
    if (!(dynamic_range > 0.0)) throw InvalidInput("SSIM dynamic range must be > 0");
}

torch::Tensor gaussian_window(const SSIMConfig& cfg, torch::ScalarType dtype) {
    cfg.validate();
    const auto half = static_cast<double>(cfg.window_size / 2);
    auto coords = torch::arange(cfg.window_size, torch::TensorOptions().dtype(torch::kFloat64)) - half;
    auto g = torch::exp(-(coords * coords) / (2.0 * cfg.window_sigma * cfg.window_sigma));
    g = g / g.sum();
    return torch::outer(g, g).to(dtype);
}

torch::Tensor mae_loss(const torch::Tensor& pred, const torch::Tensor& target) {
    check_same_shape(pred, target);
    return (pred - target).abs().mean();
}

double mae_loss(const Image& pred, const Image& target) {
    return mae_loss(pred.tensor(), target.tensor()).item<double>();
}

torch::Tensor ssim(const torch::Tensor& x_in, const torch::Tensor& y_in, const SSIMConfig& cfg) {
    cfg.validate();
    check_same_shape(x_in, y_in);
    auto x = as_batch(x_in);
    auto y = as_batch(y_in);
    const auto channels = x.size(1);
    if (x.size(2) < cfg.window_size || x.size(3) < cfg.window_size)
        throw InvalidInput("image smaller than the SSIM window");

    auto window = gaussian_window(cfg, x.scalar_type())
                      .to(x.device())
                      .view({1, 1, cfg.window_size, cfg.window_size})
                      .expand({channels, 1, cfg.window_size, cfg.window_size})
                      .contiguous();
    namespace F = torch::nn::functional;
    const auto opts = F::Conv2dFuncOptions().groups(channels);
    auto filter = [&](const torch::Tensor& t) { return F::conv2d(t, window, opts); };

    auto mu_x = filter(x);
    auto mu_y = filter(y);
    auto mu_xx = mu_x * mu_x;
    auto mu_yy = mu_y * mu_y;
    auto mu_xy = mu_x * mu_y;
    auto var_x = filter(x * x) - mu_xx;
    auto var_y = filter(y * y) - mu_yy;
    auto cov = filter(x * y) - mu_xy;

    const double c1 = cfg.c1();
    const double c2 = cfg.c2();
    auto map = ((2.0 * mu_xy + c1) * (2.0 * cov + c2)) / ((mu_xx + mu_yy + c1) * (var_x + var_y + c2));
    return map.mean();
}

double ssim(const Image& x, const Image& y, const SSIMConfig& cfg) {
    return ssim(x.to_chw().to(torch::kFloat64), y.to_chw().to(torch::kFloat64), cfg).item<double>();
}

torch::Tensor ssim_loss(const torch::Tensor& pred, const torch::Tensor& target, const SSIMConfig& cfg) {
    return 1.0 - ssim(pred, target, cfg);
}

double ssim_loss(const Image& pred, const Image& target, const SSIMConfig& cfg) {
    return 1.0 - ssim(pred, target, cfg);
}

AdversarialLosses adversarial_losses(const torch::Tensor& d_real, const torch::Tensor& d_fake) {
    auto real = d_real.clamp(kProbabilityEps, 1.0 - kProbabilityEps);
    auto fake = d_fake.clamp(kProbabilityEps, 1.0 - kProbabilityEps);
    AdversarialLosses out;
    out.g_adv = -torch::log(fake).mean();
    out.d_loss = -torch::log(real).mean() - torch::log(1.0 - fake).mean();
    return out;
}

void PixelCounts::add(const MaskImage& pred, const MaskImage& truth) {
    if (!pred.is_binary() || !truth.is_binary()) throw InvalidInput("precision/recall need binary masks");
    if (pred.tensor().sizes() != truth.tensor().sizes()) throw InvalidInput("mask shape mismatch");
    auto p = pred.tensor() > 0.5f;
    auto t = truth.tensor() > 0.5f;
    tp += (p & t).sum().item<int64_t>();
    fp += (p & ~t).sum().item<int64_t>();
    fn += (~p & t).sum().item<int64_t>();
    tn += (~p & ~t).sum().item<int64_t>();
}

SegmentationScores scores_from_counts(const PixelCounts& c) {
    SegmentationScores s;
    s.precision = (c.tp + c.fp) > 0 ? static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fp) : 0.0;
    s.recall = (c.tp + c.fn) > 0 ? static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fn) : 0.0;
    s.f1 = (s.precision + s.recall) > 0.0 ? 2.0 * s.precision * s.recall / (s.precision + s.recall) : 0.0;
    return s;
}

SegmentationScores precision_recall_f1(const MaskImage& pred, const MaskImage& truth) {
    PixelCounts counts;
    counts.add(pred, truth);
    return scores_from_counts(counts);
}

double accuracy(const std::vector<DiseaseLabel>& preds, const std::vector<DiseaseLabel>& truths) {
    if (preds.empty() || preds.size() != truths.size())
        throw InvalidInput("accuracy needs equal-length nonempty label lists");
    size_t hits = 0;
    for (size_t i = 0; i < preds.size(); ++i) hits += preds[i] == truths[i] ? 1 : 0;
    return static_cast<double>(hits) / static_cast<double>(preds.size());
}

ConfusionMatrix::ConfusionMatrix(const Counts& counts) : counts_(counts) {
    for (const auto& row : counts_)
        for (auto v : row)
            if (v < 0) throw InvalidInput("confusion counts must be non-negative");
}

int64_t ConfusionMatrix::total() const {
    int64_t sum = 0;
    for (const auto& row : counts_)
        for (auto v : row) sum += v;
    return sum;
}

int64_t ConfusionMatrix::trace() const {
    int64_t sum = 0;
    for (int i = 0; i < kNumClasses; ++i) sum += counts_[i][i];
    return sum;
}

int64_t ConfusionMatrix::row_sum(DiseaseLabel truth) const {
    int64_t sum = 0;
    for (auto v : counts_[to_index(truth)]) sum += v;
    return sum;
}

double ConfusionMatrix::accuracy() const {
    const auto n = total();
    return n > 0 ? static_cast<double>(trace()) / static_cast<double>(n) : 0.0;
}

ConfusionMatrix confusion_matrix(const std::vector<DiseaseLabel>& preds, const std::vector<DiseaseLabel>& truths) {
    if (preds.empty() || preds.size() != truths.size())
        throw InvalidInput("confusion matrix needs equal-length nonempty label lists");
    ConfusionMatrix cm;
    for (size_t i = 0; i < preds.size(); ++i) cm.add(truths[i], preds[i]);
    return cm;
}

}  // namespace aop
