#include "aop/gradcam.hpp"

#include "aop/errors.hpp"

namespace aop {

EvidenceMap gradcam_from(const torch::Tensor& features, const torch::Tensor& class_score, int64_t out_h, int64_t out_w,
                         DiseaseLabel cls) {
    if (features.dim() != 4 || features.size(0) != 1) throw InvalidInput("Grad-CAM expects 1×C×h×w features");
    auto grads = torch::autograd::grad({class_score}, {features}, /*grad_outputs=*/{}, /*retain_graph=*/true)[0];
    auto weights = grads.mean({2, 3}, /*keepdim=*/true);
    auto cam = torch::relu((weights * features.detach()).sum(1, /*keepdim=*/true));
    namespace F = torch::nn::functional;
    cam = F::interpolate(cam, F::InterpolateFuncOptions()
                                  .size(std::vector<int64_t>{out_h, out_w})
                                  .mode(torch::kBilinear)
                                  .align_corners(false))
              .squeeze(0)
              .squeeze(0)
              .clamp_min(0.0);

    EvidenceMap map;
    map.target_class = cls;
    const double peak = cam.max().item<double>();
    if (!(peak > 0.0)) {
        map.heat = torch::zeros({out_h, out_w});
        map.all_zero = true;
    } else {
        map.heat = (cam / peak).to(torch::kFloat32).contiguous();
    }
    return map;
}

EvidenceMap gradcam_map(const Image& img, ClassifierModel& model, DiseaseLabel cls) {
    torch::AutoGradMode grad_on(true);
    auto& net = model.network();
    net->eval();
    const auto size = model.spec().input_size;
    auto out = net->forward_with_features(input_tensor(img, size).unsqueeze(0));
    auto score = out.logits[0][to_index(cls)];
    return gradcam_from(out.features, score, size, size, cls);
}

double overlap_score(const EvidenceMap& map, const MaskImage& mask) {
    if (map.heat.sizes() != mask.tensor().sizes()) throw InvalidInput("evidence map and mask dimensions differ");
    if (!mask.is_binary()) throw InvalidInput("overlap score needs a binary mask");
    const double total = map.heat.sum().item<double>();
    if (map.all_zero || !(total > 0.0)) return 0.0;
    return (map.heat * mask.tensor()).sum().item<double>() / total;
}

}  // namespace aop
