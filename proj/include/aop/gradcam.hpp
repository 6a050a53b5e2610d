#pragma once

#include "aop/classifier.hpp"
#include "aop/image.hpp"

namespace aop {

struct EvidenceMap {
    torch::Tensor heat;  // H×W in [0,1]; max is 1 unless all_zero
    DiseaseLabel target_class = DiseaseLabel::Healthy;
    bool all_zero = false;
};

// Grad-CAM from an activation map (1×C×h×w) and a scalar class score computed from it:
// channel weights are the spatially averaged gradients, the map is the rectified weighted
// sum, bilinearly upsampled to out_h×out_w and divided by its maximum.
EvidenceMap gradcam_from(const torch::Tensor& features, const torch::Tensor& class_score, int64_t out_h, int64_t out_w,
                         DiseaseLabel cls);

// Uses the last backbone conv activation and the pre-softmax logit of `cls`.
EvidenceMap gradcam_map(const Image& img, ClassifierModel& model, DiseaseLabel cls);

// Fraction of total heat inside the mask; 0 for an all-zero map.
double overlap_score(const EvidenceMap& map, const MaskImage& mask);

}  // namespace aop
