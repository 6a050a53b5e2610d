#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "aop/gradcam.hpp"
#include "aop/metrics.hpp"

namespace aop {

// Static PNG figures drawn with OpenCV.
void plot_confusion_matrix(const ConfusionMatrix& cm, const std::string& title, const std::filesystem::path& path);

struct BarGroup {
    std::string label;
    std::vector<double> values;  // one per series, in [0,1]
};

void plot_bar_chart(const std::vector<BarGroup>& groups, const std::vector<std::string>& series,
                    const std::string& title, const std::filesystem::path& path);

// Input blended with a colour-mapped evidence map.
Image gradcam_overlay(const Image& img, const EvidenceMap& map, double alpha = 0.5);

}  // namespace aop
