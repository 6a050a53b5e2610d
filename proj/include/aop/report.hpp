#pragma once

#include <array>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "aop/metrics.hpp"

namespace aop {

// One classifier arm of the with/without-pretreatment comparison.
struct ArmResult {
    std::string arm;  // "w/o AOP", "AOP_MAE_prob", ...
    std::string pretreat_tag;
    std::string classifier_config_hash;  // excludes the pretreatment
    std::array<double, 3> accuracy{};    // indexed by Split
    std::array<ConfusionMatrix, 3> confusion{};
    double gap = 0.0;                    // validation − test
    std::optional<double> gradcam_overlap;
    int64_t gradcam_images = 0;

    double accuracy_of(Split s) const { return accuracy[static_cast<int>(s)]; }
    // Sets accuracy/confusion for a split and refreshes the gap.
    void set_split(Split s, const ConfusionMatrix& cm);
};

struct Provenance {
    std::string config_hash;
    std::string git_revision;
    std::string started;
    std::string finished;
};

struct MetricsReport {
    std::vector<ArmResult> arms;
    std::map<std::string, SegmentationScores> segmentation;  // variant → scores
    Provenance provenance;

    nlohmann::json to_json() const;
    static MetricsReport from_json(const nlohmann::json& j);
    void save(const std::filesystem::path& path) const;
    static MetricsReport load(const std::filesystem::path& path);

    // accuracy.csv: arm,training,validation,test,gap
    void write_accuracy_csv(const std::filesystem::path& path) const;
};

// variant,precision,recall,f1
void write_segmentation_csv(const std::filesystem::path& path,
                            const std::vector<std::pair<std::string, SegmentationScores>>& rows);

std::string utc_timestamp();
// `git rev-parse HEAD` in the working directory, or "unknown".
std::string git_revision();

}  // namespace aop
