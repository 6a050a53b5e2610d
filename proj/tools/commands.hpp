#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "aop/config.hpp"
#include "aop/report.hpp"

namespace aop::cli {

// Classifier arms of the comparison: no pretreatment, or one of the three AOP variants.
enum class Arm { Raw, MaeProb, Mae, Ssim };

inline constexpr std::array<Arm, 4> kAllArms = {Arm::Raw, Arm::MaeProb, Arm::Mae, Arm::Ssim};

std::string arm_id(Arm a);            // none | MAE_prob | MAE | SSIM
std::string arm_display_name(Arm a);  // w/o AOP | AOP_MAE_prob | ...
Arm parse_arm(const std::string& s);  // accepts either form
std::optional<AopVariant> arm_variant(Arm a);

// Where each command reads and writes under the run directory.
struct RunLayout {
    std::filesystem::path root;

    std::filesystem::path aop_dir(AopVariant v) const;
    std::filesystem::path aop_checkpoint(AopVariant v) const { return aop_dir(v) / "checkpoint.pt"; }
    std::filesystem::path aop_loss_csv(AopVariant v) const { return aop_dir(v) / "loss.csv"; }
    std::filesystem::path classifier_dir(Arm a) const;
    std::filesystem::path classifier_checkpoint(Arm a) const { return classifier_dir(a) / "model.pt"; }
    std::filesystem::path report_dir() const { return root / "report"; }
};

inline constexpr const char* kPretreatMarker = ".aop_pretreated";

CorpusPaths synth_gen(const RunConfig& cfg);

struct TrainAopArgs {
    bool resume = false;
    int64_t stop_after_epochs = 0;
};
std::filesystem::path train_aop(const RunConfig& cfg, AopVariant variant, const TrainAopArgs& args = {});

// Loads the AOP checkpoint an arm depends on (throws DataError naming the file if absent).
std::optional<AopModel> load_arm_aop(const RunConfig& cfg, Arm arm);
std::optional<Pretreatment> arm_pretreatment(const RunConfig& cfg, Arm arm, std::optional<AopModel>& aop);

ClassifierTrainResult train_classifier(const RunConfig& cfg, Arm arm);

struct PretreatSummary {
    int64_t written = 0;
    bool input_was_pretreated = false;
};
PretreatSummary pretreat_dir(const RunConfig& cfg, const std::filesystem::path& checkpoint,
                             const std::filesystem::path& in_dir, const std::filesystem::path& out_dir,
                             int64_t size = kClassificationSize);

// One row per variant (and "oracle" when requested); written to report/segmentation.csv.
std::vector<std::pair<std::string, SegmentationScores>> evaluate_seg(const RunConfig& cfg,
                                                                     const std::vector<AopVariant>& variants,
                                                                     bool oracle = false);

struct GradcamSummary {
    double mean_overlap = 0.0;
    int64_t images = 0;
};
// Overlays and overlap.csv for the first cfg.gradcam_images test images (balanced over classes).
GradcamSummary gradcam(const RunConfig& cfg, Arm arm, ClassifierModel& model, std::optional<AopModel>& aop,
                       const std::filesystem::path& out_dir, bool write_images = true);
GradcamSummary gradcam(const RunConfig& cfg, Arm arm);

MetricsReport run_comparison(const RunConfig& cfg);

// Parses argv, runs one subcommand, maps errors to exit codes (0 ok, 1 usage, 2 data, 3 divergence).
int main(int argc, char** argv);

}  // namespace aop::cli
