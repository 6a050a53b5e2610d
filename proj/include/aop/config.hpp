#pragma once

#include <filesystem>
#include <map>
#include <string>

#include <json.hpp>

#include "aop/aop_model.hpp"
#include "aop/classifier.hpp"
#include "aop/dataset_io.hpp"
#include "aop/metrics.hpp"
#include "aop/synth_corpus.hpp"

namespace aop {

void to_json(nlohmann::json& j, const SSIMConfig& c);
void from_json(const nlohmann::json& j, SSIMConfig& c);

// Everything a run depends on. Randomness comes from named seed streams derived from
// master_seed unless a stream is pinned explicitly under "seeds".
struct RunConfig {
    std::filesystem::path corpus_dir = "corpus";
    std::filesystem::path out_dir = "runs";

    uint64_t master_seed = 0;
    std::map<std::string, uint64_t> pinned_seeds;  // split | corpus | aop | classifier

    SplitSpec split;
    SynthConfig synth;
    GeneratorSpec generator;
    DiscriminatorSpec discriminator;
    AopGeometry geometry;
    TrainConfigAOP aop_train;
    AugmentationRecipe aop_recipe = AugmentationRecipe::aop_default();
    SSIMConfig ssim;
    ClassifierSpec classifier;
    TrainConfigCls classifier_train;
    // Side length classification images are held at in memory (0 = input size); batches are
    // resized to the input size as they are formed.
    int64_t classifier_load_size = 0;
    int64_t classifier_hold_size() const { return classifier_load_size > 0 ? classifier_load_size : classifier.input_size; }

    int64_t gradcam_images = 100;
    std::string gradcam_class = "predicted";  // predicted | true
    int threads = 0;                          // 0 = library default

    uint64_t seed(const std::string& stream) const;
    // Copy with every module seed filled from its stream.
    RunConfig resolved() const;

    nlohmann::json to_json() const;
    static RunConfig from_json(const nlohmann::json& j);
    static RunConfig load(const std::filesystem::path& path);

    // SHA-256 of the resolved configuration, excluding filesystem paths.
    std::string hash() const;
};

// Reads AOP_DEVICE (default "cpu"). Only devices available to this libtorch build are accepted.
torch::Device select_device();

}  // namespace aop
