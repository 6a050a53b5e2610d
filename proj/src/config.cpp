#include "aop/config.hpp"

#include <cstdlib>
#include <fstream>

#include "aop/errors.hpp"
#include "aop/hashing.hpp"

namespace fs = std::filesystem;

namespace aop {

void to_json(nlohmann::json& j, const SSIMConfig& c) {
    j = {{"window_size", c.window_size},
         {"window_sigma", c.window_sigma},
         {"k1", c.k1},
         {"k2", c.k2},
         {"dynamic_range", c.dynamic_range}};
}

void from_json(const nlohmann::json& j, SSIMConfig& c) {
    c.window_size = j.value("window_size", c.window_size);
    c.window_sigma = j.value("window_sigma", c.window_sigma);
    c.k1 = j.value("k1", c.k1);
    c.k2 = j.value("k2", c.k2);
    c.dynamic_range = j.value("dynamic_range", c.dynamic_range);
}

uint64_t RunConfig::seed(const std::string& stream) const {
    if (auto it = pinned_seeds.find(stream); it != pinned_seeds.end()) return it->second;
    return derive_seed(master_seed, stream);
}

RunConfig RunConfig::resolved() const {
    RunConfig r = *this;
    r.split.rng_seed = seed("split");
    r.synth.seed = seed("corpus");
    r.aop_train.seed = seed("aop");
    r.classifier_train.seed = seed("classifier");
    return r;
}

nlohmann::json RunConfig::to_json() const {
    nlohmann::json seeds = {{"master", master_seed}};
    for (const auto& [k, v] : pinned_seeds) seeds[k] = v;
    return {{"paths", {{"corpus", corpus_dir.string()}, {"out", out_dir.string()}}},
            {"seeds", seeds},
            {"split", {{"seg_train_fraction", split.seg_train_fraction}}},
            {"synth", synth},
            {"aop",
             {{"generator", generator},
              {"discriminator", discriminator},
              {"geometry", geometry},
              {"train", aop_train},
              {"recipe", aop_recipe}}},
            {"ssim", ssim},
            {"classifier", {{"spec", classifier}, {"train", classifier_train}, {"load_size", classifier_load_size}}},
            {"gradcam", {{"images", gradcam_images}, {"class", gradcam_class}}},
            {"runtime", {{"threads", threads}}}};
}

RunConfig RunConfig::from_json(const nlohmann::json& j) {
    RunConfig c;
    try {
        if (j.contains("paths")) {
            const auto& p = j.at("paths");
            c.corpus_dir = p.value("corpus", c.corpus_dir.string());
            c.out_dir = p.value("out", c.out_dir.string());
        }
        if (j.contains("seeds")) {
            for (const auto& [k, v] : j.at("seeds").items()) {
                if (k == "master") c.master_seed = v.get<uint64_t>();
                else c.pinned_seeds[k] = v.get<uint64_t>();
            }
        }
        if (j.contains("split")) c.split.seg_train_fraction = j.at("split").value("seg_train_fraction", 0.8);
        if (j.contains("synth")) c.synth = j.at("synth").get<SynthConfig>();
        if (j.contains("aop")) {
            const auto& a = j.at("aop");
            if (a.contains("generator")) c.generator = a.at("generator").get<GeneratorSpec>();
            if (a.contains("discriminator")) c.discriminator = a.at("discriminator").get<DiscriminatorSpec>();
            if (a.contains("geometry")) c.geometry = a.at("geometry").get<AopGeometry>();
            if (a.contains("train")) c.aop_train = a.at("train").get<TrainConfigAOP>();
            if (a.contains("recipe")) c.aop_recipe = a.at("recipe").get<AugmentationRecipe>();
        }
        if (j.contains("ssim")) c.ssim = j.at("ssim").get<SSIMConfig>();
        if (j.contains("classifier")) {
            const auto& k = j.at("classifier");
            if (k.contains("spec")) c.classifier = k.at("spec").get<ClassifierSpec>();
            if (k.contains("train")) c.classifier_train = k.at("train").get<TrainConfigCls>();
            c.classifier_load_size = k.value("load_size", c.classifier_load_size);
        }
        if (j.contains("gradcam")) {
            c.gradcam_images = j.at("gradcam").value("images", c.gradcam_images);
            c.gradcam_class = j.at("gradcam").value("class", c.gradcam_class);
        }
        if (j.contains("runtime")) c.threads = j.at("runtime").value("threads", c.threads);
    } catch (const nlohmann::json::exception& e) {
        throw InvalidInput(std::string("invalid config: ") + e.what());
    }
    if (c.gradcam_class != "predicted" && c.gradcam_class != "true")
        throw InvalidInput("gradcam.class must be 'predicted' or 'true'");
    c.synth.validate();
    c.geometry.validate();
    c.aop_train.validate();
    c.aop_recipe.validate();
    c.ssim.validate();
    c.classifier.validate();
    c.classifier_train.validate();
    if (c.classifier_load_size < 0) throw InvalidInput("classifier.load_size must be >= 0");
    return c;
}

RunConfig RunConfig::load(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw InvalidInput("cannot open config file: " + path.string());
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw InvalidInput("config " + path.string() + " is not valid JSON: " + e.what());
    }
    return from_json(j);
}

std::string RunConfig::hash() const {
    auto j = resolved().to_json();
    j.erase("paths");
    return sha256_hex(j.dump());
}

torch::Device select_device() {
    const char* env = std::getenv("AOP_DEVICE");
    const std::string name = env && *env ? env : "cpu";
    torch::Device device(torch::kCPU);
    try {
        device = torch::Device(name);
    } catch (const std::exception&) {
        throw InvalidInput("AOP_DEVICE: unknown device name '" + name + "'");
    }
    if (!device.is_cpu())
        throw InvalidInput("AOP_DEVICE: device '" + name + "' is not available in this build (use 'cpu')");
    return device;
}

}  // namespace aop
