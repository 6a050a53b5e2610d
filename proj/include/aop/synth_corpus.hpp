#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "aop/image.hpp"

namespace aop {

enum class TestBackgroundPolicy {
    Shuffled,        // confounded test images carry another class's canonical texture
    HeldOutTextures, // test backgrounds come from textures never used for training
};

struct SplitCounts {
    int64_t training = 400;
    int64_t validation = 50;
    int64_t test = 50;

    int64_t of(Split s) const;
};

// Synthetic leaf corpus where background texture is correlated with class at strength ρ.
struct SynthConfig {
    SplitCounts per_class;
    int64_t segmentation_pairs = 1000;
    int64_t image_size = 64;
    double confound_strength = 1.0;  // ρ
    TestBackgroundPolicy test_policy = TestBackgroundPolicy::Shuffled;
    int64_t distractor_textures = 12;
    std::vector<double> gamma_choices = {1.0};  // brightness applied to classification images
    uint64_t seed = 0;

    void validate() const;
    // Canonical textures 0..7, then distractors, then the held-out pool.
    int64_t open_pool_size() const { return kNumClasses + distractor_textures; }
    int64_t held_out_base() const { return open_pool_size(); }
};

void to_json(nlohmann::json& j, const SynthConfig& c);
void from_json(const nlohmann::json& j, SynthConfig& c);

// Leaf outline r(θ) = r0·(1 + Σ_k a_k cos(kθ + φ_k)), k = 2..4, about (cx, cy) in pixel units.
struct LeafCurve {
    double cx = 0.0;
    double cy = 0.0;
    double r0 = 0.0;
    std::array<double, 3> amplitude{};
    std::array<double, 3> phase{};

    double radius(double theta) const;
    std::string serialize() const;  // "cx;cy;r0;a2;p2;a3;p3;a4;p4"
    static LeafCurve parse(const std::string& text);
};

// Pixel (i, j) is leaf iff its center lies within the curve.
MaskImage rasterize_leaf(const LeafCurve& curve, int64_t size);

struct SynthSample {
    Image image;
    MaskImage mask;
    MaskImage symptoms;  // pixels painted by the class symptom model
    LeafCurve curve;
};

// Renders one image; a pure function of its arguments.
SynthSample render_sample(DiseaseLabel label, int64_t texture_id, double gamma, uint64_t seed, int64_t size);

// Procedural background texture (size×size×3).
Image render_texture(int64_t texture_id, uint64_t seed, int64_t size);

struct ManifestRow {
    std::string filename;  // relative to the corpus root
    std::string split;     // training | validation | test | segmentation
    DiseaseLabel label = DiseaseLabel::Healthy;
    int64_t texture_id = 0;
    std::string curve_params;
    double gamma_applied = 1.0;
    uint64_t seed = 0;
};

std::vector<ManifestRow> read_manifest(const std::filesystem::path& path);

struct CorpusPaths {
    std::filesystem::path classification_root;
    std::filesystem::path segmentation_root;
    std::filesystem::path manifest;
};

// Writes classification/<split>/<Class>/*.png, segmentation/{images,masks}/*.png and manifest.csv.
CorpusPaths generate_corpus(const SynthConfig& cfg, const std::filesystem::path& out_root);

// Texture assignments without rendering (what generate_corpus records in the manifest).
std::vector<ManifestRow> plan_corpus(const SynthConfig& cfg);

// Plug-in mutual information (nats) between texture id and class, per split.
double mutual_information(const std::vector<std::pair<int64_t, int>>& texture_class_pairs);
std::map<std::string, double> corpus_confound_audit(const std::filesystem::path& root,
                                                    const std::filesystem::path& manifest);

}  // namespace aop
