#include "aop/classifier.hpp"
#include "aop/dataset_io.hpp"
#include "aop/errors.hpp"
#include "aop/gradcam.hpp"
#include "test_util.hpp"

using namespace aop;

namespace {

// Linear single-conv toy: features = conv(x, all-positive 3×3 filter), score = w · mean(features).
struct Toy {
    torch::Tensor input, features, score;
};

Toy toy(int64_t size, int64_t row, int64_t col, double w) {
    Toy t;
    t.input = torch::zeros({1, 1, size, size}, torch::kFloat64);
    t.input.index_put_({0, 0, torch::indexing::Slice(row - 1, row + 2), torch::indexing::Slice(col - 1, col + 2)}, 1.0);
    const auto filter = torch::ones({1, 1, 3, 3}, torch::kFloat64);
    t.features = torch::conv2d(t.input, filter, {}, 1, 1).requires_grad_(false);
    auto f = t.features.clone().requires_grad_(true);
    t.features = f;
    t.score = f.mean() * w;
    return t;
}

EvidenceMap uniform_map(int64_t h, int64_t w) {
    EvidenceMap m;
    m.heat = torch::ones({h, w});
    return m;
}

}  // namespace

TEST(GradcamToy, HeatPeaksAtTheMatchedPatchAndVanishesOutsideItsReach) {
    const auto t = toy(12, 4, 7, 2.0);
    const auto map = gradcam_from(t.features, t.score, 12, 12, DiseaseLabel::MYSV);
    ASSERT_FALSE(map.all_zero);
    const auto flat = map.heat.argmax().item<int64_t>();
    EXPECT_EQ(flat / 12, 4);
    EXPECT_EQ(flat % 12, 7);
    EXPECT_FLOAT_EQ(map.heat.max().item<float>(), 1.0f);
    // Only activations whose 3×3 window touches the 3×3 patch can be nonzero: rows 2..6, cols 5..9.
    for (int64_t i = 0; i < 12; ++i) {
        for (int64_t j = 0; j < 12; ++j) {
            const bool reach = i >= 2 && i <= 6 && j >= 5 && j <= 9;
            if (!reach) EXPECT_EQ(map.heat[i][j].item<float>(), 0.0f) << i << "," << j;
            else EXPECT_GT(map.heat[i][j].item<float>(), 0.0f);
        }
    }
    // Hand values: activation = overlap area / 9 of the peak.
    EXPECT_NEAR(map.heat[4][8].item<float>(), 6.0f / 9.0f, 1e-6f);
    EXPECT_NEAR(map.heat[2][5].item<float>(), 1.0f / 9.0f, 1e-6f);
}

TEST(GradcamToy, NegativeEvidenceIsFlaggedAllZero) {
    const auto t = toy(8, 3, 3, -1.0);
    const auto map = gradcam_from(t.features, t.score, 8, 8, DiseaseLabel::CMV);
    EXPECT_TRUE(map.all_zero);
    EXPECT_EQ(map.heat.abs().sum().item<float>(), 0.0f);
    EXPECT_EQ(map.target_class, DiseaseLabel::CMV);
}

TEST(GradcamToy, ConstantLogitShiftLeavesHeatUnchanged) {
    const auto t = toy(10, 5, 5, 1.5);
    const auto a = gradcam_from(t.features, t.score, 10, 10, DiseaseLabel::WMV);
    const auto b = gradcam_from(t.features, t.score + 7.0, 10, 10, DiseaseLabel::WMV);
    EXPECT_TRUE(torch::equal(a.heat, b.heat));
}

TEST(GradcamToy, UpsamplesToRequestedSize) {
    const auto t = toy(8, 3, 3, 1.0);
    const auto map = gradcam_from(t.features, t.score, 32, 24, DiseaseLabel::WMV);
    EXPECT_EQ(map.heat.sizes(), (std::vector<int64_t>{32, 24}));
}

TEST(GradcamNetwork, RangeAndDeterminism) {
    ClassifierSpec spec;
    spec.input_size = 32;
    spec.width_multiplier = 0.0625;
    spec.fc1 = 64;
    ClassifierModel m(spec, 6);
    const auto img = fixtures::random_image(32, 32, 3, 70);
    for (int c = 0; c < kNumClasses; ++c) {
        const auto a = gradcam_map(img, m, label_from_index(c));
        const auto b = gradcam_map(img, m, label_from_index(c));
        EXPECT_TRUE(torch::equal(a.heat, b.heat));
        EXPECT_EQ(a.heat.sizes(), (std::vector<int64_t>{32, 32}));
        EXPECT_GE(a.heat.min().item<float>(), 0.0f);
        if (!a.all_zero) EXPECT_FLOAT_EQ(a.heat.max().item<float>(), 1.0f);
        else EXPECT_EQ(a.heat.max().item<float>(), 0.0f);
    }
}

TEST(GradcamNetwork, MapIsAtInputResolution) {
    ClassifierSpec spec;
    spec.input_size = 64;
    spec.width_multiplier = 0.0625;
    spec.fc1 = 64;
    ClassifierModel m(spec, 7);
    const auto img = fixtures::random_image(32, 32, 3, 71);
    const auto a = gradcam_map(img, m, DiseaseLabel::CMV);
    EXPECT_EQ(a.heat.sizes(), (std::vector<int64_t>{64, 64}));
    EXPECT_TRUE(torch::equal(a.heat, gradcam_map(resize_image(img, 64, 64), m, DiseaseLabel::CMV).heat));
}

TEST(Overlap, ProportionsAndPartition) {
    auto inside = uniform_map(10, 10);
    inside.heat.zero_();
    inside.heat.narrow(0, 2, 3).narrow(1, 2, 3).fill_(0.5f);
    auto m = torch::zeros({10, 10});
    m.narrow(0, 1, 5).narrow(1, 1, 5).fill_(1.0f);
    EXPECT_DOUBLE_EQ(overlap_score(inside, MaskImage(m, true)), 1.0);

    auto forty = torch::zeros({10, 10});
    forty.narrow(0, 0, 4).fill_(1.0f);
    EXPECT_NEAR(overlap_score(uniform_map(10, 10), MaskImage(forty, true)), 0.4, 1e-7);

    auto gen = at::make_generator<at::CPUGeneratorImpl>(5);
    EvidenceMap random;
    random.heat = torch::rand({10, 10}, gen);
    const auto mask = fixtures::random_mask(10, 10, 6);
    const MaskImage complement(1.0f - mask.tensor(), true);
    EXPECT_NEAR(overlap_score(random, mask) + overlap_score(random, complement), 1.0, 1e-6);
    EXPECT_NEAR(overlap_score(random, MaskImage::ones(10, 10)), 1.0, 1e-6);
    const EvidenceMap blank{torch::zeros({10, 10}), DiseaseLabel::MYSV, true};
    EXPECT_EQ(overlap_score(blank, MaskImage::ones(10, 10)), 0.0);
}

TEST(Overlap, ShapeMismatchRejected) {
    EXPECT_THROW(overlap_score(uniform_map(4, 4), MaskImage::ones(4, 5)), InvalidInput);
}
