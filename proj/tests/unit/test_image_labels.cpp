#include "aop/errors.hpp"
#include "aop/image.hpp"
#include "test_util.hpp"

using namespace aop;

TEST(Labels, IndexRoundTrip) {
    for (int i = 0; i < kNumClasses; ++i) {
        const auto l = label_from_index(i);
        EXPECT_EQ(to_index(l), i);
        EXPECT_EQ(parse_label(label_name(l)), l);
    }
    EXPECT_EQ(to_index(DiseaseLabel::Healthy), 7);
    EXPECT_FALSE(parse_label("Rust").has_value());
}

TEST(Labels, SplitNames) {
    EXPECT_EQ(parse_split("validation"), Split::Validation);
    EXPECT_EQ(split_name(Split::Test), "test");
    EXPECT_FALSE(parse_split("val").has_value());
}

TEST(Image, RejectsOutOfRangeAndNonFinite) {
    auto t = torch::full({4, 4, 3}, 0.5f);
    EXPECT_NO_THROW(Image{t.clone()});
    auto hi = t.clone();
    hi[0][0][0] = 1.5f;
    EXPECT_THROW(Image{hi}, InvalidInput);
    auto lo = t.clone();
    lo[1][2][0] = -0.01f;
    EXPECT_THROW(Image{lo}, InvalidInput);
    auto nan = t.clone();
    nan[3][3][2] = std::numeric_limits<float>::quiet_NaN();
    EXPECT_THROW(Image{nan}, InvalidInput);
}

TEST(Image, RejectsBadShape) {
    EXPECT_THROW(Image{torch::zeros({4, 4, 2})}, InvalidInput);
    EXPECT_THROW(Image{torch::zeros({4, 4})}, InvalidInput);
}

TEST(Image, ChwRoundTrip) {
    const auto img = fixtures::random_image(5, 7, 3, 1);
    const auto chw = img.to_chw();
    EXPECT_EQ(chw.sizes(), (std::vector<int64_t>{3, 5, 7}));
    EXPECT_FLOAT_EQ(chw[2][4][6].item<float>(), img.tensor()[4][6][2].item<float>());
    EXPECT_TRUE(Image::from_chw(chw).same_pixels(img));
}

TEST(MaskImage, BinaryMasksHoldOnlyZeroAndOne) {
    EXPECT_NO_THROW(MaskImage(torch::tensor({0.0f, 1.0f, 1.0f, 0.0f}).reshape({2, 2}), true));
    EXPECT_THROW(MaskImage(torch::tensor({0.0f, 0.5f, 1.0f, 0.0f}).reshape({2, 2}), true), InvalidInput);
    EXPECT_NO_THROW(MaskImage(torch::tensor({0.0f, 0.5f, 1.0f, 0.0f}).reshape({2, 2}), false));
    EXPECT_THROW(MaskImage(torch::tensor({0.0f, 1.5f, 1.0f, 0.0f}).reshape({2, 2}), false), InvalidInput);
}

TEST(SegmentationPair, DimensionsMustAgree) {
    const auto img = fixtures::random_image(8, 8, 3, 2);
    EXPECT_NO_THROW(SegmentationPair(img, MaskImage::ones(8, 8)));
    EXPECT_THROW(SegmentationPair(img, MaskImage::ones(8, 9)), InvalidInput);
}
