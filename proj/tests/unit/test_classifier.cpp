#include <cmath>
#include <fstream>

#include "aop/classifier.hpp"
#include "aop/dataset_io.hpp"
#include "aop/errors.hpp"
#include "test_util.hpp"

using namespace aop;
using aop::fixtures::TempDir;

namespace {

ClassifierSpec small_spec(int64_t input = 32) {
    ClassifierSpec s;
    s.input_size = input;
    s.width_multiplier = 0.0625;
    s.fc1 = 64;
    s.fc2 = 32;
    return s;
}

std::vector<LabeledExample> noise_examples(int n, Split split, uint64_t seed, int64_t size = 32) {
    std::vector<LabeledExample> out;
    for (int i = 0; i < n; ++i)
        out.emplace_back(fixtures::random_image(size, size, 3, seed + i), label_from_index(i % kNumClasses), split);
    return out;
}

std::vector<Image> images(const std::vector<LabeledExample>& exs) {
    std::vector<Image> out;
    for (const auto& e : exs) out.push_back(e.image);
    return out;
}

}  // namespace

TEST(ClassifierSpec, BlockWidthsAndValidation) {
    ClassifierSpec s;
    EXPECT_EQ(s.block_channels(), (std::array<int64_t, 5>{64, 128, 256, 512, 512}));
    s.width_multiplier = 0.125;
    EXPECT_EQ(s.block_channels(), (std::array<int64_t, 5>{8, 16, 32, 64, 64}));
    s.input_size = 225;
    EXPECT_THROW(s.validate(), InvalidInput);
}

TEST(Classifier, ThirteenConvsAndHeadWidths) {
    VggClassifier net(small_spec());
    int convs = 0;
    std::vector<int64_t> linear_outs;
    for (const auto& m : net->modules(false)) {
        convs += m->as<torch::nn::Conv2d>() != nullptr;
        if (auto* l = m->as<torch::nn::Linear>()) linear_outs.push_back(l->options.out_features());
    }
    EXPECT_EQ(convs, 13);
    EXPECT_EQ(linear_outs, (std::vector<int64_t>{64, 32, 8}));
    EXPECT_EQ(ClassifierSpec{}.fc1, 1024);
    EXPECT_EQ(ClassifierSpec{}.fc2, 32);
}

TEST(Classifier, RequiresConfiguredInputSize) {
    auto spec = small_spec(224);
    VggClassifier net(spec);
    net->eval();
    torch::NoGradGuard no_grad;
    EXPECT_EQ(net->forward(torch::rand({1, 3, 224, 224})).sizes(), (std::vector<int64_t>{1, kNumClasses}));
    EXPECT_THROW(net->forward(torch::rand({1, 3, 225, 225})), InvalidInput);
    EXPECT_THROW(net->forward(torch::rand({1, 1, 224, 224})), InvalidInput);
}

TEST(Classifier, ProbabilitiesSumToOne) {
    ClassifierModel m(small_spec(), 3);
    const auto probs = classify(m, images(noise_examples(20, Split::Test, 500)));
    EXPECT_TRUE((probs >= 0).all().item<bool>());
    EXPECT_LE((probs.sum(1) - 1.0).abs().max().item<double>(), 1e-6);
}

TEST(Classifier, SmallerImagesAreResizedPerBatch) {
    ClassifierModel m(small_spec(64), 5);
    const auto small = images(noise_examples(6, Split::Test, 510, 32));
    std::vector<Image> upsampled;
    for (const auto& img : small) upsampled.push_back(resize_image(img, 64, 64));
    EXPECT_TRUE(torch::equal(classify(m, small), classify(m, upsampled)));
    EXPECT_EQ(input_tensor(small[0], 64).sizes(), (std::vector<int64_t>{3, 64, 64}));
}

TEST(Classifier, RandomInitIsNearUniformOnNoise) {
    ClassifierModel m(small_spec(64), 4);
    const auto probs = classify(m, images(noise_examples(100, Split::Test, 900, 64))).to(torch::kFloat64);
    const double entropy = (-(probs * probs.clamp_min(1e-12).log()).sum(1)).mean().item<double>();
    EXPECT_GT(entropy, 1.0);
}

TEST(Classifier, ArgmaxInvariantToPositiveLogitScaling) {
    const auto logits = torch::randn({50, kNumClasses});
    const auto a = torch::softmax(logits, 1).argmax(1);
    for (double c : {0.01, 0.5, 3.0, 100.0}) EXPECT_TRUE(torch::equal(torch::softmax(logits * c, 1).argmax(1), a));
}

TEST(Classifier, CheckpointRoundTrip) {
    TempDir dir("cls");
    ClassifierModel m(small_spec(), 5);
    m.pretreat_tag = "AOP_SSIM@x";
    m.epoch = 4;
    m.config_hash = "h";
    m.save(dir / "c.pt");
    auto back = ClassifierModel::load(dir / "c.pt");
    EXPECT_EQ(back.pretreat_tag, "AOP_SSIM@x");
    EXPECT_EQ(back.epoch, 4);
    EXPECT_EQ(back.config_hash, "h");
    const auto imgs = images(noise_examples(4, Split::Test, 7));
    EXPECT_LE((classify(m, imgs) - classify(back, imgs)).abs().max().item<float>(), 1e-6f);
}

TEST(Classifier, PretreatmentMismatchIsRejected) {
    ClassifierModel m(small_spec(), 5);
    m.pretreat_tag = "AOP_MAE@abc";
    const auto img = fixtures::random_image(32, 32, 3, 8);
    EXPECT_THROW(predict(img, m), InvalidInput);
    Pretreatment other{"AOP_SSIM@abc", [](const std::vector<Image>& v) { return v; }};
    EXPECT_THROW(predict(img, m, other), InvalidInput);
    Pretreatment same{"AOP_MAE@abc", [](const std::vector<Image>& v) { return v; }};
    const auto p = predict(img, m, same);
    double total = 0;
    int best = 0;
    for (int c = 0; c < kNumClasses; ++c) {
        total += p.probs[c];
        if (p.probs[c] > p.probs[best]) best = c;
    }
    EXPECT_NEAR(total, 1.0, 1e-6);
    EXPECT_EQ(to_index(p.label), best);
}

TEST(Classifier, BackboneWeightsLoadAndReportShapeDiffs) {
    TempDir dir("bb");
    VggClassifier a(small_spec());
    save_backbone_weights(a, dir / "bb.pt");
    VggClassifier b(small_spec());
    load_backbone_weights(b, dir / "bb.pt");
    const auto pa = a->backbone()->parameters();
    const auto pb = b->backbone()->parameters();
    for (size_t i = 0; i < pa.size(); ++i) EXPECT_TRUE(torch::equal(pa[i], pb[i]));

    auto wide = small_spec();
    wide.width_multiplier = 0.125;
    VggClassifier c(wide);
    try {
        load_backbone_weights(c, dir / "bb.pt");
        FAIL() << "expected shape mismatch";
    } catch (const InvalidInput& e) {
        EXPECT_NE(std::string(e.what()).find("shape"), std::string::npos);
    }
}

TEST(Classifier, PretrainedSpecLoadsBackbone) {
    TempDir dir("bb");
    VggClassifier a(small_spec());
    save_backbone_weights(a, dir / "bb.pt");
    auto spec = small_spec();
    spec.pretrained_weights = (dir / "bb.pt").string();
    ClassifierModel m(spec, 99);
    const auto pa = a->backbone()->parameters();
    const auto pm = m.network()->backbone()->parameters();
    for (size_t i = 0; i < pa.size(); ++i) EXPECT_TRUE(torch::equal(pa[i], pm[i]));
}

TEST(ClassifierTraining, SeededRunsAgreeAndIdentityPretreatMatchesRaw) {
    TempDir dir("ct");
    const auto train = noise_examples(24, Split::Training, 1000);
    const auto val = noise_examples(8, Split::Validation, 2000);
    TrainConfigCls cfg;
    cfg.epochs = 2;
    cfg.batch_size = 8;
    cfg.seed = 17;
    ClassifierTrainOptions opts;
    opts.metrics_csv = dir / "m.csv";
    const auto a = train_classifier(train, val, small_spec(), cfg, std::nullopt, opts);
    const auto b = train_classifier(train, val, small_spec(), cfg);
    const auto c = train_classifier(train, val, small_spec(), cfg, Pretreatment::identity());
    ASSERT_EQ(a.history.size(), 2u);
    EXPECT_EQ(a.history[0].val_accuracy, b.history[0].val_accuracy);
    EXPECT_EQ(a.history[0].loss, b.history[0].loss);
    EXPECT_EQ(a.history[1].loss, c.history[1].loss);
    EXPECT_EQ(a.model.config_hash, c.model.config_hash);

    std::ifstream in(dir / "m.csv");
    std::string header;
    std::getline(in, header);
    EXPECT_EQ(header, "epoch,train_acc,val_acc,loss");
    int rows = 0;
    for (std::string l; std::getline(in, l);) ++rows;
    EXPECT_EQ(rows, 2);
}

TEST(ClassifierTraining, ConfigHashIgnoresOnlyThePretreatment) {
    const auto spec = small_spec();
    TrainConfigCls cfg;
    EXPECT_EQ(classifier_config_hash(spec, cfg), classifier_config_hash(spec, cfg));
    auto other = cfg;
    other.learning_rate = 0.01;
    EXPECT_NE(classifier_config_hash(spec, cfg), classifier_config_hash(spec, other));
    auto wider = spec;
    wider.width_multiplier = 0.25;
    EXPECT_NE(classifier_config_hash(spec, cfg), classifier_config_hash(wider, cfg));
}

TEST(ClassifierTraining, RejectsEmptyTrainingSet) {
    EXPECT_THROW(train_classifier({}, {}, small_spec(), TrainConfigCls{}), InvalidInput);
}
