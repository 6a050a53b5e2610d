#pragma once

#include <torch/torch.h>

#include <json.hpp>

namespace aop {

enum class OutputMode { RgbImage, ProbabilityMap };

struct GeneratorSpec {
    int64_t depth = 8;
    int64_t base_channels = 64;
    int64_t max_channels = 512;
    int64_t in_channels = 3;
    OutputMode output_mode = OutputMode::RgbImage;

    int64_t out_channels() const { return output_mode == OutputMode::RgbImage ? 3 : 1; }
    int64_t stage_channels(int64_t stage) const;
    void validate() const;
};

struct DiscriminatorSpec {
    int64_t depth = 5;
    int64_t base_channels = 64;
    int64_t max_channels = 512;
    int64_t in_channels = 6;  // conditioning image + candidate output

    void validate() const;
    // Side length of the probability grid for a square input.
    int64_t grid_size(int64_t input_size) const;
};

void to_json(nlohmann::json& j, const GeneratorSpec& s);
void from_json(const nlohmann::json& j, GeneratorSpec& s);
void to_json(nlohmann::json& j, const DiscriminatorSpec& s);
void from_json(const nlohmann::json& j, DiscriminatorSpec& s);

// U-net with `depth` stride-2 4×4 conv stages and `depth` decoder stages. Each decoder stage
// upsamples ×2 by nearest neighbour and then convolves (3×3), avoiding transposed convolutions.
class UNetGeneratorImpl : public torch::nn::Module {
public:
    explicit UNetGeneratorImpl(const GeneratorSpec& spec);

    // x: N×in×H×W, H and W divisible by 2^depth. Output in [0,1] (sigmoid).
    torch::Tensor forward(const torch::Tensor& x);
    // Pre-activation output; forward() is sigmoid(logits()).
    torch::Tensor logits(const torch::Tensor& x);

    const GeneratorSpec& spec() const { return spec_; }

private:
    GeneratorSpec spec_;
    std::vector<torch::nn::Conv2d> down_;
    std::vector<torch::nn::BatchNorm2d> down_norm_;  // empty holder where unused
    std::vector<torch::nn::Conv2d> up_;
    std::vector<torch::nn::BatchNorm2d> up_norm_;
};
TORCH_MODULE(UNetGenerator);

// Patch discriminator: depth−2 stride-2 convs, one stride-1 conv, then a 1-channel conv.
// All 4×4 kernels with padding 1; output is a grid of probabilities.
class PatchDiscriminatorImpl : public torch::nn::Module {
public:
    explicit PatchDiscriminatorImpl(const DiscriminatorSpec& spec);

    torch::Tensor forward(const torch::Tensor& condition, const torch::Tensor& candidate);
    torch::Tensor logits(const torch::Tensor& condition, const torch::Tensor& candidate);

    const DiscriminatorSpec& spec() const { return spec_; }

private:
    DiscriminatorSpec spec_;
    std::vector<torch::nn::Conv2d> convs_;
    std::vector<torch::nn::BatchNorm2d> norms_;
};
TORCH_MODULE(PatchDiscriminator);

// N(0, 0.02) conv weights, N(1, 0.02) batch-norm scales, zero biases.
void init_gan_weights(torch::nn::Module& module);

}  // namespace aop
