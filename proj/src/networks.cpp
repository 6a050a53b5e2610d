#include "aop/networks.hpp"

#include "aop/errors.hpp"

namespace aop {

namespace F = torch::nn::functional;

namespace {

std::string mode_name(OutputMode m) { return m == OutputMode::RgbImage ? "rgb_image" : "probability_map"; }

OutputMode parse_mode(const std::string& s) {
    if (s == "rgb_image") return OutputMode::RgbImage;
    if (s == "probability_map") return OutputMode::ProbabilityMap;
    throw InvalidInput("unknown output mode: " + s);
}

}  // namespace

int64_t GeneratorSpec::stage_channels(int64_t stage) const {
    int64_t c = base_channels;
    for (int64_t i = 0; i < stage && c < max_channels; ++i) c *= 2;
    return std::min(c, max_channels);
}

void GeneratorSpec::validate() const {
    if (depth < 1 || depth > 12) throw InvalidInput("generator depth must lie in [1,12]");
    if (base_channels < 1 || max_channels < base_channels) throw InvalidInput("invalid generator channels");
    if (in_channels < 1) throw InvalidInput("invalid generator input channels");
}

void DiscriminatorSpec::validate() const {
    if (depth < 2) throw InvalidInput("discriminator needs at least 2 conv layers");
    if (base_channels < 1 || max_channels < base_channels) throw InvalidInput("invalid discriminator channels");
    if (in_channels < 2) throw InvalidInput("invalid discriminator input channels");
}

int64_t DiscriminatorSpec::grid_size(int64_t input_size) const {
    int64_t s = input_size;
    for (int64_t i = 0; i < depth; ++i) {
        const int64_t stride = i < depth - 2 ? 2 : 1;
        s = (s + 2 - 4) / stride + 1;
    }
    return s;
}

void to_json(nlohmann::json& j, const GeneratorSpec& s) {
    j = {{"depth", s.depth},
         {"base_channels", s.base_channels},
         {"max_channels", s.max_channels},
         {"in_channels", s.in_channels},
         {"output_mode", mode_name(s.output_mode)}};
}

void from_json(const nlohmann::json& j, GeneratorSpec& s) {
    s.depth = j.value("depth", s.depth);
    s.base_channels = j.value("base_channels", s.base_channels);
    s.max_channels = j.value("max_channels", s.max_channels);
    s.in_channels = j.value("in_channels", s.in_channels);
    if (j.contains("output_mode")) s.output_mode = parse_mode(j.at("output_mode").get<std::string>());
}

void to_json(nlohmann::json& j, const DiscriminatorSpec& s) {
    j = {{"depth", s.depth},
         {"base_channels", s.base_channels},
         {"max_channels", s.max_channels},
         {"in_channels", s.in_channels}};
}

void from_json(const nlohmann::json& j, DiscriminatorSpec& s) {
    s.depth = j.value("depth", s.depth);
    s.base_channels = j.value("base_channels", s.base_channels);
    s.max_channels = j.value("max_channels", s.max_channels);
    s.in_channels = j.value("in_channels", s.in_channels);
}

UNetGeneratorImpl::UNetGeneratorImpl(const GeneratorSpec& spec) : spec_(spec) {
    spec_.validate();
    const auto d = spec_.depth;
    for (int64_t i = 0; i < d; ++i) {
        const int64_t in = i == 0 ? spec_.in_channels : spec_.stage_channels(i - 1);
        const int64_t out = spec_.stage_channels(i);
        const bool norm = i > 0 && i < d - 1;
        down_.push_back(register_module("down" + std::to_string(i),
                                        torch::nn::Conv2d(torch::nn::Conv2dOptions(in, out, 4)
                                                              .stride(2)
                                                              .padding(1)
                                                              .bias(!norm))));
        down_norm_.push_back(norm ? register_module("down_norm" + std::to_string(i), torch::nn::BatchNorm2d(out))
                                  : torch::nn::BatchNorm2d(nullptr));
    }
    // up_[k] brings stage k back to the resolution of stage k−1 (k = 0 → full resolution).
    up_.resize(d, torch::nn::Conv2d(nullptr));
    up_norm_.resize(d, torch::nn::BatchNorm2d(nullptr));
    for (int64_t k = d - 1; k >= 0; --k) {
        const int64_t in = k == d - 1 ? spec_.stage_channels(k) : 2 * spec_.stage_channels(k);
        const int64_t out = k == 0 ? spec_.out_channels() : spec_.stage_channels(k - 1);
        const bool norm = k > 0;
        up_[k] = register_module("up" + std::to_string(k),
                                 torch::nn::Conv2d(torch::nn::Conv2dOptions(in, out, 3).padding(1).bias(!norm)));
        if (norm) up_norm_[k] = register_module("up_norm" + std::to_string(k), torch::nn::BatchNorm2d(out));
    }
    init_gan_weights(*this);
}

torch::Tensor UNetGeneratorImpl::logits(const torch::Tensor& x) {
    if (x.dim() != 4 || x.size(1) != spec_.in_channels) throw InvalidInput("generator expects N×C×H×W input");
    const int64_t factor = int64_t{1} << spec_.depth;
    if (x.size(2) % factor != 0 || x.size(3) % factor != 0)
        throw InvalidInput("generator input size must be divisible by 2^depth = " + std::to_string(factor));

    const auto d = spec_.depth;
    std::vector<torch::Tensor> skips;
    skips.reserve(d);
    torch::Tensor h = x;
    for (int64_t i = 0; i < d; ++i) {
        if (i > 0) h = F::leaky_relu(h, F::LeakyReLUFuncOptions().negative_slope(0.2));
        h = down_[i](h);
        if (down_norm_[i]) h = down_norm_[i](h);
        skips.push_back(h);
    }
    for (int64_t k = d - 1; k >= 0; --k) {
        if (k < d - 1) h = torch::cat({h, skips[k]}, 1);
        h = torch::relu(h);
        h = F::interpolate(h, F::InterpolateFuncOptions()
                                  .scale_factor(std::vector<double>{2.0, 2.0})
                                  .mode(torch::kNearest));
        h = up_[k](h);
        if (up_norm_[k]) h = up_norm_[k](h);
    }
    return h;
}

torch::Tensor UNetGeneratorImpl::forward(const torch::Tensor& x) { return torch::sigmoid(logits(x)); }

PatchDiscriminatorImpl::PatchDiscriminatorImpl(const DiscriminatorSpec& spec) : spec_(spec) {
    spec_.validate();
    const auto d = spec_.depth;
    int64_t in = spec_.in_channels;
    for (int64_t i = 0; i < d; ++i) {
        const bool last = i == d - 1;
        const int64_t out = last ? 1 : std::min(spec_.base_channels << i, spec_.max_channels);
        const int64_t stride = i < d - 2 ? 2 : 1;
        const bool norm = i > 0 && !last;
        convs_.push_back(register_module("conv" + std::to_string(i),
                                         torch::nn::Conv2d(torch::nn::Conv2dOptions(in, out, 4)
                                                               .stride(stride)
                                                               .padding(1)
                                                               .bias(!norm))));
        norms_.push_back(norm ? register_module("norm" + std::to_string(i), torch::nn::BatchNorm2d(out))
                              : torch::nn::BatchNorm2d(nullptr));
        in = out;
    }
    init_gan_weights(*this);
}

torch::Tensor PatchDiscriminatorImpl::logits(const torch::Tensor& condition, const torch::Tensor& candidate) {
    if (condition.dim() != 4 || candidate.dim() != 4 || condition.size(1) + candidate.size(1) != spec_.in_channels)
        throw InvalidInput("discriminator channel mismatch: expected " + std::to_string(spec_.in_channels) +
                           " input channels in total");
    torch::Tensor h = torch::cat({condition, candidate}, 1);
    for (size_t i = 0; i < convs_.size(); ++i) {
        h = convs_[i](h);
        if (norms_[i]) h = norms_[i](h);
        if (i + 1 < convs_.size()) h = F::leaky_relu(h, F::LeakyReLUFuncOptions().negative_slope(0.2));
    }
    return h;
}

torch::Tensor PatchDiscriminatorImpl::forward(const torch::Tensor& condition, const torch::Tensor& candidate) {
    return torch::sigmoid(logits(condition, candidate));
}

void init_gan_weights(torch::nn::Module& module) {
    torch::NoGradGuard no_grad;
    for (auto& m : module.modules(/*include_self=*/false)) {
        if (auto* conv = m->as<torch::nn::Conv2d>()) {
            conv->weight.normal_(0.0, 0.02);
            if (conv->bias.defined()) conv->bias.zero_();
        } else if (auto* bn = m->as<torch::nn::BatchNorm2d>()) {
            bn->weight.normal_(1.0, 0.02);
            bn->bias.zero_();
        }
    }
}

}  // namespace aop
