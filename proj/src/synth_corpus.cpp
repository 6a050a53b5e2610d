#include "aop/synth_corpus.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <random>
#include <sstream>

#include "aop/augmentation.hpp"
#include "aop/dataset_io.hpp"
#include "aop/errors.hpp"
#include "aop/hashing.hpp"

namespace fs = std::filesystem;

namespace aop {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

struct Rgb {
    float r, g, b;
};

Rgb hsv(double h_deg, double s, double v) {
    h_deg = std::fmod(std::fmod(h_deg, 360.0) + 360.0, 360.0);
    const double c = v * s;
    const double x = c * (1.0 - std::abs(std::fmod(h_deg / 60.0, 2.0) - 1.0));
    const double m = v - c;
    double r = 0, g = 0, b = 0;
    if (h_deg < 60) r = c, g = x;
    else if (h_deg < 120) r = x, g = c;
    else if (h_deg < 180) g = c, b = x;
    else if (h_deg < 240) g = x, b = c;
    else if (h_deg < 300) r = x, b = c;
    else r = c, b = x;
    return {static_cast<float>(r + m), static_cast<float>(g + m), static_cast<float>(b + m)};
}

Rgb mix(Rgb a, Rgb b, double t) {
    const auto f = static_cast<float>(t);
    return {a.r + (b.r - a.r) * f, a.g + (b.g - a.g) * f, a.b + (b.b - a.b) * f};
}

// Row-major size×size×3 buffer.
class Canvas {
public:
    explicit Canvas(int64_t size) : size_(size), px_(static_cast<size_t>(size * size * 3), 0.0f) {}

    int64_t size() const { return size_; }
    void set(int64_t i, int64_t j, Rgb c) {
        auto* p = &px_[static_cast<size_t>((i * size_ + j) * 3)];
        p[0] = c.r, p[1] = c.g, p[2] = c.b;
    }
    Rgb get(int64_t i, int64_t j) const {
        const auto* p = &px_[static_cast<size_t>((i * size_ + j) * 3)];
        return {p[0], p[1], p[2]};
    }
    torch::Tensor tensor() const {
        return torch::from_blob(const_cast<float*>(px_.data()), {size_, size_, 3}, torch::kFloat32).clone().clamp(0.0, 1.0);
    }

private:
    int64_t size_;
    std::vector<float> px_;
};

double uniform(Rng& rng, double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); }

// Smooth value noise in [0,1] with `cells` lattice cells per side.
std::vector<double> value_noise(Rng& rng, int64_t size, int64_t cells) {
    const int64_t n = cells + 2;
    std::vector<double> lattice(static_cast<size_t>(n * n));
    for (auto& v : lattice) v = uniform(rng, 0.0, 1.0);
    std::vector<double> out(static_cast<size_t>(size * size));
    const double step = static_cast<double>(cells) / static_cast<double>(size);
    for (int64_t i = 0; i < size; ++i) {
        for (int64_t j = 0; j < size; ++j) {
            const double y = (static_cast<double>(i) + 0.5) * step;
            const double x = (static_cast<double>(j) + 0.5) * step;
            const auto y0 = static_cast<int64_t>(y), x0 = static_cast<int64_t>(x);
            const double ty = y - static_cast<double>(y0), tx = x - static_cast<double>(x0);
            const double sy = ty * ty * (3 - 2 * ty), sx = tx * tx * (3 - 2 * tx);
            auto at = [&](int64_t a, int64_t b) { return lattice[static_cast<size_t>(a * n + b)]; };
            const double top = at(y0, x0) * (1 - sx) + at(y0, x0 + 1) * sx;
            const double bot = at(y0 + 1, x0) * (1 - sx) + at(y0 + 1, x0 + 1) * sx;
            out[static_cast<size_t>(i * size + j)] = top * (1 - sy) + bot * sy;
        }
    }
    return out;
}

LeafCurve draw_curve(Rng& rng, int64_t size) {
    const auto s = static_cast<double>(size);
    LeafCurve c;
    c.cx = s / 2.0 + uniform(rng, -0.05, 0.05) * s;
    c.cy = s / 2.0 + uniform(rng, -0.05, 0.05) * s;
    c.r0 = uniform(rng, 0.27, 0.34) * s;
    for (size_t k = 0; k < 3; ++k) {
        c.amplitude[k] = uniform(rng, 0.0, 0.09);
        c.phase[k] = uniform(rng, 0.0, kTwoPi);
    }
    return c;
}

struct Spot {
    double y, x;
};

// Uniform point well inside the leaf outline.
Spot leaf_point(Rng& rng, const LeafCurve& c, double margin) {
    const double theta = uniform(rng, 0.0, kTwoPi);
    const double r = std::sqrt(uniform(rng, 0.0, 1.0)) * c.radius(theta) * margin;
    return {c.cy + r * std::sin(theta), c.cx + r * std::cos(theta)};
}

}  // namespace

int64_t SplitCounts::of(Split s) const {
    switch (s) {
        case Split::Training: return training;
        case Split::Validation: return validation;
        case Split::Test: return test;
    }
    return 0;
}

void SynthConfig::validate() const {
    if (per_class.training < 0 || per_class.validation < 0 || per_class.test < 0 || segmentation_pairs < 0)
        throw InvalidInput("corpus counts must be >= 0");
    if (image_size < 16) throw InvalidInput("synthetic image size must be >= 16");
    if (!(confound_strength >= 0.0 && confound_strength <= 1.0)) throw InvalidInput("confound strength must lie in [0,1]");
    if (distractor_textures < 0) throw InvalidInput("distractor texture count must be >= 0");
    if (gamma_choices.empty()) throw InvalidInput("gamma choices must be nonempty");
    for (double g : gamma_choices)
        if (!(g > 0.0)) throw InvalidInput("gamma choices must be > 0");
}

void to_json(nlohmann::json& j, const SynthConfig& c) {
    j = {{"per_class", {{"training", c.per_class.training},
                        {"validation", c.per_class.validation},
                        {"test", c.per_class.test}}},
         {"segmentation_pairs", c.segmentation_pairs},
         {"image_size", c.image_size},
         {"confound_strength", c.confound_strength},
         {"test_policy", c.test_policy == TestBackgroundPolicy::Shuffled ? "shuffled" : "held_out_textures"},
         {"distractor_textures", c.distractor_textures},
         {"gamma_choices", c.gamma_choices},
         {"seed", c.seed}};
}

void from_json(const nlohmann::json& j, SynthConfig& c) {
    if (j.contains("per_class")) {
        const auto& pc = j.at("per_class");
        c.per_class.training = pc.value("training", c.per_class.training);
        c.per_class.validation = pc.value("validation", c.per_class.validation);
        c.per_class.test = pc.value("test", c.per_class.test);
    }
    c.segmentation_pairs = j.value("segmentation_pairs", c.segmentation_pairs);
    c.image_size = j.value("image_size", c.image_size);
    c.confound_strength = j.value("confound_strength", c.confound_strength);
    if (j.contains("test_policy")) {
        const auto p = j.at("test_policy").get<std::string>();
        if (p == "shuffled") c.test_policy = TestBackgroundPolicy::Shuffled;
        else if (p == "held_out_textures") c.test_policy = TestBackgroundPolicy::HeldOutTextures;
        else throw InvalidInput("unknown test_policy: " + p);
    }
    c.distractor_textures = j.value("distractor_textures", c.distractor_textures);
    if (j.contains("gamma_choices")) c.gamma_choices = j.at("gamma_choices").get<std::vector<double>>();
    c.seed = j.value("seed", c.seed);
}

double LeafCurve::radius(double theta) const {
    double f = 1.0;
    for (size_t k = 0; k < 3; ++k) f += amplitude[k] * std::cos(static_cast<double>(k + 2) * theta + phase[k]);
    return r0 * f;
}

std::string LeafCurve::serialize() const {
    char buf[512];
    std::snprintf(buf, sizeof(buf), "%.17g;%.17g;%.17g;%.17g;%.17g;%.17g;%.17g;%.17g;%.17g", cx, cy, r0, amplitude[0],
                  phase[0], amplitude[1], phase[1], amplitude[2], phase[2]);
    return buf;
}

LeafCurve LeafCurve::parse(const std::string& text) {
    std::vector<double> v;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ';')) v.push_back(std::stod(item));
    if (v.size() != 9) throw DataError("malformed curve parameters: " + text);
    LeafCurve c;
    c.cx = v[0], c.cy = v[1], c.r0 = v[2];
    for (size_t k = 0; k < 3; ++k) c.amplitude[k] = v[3 + 2 * k], c.phase[k] = v[4 + 2 * k];
    return c;
}

MaskImage rasterize_leaf(const LeafCurve& curve, int64_t size) {
    auto mask = torch::zeros({size, size});
    auto acc = mask.accessor<float, 2>();
    for (int64_t i = 0; i < size; ++i) {
        for (int64_t j = 0; j < size; ++j) {
            const double dy = static_cast<double>(i) + 0.5 - curve.cy;
            const double dx = static_cast<double>(j) + 0.5 - curve.cx;
            if (std::hypot(dx, dy) <= curve.radius(std::atan2(dy, dx))) acc[i][j] = 1.0f;
        }
    }
    return MaskImage(mask, true);
}

Image render_texture(int64_t texture_id, uint64_t seed, int64_t size) {
    Rng rng(seed);
    const auto id = static_cast<double>(texture_id);
    // Hues skip the leaf-green band [70°, 160°).
    double hue = std::fmod(id * 137.508, 270.0);
    if (hue >= 70.0) hue += 90.0;
    const double sat = 0.55 + 0.35 * static_cast<double>((texture_id * 3) % 5) / 4.0;
    const double val = 0.6 + 0.35 * static_cast<double>((texture_id * 2) % 3) / 2.0;
    const Rgb c0 = hsv(hue, sat, val);
    const Rgb c1 = hsv(hue + 40.0, sat * 0.8, val * 0.55);
    const double scale = static_cast<double>(size) / 64.0;
    const double period = (6.0 + static_cast<double>((texture_id * 7) % 9)) * scale;
    const double angle = id * 0.7;
    const double phase = uniform(rng, 0.0, kTwoPi);
    const double ox = uniform(rng, 0.0, period), oy = uniform(rng, 0.0, period);
    const auto noise = value_noise(rng, size, std::max<int64_t>(2, size / 8));
    const auto grain = value_noise(rng, size, std::max<int64_t>(2, size / 2));

    Canvas canvas(size);
    for (int64_t i = 0; i < size; ++i) {
        for (int64_t j = 0; j < size; ++j) {
            const double y = static_cast<double>(i), x = static_cast<double>(j);
            const auto k = static_cast<size_t>(i * size + j);
            double p = 0.0;
            switch (texture_id % 5) {
                case 0: p = noise[k]; break;
                case 1: p = 0.5 + 0.5 * std::sin(kTwoPi * (x * std::cos(angle) + y * std::sin(angle)) / period + phase); break;
                case 2: p = (static_cast<int64_t>(std::floor((x + ox) / period) + std::floor((y + oy) / period)) % 2 == 0) ? 1.0 : 0.0; break;
                case 3: p = std::clamp(0.5 + 0.5 * std::sin(angle + phase) * (x / size - 0.5) + 0.5 * std::cos(angle + phase) * (y / size - 0.5) * 1.6, 0.0, 1.0); break;
                default: {
                    const double fy = std::fmod(y + oy, period) - period / 2.0;
                    const double fx = std::fmod(x + ox, period) - period / 2.0;
                    p = std::hypot(fx, fy) < period * 0.28 ? 1.0 : 0.0;
                }
            }
            Rgb c = mix(c0, c1, p);
            const auto g = static_cast<float>(0.94 + 0.12 * grain[k]);
            canvas.set(i, j, {c.r * g, c.g * g, c.b * g});
        }
    }
    return Image::trusted(canvas.tensor());
}

SynthSample render_sample(DiseaseLabel label, int64_t texture_id, double gamma, uint64_t seed, int64_t size) {
    Rng rng(seed);
    const LeafCurve curve = draw_curve(rng, size);
    const MaskImage mask = rasterize_leaf(curve, size);
    const Image background = render_texture(texture_id, derive_seed(seed, "background"), size);
    const double scale = static_cast<double>(size) / 64.0;

    Rgb leaf = {static_cast<float>(0.22 + uniform(rng, -0.04, 0.04)), static_cast<float>(0.52 + uniform(rng, -0.05, 0.05)),
                static_cast<float>(0.16 + uniform(rng, -0.04, 0.04))};
    if (label == DiseaseLabel::CMV) leaf = mix(leaf, {0.62f, 0.64f, 0.16f}, uniform(rng, 0.65, 0.85));
    const auto shading = value_noise(rng, size, std::max<int64_t>(2, size / 16));

    // Symptom layer: color per pixel where painted.
    std::vector<std::optional<Rgb>> symptom(static_cast<size_t>(size * size));
    auto paint_disc = [&](Spot at, double radius, Rgb color) {
        for (int64_t i = 0; i < size; ++i)
            for (int64_t j = 0; j < size; ++j)
                if (std::hypot(static_cast<double>(i) + 0.5 - at.y, static_cast<double>(j) + 0.5 - at.x) <= radius)
                    symptom[static_cast<size_t>(i * size + j)] = color;
    };
    auto paint_square = [&](Spot at, double half, double rot, Rgb color) {
        for (int64_t i = 0; i < size; ++i)
            for (int64_t j = 0; j < size; ++j) {
                const double dy = static_cast<double>(i) + 0.5 - at.y, dx = static_cast<double>(j) + 0.5 - at.x;
                const double u = dx * std::cos(rot) + dy * std::sin(rot), v = -dx * std::sin(rot) + dy * std::cos(rot);
                if (std::abs(u) <= half && std::abs(v) <= half) symptom[static_cast<size_t>(i * size + j)] = color;
            }
    };
    auto count = [&](int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); };

    switch (label) {
        case DiseaseLabel::MYSV:
            for (int n = count(14, 20); n > 0; --n) paint_disc(leaf_point(rng, curve, 0.85), 1.3 * scale, {0.88f, 0.82f, 0.22f});
            break;
        case DiseaseLabel::ZYMV: {
            const double cell = 4.0 * scale;
            const double ox = uniform(rng, 0.0, cell), oy = uniform(rng, 0.0, cell);
            const auto cells = static_cast<int64_t>(std::ceil(static_cast<double>(size) / cell)) + 2;
            std::vector<bool> light(static_cast<size_t>(cells * cells));
            for (size_t k = 0; k < light.size(); ++k) light[k] = uniform(rng, 0.0, 1.0) < 0.5;
            for (int64_t i = 0; i < size; ++i)
                for (int64_t j = 0; j < size; ++j) {
                    const auto ci = static_cast<int64_t>((static_cast<double>(i) + oy) / cell);
                    const auto cj = static_cast<int64_t>((static_cast<double>(j) + ox) / cell);
                    if (light[static_cast<size_t>(ci * cells + cj)])
                        symptom[static_cast<size_t>(i * size + j)] = Rgb{0.50f, 0.80f, 0.32f};
                }
            break;
        }
        case DiseaseLabel::CMV: break;  // tint only
        case DiseaseLabel::WMV:
            for (int n = count(3, 4); n > 0; --n) paint_disc(leaf_point(rng, curve, 0.7), 4.5 * scale, {0.74f, 0.84f, 0.62f});
            break;
        case DiseaseLabel::BrownSpot:
            for (int n = count(6, 9); n > 0; --n) {
                const auto at = leaf_point(rng, curve, 0.85);
                paint_disc(at, 2.4 * scale, {0.47f, 0.28f, 0.10f});
                paint_disc(at, 1.0 * scale, {0.30f, 0.16f, 0.06f});
            }
            break;
        case DiseaseLabel::DownyMildew:
            for (int n = count(5, 8); n > 0; --n)
                paint_square(leaf_point(rng, curve, 0.8), 2.5 * scale, uniform(rng, 0.0, kTwoPi), {0.78f, 0.68f, 0.22f});
            break;
        case DiseaseLabel::PowderyMildew:
            for (int n = count(25, 35); n > 0; --n) paint_disc(leaf_point(rng, curve, 0.9), 0.9 * scale, {0.95f, 0.95f, 0.92f});
            break;
        case DiseaseLabel::Healthy: break;
    }

    Canvas canvas(size);
    auto symptom_mask = torch::zeros({size, size});
    auto mask_acc = mask.tensor().accessor<float, 2>();
    auto sym_acc = symptom_mask.accessor<float, 2>();
    auto bg = background.tensor().accessor<float, 3>();
    for (int64_t i = 0; i < size; ++i) {
        for (int64_t j = 0; j < size; ++j) {
            const auto k = static_cast<size_t>(i * size + j);
            if (mask_acc[i][j] == 0.0f) {
                canvas.set(i, j, {bg[i][j][0], bg[i][j][1], bg[i][j][2]});
                continue;
            }
            Rgb c = leaf;
            if (symptom[k]) {
                c = *symptom[k];
                sym_acc[i][j] = 1.0f;
            }
            const auto shade = static_cast<float>(0.9 + 0.15 * shading[k]);
            canvas.set(i, j, {c.r * shade, c.g * shade, c.b * shade});
        }
    }
    auto pixels = canvas.tensor();
    if (gamma != 1.0) pixels = gamma_correct(pixels, gamma);
    return {Image::trusted(pixels), mask, MaskImage(symptom_mask, true), curve};
}

namespace {

std::vector<int64_t> balanced_deck(Rng& rng, int64_t first, int64_t pool, int64_t count) {
    std::vector<int64_t> deck;
    deck.reserve(static_cast<size_t>(count));
    std::vector<int64_t> cycle(static_cast<size_t>(pool));
    while (static_cast<int64_t>(deck.size()) < count) {
        for (int64_t t = 0; t < pool; ++t) cycle[static_cast<size_t>(t)] = first + t;
        std::shuffle(cycle.begin(), cycle.end(), rng);
        for (auto t : cycle) {
            if (static_cast<int64_t>(deck.size()) == count) break;
            deck.push_back(t);
        }
    }
    return deck;
}

std::array<int, kNumClasses> derangement(uint64_t seed) {
    Rng rng(seed);
    std::array<int, kNumClasses> perm{};
    for (int i = 0; i < kNumClasses; ++i) perm[i] = i;
    for (;;) {
        std::shuffle(perm.begin(), perm.end(), rng);
        bool fixed = false;
        for (int i = 0; i < kNumClasses; ++i) fixed = fixed || perm[i] == i;
        if (!fixed) return perm;
    }
}

std::string zero_pad(int64_t v, int width) {
    auto s = std::to_string(v);
    return std::string(static_cast<size_t>(std::max<int>(0, width - static_cast<int>(s.size()))), '0') + s;
}

}  // namespace

std::vector<ManifestRow> plan_corpus(const SynthConfig& cfg) {
    cfg.validate();
    std::vector<ManifestRow> rows;
    const auto shuffle = derangement(derive_seed(cfg.seed, "derangement"));
    for (auto split : {Split::Training, Split::Validation, Split::Test}) {
        const std::string sname(split_name(split));
        const bool held_out = split == Split::Test && cfg.test_policy == TestBackgroundPolicy::HeldOutTextures;
        for (int c = 0; c < kNumClasses; ++c) {
            const std::string cname(kLabelNames[c]);
            Rng rng(derive_seed(cfg.seed, "assign/" + sname + "/" + cname));
            const int64_t count = cfg.per_class.of(split);
            const auto deck = held_out ? balanced_deck(rng, cfg.held_out_base(), kNumClasses, count)
                                       : balanced_deck(rng, 0, cfg.open_pool_size(), count);
            int64_t canonical = c;
            if (split == Split::Test) canonical = held_out ? cfg.held_out_base() + c : shuffle[c];
            std::bernoulli_distribution confounded(cfg.confound_strength);
            std::uniform_int_distribution<size_t> pick_gamma(0, cfg.gamma_choices.size() - 1);
            for (int64_t k = 0; k < count; ++k) {
                ManifestRow row;
                row.filename = "classification/" + sname + "/" + cname + "/" + sname + "_" + cname + "_" + zero_pad(k, 5) + ".png";
                row.split = sname;
                row.label = label_from_index(c);
                row.texture_id = confounded(rng) ? canonical : deck[static_cast<size_t>(k)];
                row.gamma_applied = cfg.gamma_choices[pick_gamma(rng)];
                row.seed = derive_seed(cfg.seed, row.filename);
                rows.push_back(std::move(row));
            }
        }
    }
    Rng seg_rng(derive_seed(cfg.seed, "assign/segmentation"));
    const auto seg_deck = balanced_deck(seg_rng, 0, cfg.open_pool_size(), cfg.segmentation_pairs);
    for (int64_t i = 0; i < cfg.segmentation_pairs; ++i) {
        ManifestRow row;
        row.filename = "segmentation/images/seg_" + zero_pad(i, 5) + ".png";
        row.split = "segmentation";
        row.label = label_from_index(static_cast<int>(i % kNumClasses));
        row.texture_id = seg_deck[static_cast<size_t>(i)];
        row.gamma_applied = 1.0;
        row.seed = derive_seed(cfg.seed, row.filename);
        rows.push_back(std::move(row));
    }
    return rows;
}

namespace {

void write_atomic_text(const fs::path& path, const std::string& text) {
    const auto tmp = fs::path(path.string() + ".tmp");
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw DataError("cannot write " + path.string());
        out << text;
    }
    fs::rename(tmp, path);
}

void write_image_atomic(const fs::path& path, const Image& img) {
    // OpenCV picks the codec from the extension, so keep it on the temporary name.
    const auto tmp = path.parent_path() / (".tmp_" + path.filename().string());
    write_image(tmp, img);
    fs::rename(tmp, path);
}

std::string format_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

}  // namespace

CorpusPaths generate_corpus(const SynthConfig& cfg, const fs::path& out_root) {
    auto rows = plan_corpus(cfg);
    try {
        fs::create_directories(out_root);
        for (auto split : {Split::Training, Split::Validation, Split::Test})
            for (auto name : kLabelNames)
                fs::create_directories(out_root / "classification" / std::string(split_name(split)) / std::string(name));
        fs::create_directories(out_root / "segmentation" / "images");
        fs::create_directories(out_root / "segmentation" / "masks");
    } catch (const fs::filesystem_error& e) {
        throw DataError(std::string("cannot create corpus directories: ") + e.what());
    }

    std::ostringstream manifest;
    manifest << "filename,split,class,texture_id,curve_params,gamma_applied,seed\n";
    for (auto& row : rows) {
        const auto sample = render_sample(row.label, row.texture_id, row.gamma_applied, row.seed, cfg.image_size);
        row.curve_params = sample.curve.serialize();
        write_image_atomic(out_root / row.filename, sample.image);
        if (row.split == "segmentation") {
            const auto mask_path = out_root / "segmentation" / "masks" / fs::path(row.filename).filename();
            write_image_atomic(mask_path, Image::trusted(sample.mask.tensor().unsqueeze(2)));
        }
        manifest << row.filename << ',' << row.split << ',' << label_name(row.label) << ',' << row.texture_id << ','
                 << row.curve_params << ',' << format_double(row.gamma_applied) << ',' << row.seed << '\n';
    }
    const auto manifest_path = out_root / "manifest.csv";
    write_atomic_text(manifest_path, manifest.str());
    return {out_root / "classification", out_root / "segmentation", manifest_path};
}

std::vector<ManifestRow> read_manifest(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open manifest: " + path.string());
    std::string line;
    if (!std::getline(in, line) || line != "filename,split,class,texture_id,curve_params,gamma_applied,seed")
        throw DataError("manifest header mismatch: " + path.string());
    std::vector<ManifestRow> rows;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::vector<std::string> f;
        std::stringstream ss(line);
        std::string item;
        while (std::getline(ss, item, ',')) f.push_back(item);
        if (f.size() != 7) throw DataError("malformed manifest row: " + line);
        const auto label = parse_label(f[2]);
        if (!label) throw DataError("unknown class in manifest: " + f[2]);
        ManifestRow row;
        row.filename = f[0];
        row.split = f[1];
        row.label = *label;
        row.texture_id = std::stoll(f[3]);
        row.curve_params = f[4];
        row.gamma_applied = std::stod(f[5]);
        row.seed = std::stoull(f[6]);
        rows.push_back(std::move(row));
    }
    return rows;
}

double mutual_information(const std::vector<std::pair<int64_t, int>>& pairs) {
    if (pairs.empty()) return 0.0;
    std::map<std::pair<int64_t, int>, double> joint;
    std::map<int64_t, double> texture;
    std::map<int, double> label;
    for (const auto& p : pairs) {
        joint[p] += 1.0;
        texture[p.first] += 1.0;
        label[p.second] += 1.0;
    }
    const auto n = static_cast<double>(pairs.size());
    double mi = 0.0;
    for (const auto& [key, count] : joint) {
        const double pxy = count / n;
        mi += pxy * std::log(pxy / ((texture[key.first] / n) * (label[key.second] / n)));
    }
    return std::max(0.0, mi);
}

std::map<std::string, double> corpus_confound_audit(const fs::path& root, const fs::path& manifest) {
    const auto rows = read_manifest(manifest);
    std::map<std::string, std::vector<std::pair<int64_t, int>>> by_split;
    int64_t classification_rows = 0;
    for (const auto& row : rows) {
        if (!fs::exists(root / row.filename)) throw DataError("manifest entry missing from corpus: " + row.filename);
        if (row.split == "segmentation") continue;
        ++classification_rows;
        by_split[row.split].emplace_back(row.texture_id, to_index(row.label));
    }
    int64_t files = 0;
    if (fs::is_directory(root / "classification"))
        for (const auto& e : fs::recursive_directory_iterator(root / "classification"))
            if (e.is_regular_file() && has_image_extension(e.path())) ++files;
    if (files != classification_rows)
        throw DataError("corpus has " + std::to_string(files) + " classification images but the manifest lists " +
                        std::to_string(classification_rows));
    std::map<std::string, double> mi;
    for (const auto& [split, pairs] : by_split) mi[split] = mutual_information(pairs);
    return mi;
}

}  // namespace aop
