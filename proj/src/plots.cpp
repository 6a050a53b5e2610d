#include "aop/plots.hpp"

#include <algorithm>
#include <cstdio>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "aop/dataset_io.hpp"
#include "aop/errors.hpp"

namespace fs = std::filesystem;

namespace aop {

namespace {

const cv::Scalar kBlack(0, 0, 0);
const cv::Scalar kWhite(255, 255, 255);

void save_png(const fs::path& path, const cv::Mat& mat) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    if (!cv::imwrite(path.string(), mat)) throw DataError("cannot write plot: " + path.string());
}

void text(cv::Mat& m, const std::string& s, cv::Point at, double scale = 0.4, cv::Scalar color = kBlack) {
    cv::putText(m, s, at, cv::FONT_HERSHEY_SIMPLEX, scale, color, 1, cv::LINE_AA);
}

}  // namespace

void plot_confusion_matrix(const ConfusionMatrix& cm, const std::string& title, const fs::path& path) {
    constexpr int cell = 48, left = 110, top = 40;
    cv::Mat img(top + cell * kNumClasses + 100, left + cell * kNumClasses + 20, CV_8UC3, kWhite);
    text(img, title, {10, 22}, 0.5);
    for (int t = 0; t < kNumClasses; ++t) {
        const double row = static_cast<double>(std::max<int64_t>(1, cm.row_sum(label_from_index(t))));
        for (int p = 0; p < kNumClasses; ++p) {
            const auto count = cm.at(label_from_index(t), label_from_index(p));
            const double frac = static_cast<double>(count) / row;
            cv::Mat px(1, 1, CV_8UC1, cv::Scalar(static_cast<int>(std::lround(255.0 * frac))));
            cv::Mat colored;
            cv::applyColorMap(px, colored, cv::COLORMAP_VIRIDIS);
            const auto c = colored.at<cv::Vec3b>(0, 0);
            const cv::Rect r(left + p * cell, top + t * cell, cell, cell);
            cv::rectangle(img, r, cv::Scalar(c[0], c[1], c[2]), cv::FILLED);
            text(img, std::to_string(count), {r.x + 6, r.y + cell / 2 + 5}, 0.4, frac > 0.5 ? kBlack : kWhite);
        }
        text(img, std::string(kLabelNames[t]), {6, top + t * cell + cell / 2 + 5});
    }
    for (int p = 0; p < kNumClasses; ++p) {
        cv::Mat label_img(20, 100, CV_8UC3, kWhite);
        text(label_img, std::string(kLabelNames[p]), {2, 14});
        cv::Mat rotated;
        cv::rotate(label_img, rotated, cv::ROTATE_90_CLOCKWISE);
        rotated.copyTo(img(cv::Rect(left + p * cell + (cell - 20) / 2, top + cell * kNumClasses + 0, 20, 100)));
    }
    save_png(path, img);
}

void plot_bar_chart(const std::vector<BarGroup>& groups, const std::vector<std::string>& series, const std::string& title,
                    const fs::path& path) {
    constexpr int group_w = 140, bar_gap = 4, height = 300, top = 50, bottom = 60, left = 50;
    const int width = left + group_w * static_cast<int>(std::max<size_t>(1, groups.size())) + 20;
    cv::Mat img(top + height + bottom, width, CV_8UC3, kWhite);
    text(img, title, {10, 22}, 0.5);
    const std::vector<cv::Scalar> palette = {{180, 119, 31}, {14, 127, 255}, {44, 160, 44}, {40, 39, 214}, {189, 103, 148}};
    for (int tick = 0; tick <= 10; tick += 2) {
        const int y = top + height - height * tick / 10;
        cv::line(img, {left - 4, y}, {width - 10, y}, cv::Scalar(220, 220, 220));
        text(img, std::to_string(tick * 10), {8, y + 4}, 0.35);
    }
    const int n_series = static_cast<int>(std::max<size_t>(1, series.size()));
    const int bar_w = (group_w - 20) / n_series - bar_gap;
    for (size_t g = 0; g < groups.size(); ++g) {
        const int x0 = left + static_cast<int>(g) * group_w + 10;
        for (size_t s = 0; s < groups[g].values.size(); ++s) {
            const double v = std::clamp(groups[g].values[s], 0.0, 1.0);
            const int h = static_cast<int>(std::lround(v * height));
            const int x = x0 + static_cast<int>(s) * (bar_w + bar_gap);
            cv::rectangle(img, cv::Rect(x, top + height - h, bar_w, h), palette[s % palette.size()], cv::FILLED);
            char buf[16];
            std::snprintf(buf, sizeof(buf), "%.1f", 100.0 * v);
            text(img, buf, {x, top + height - h - 4}, 0.3);
        }
        text(img, groups[g].label, {x0, top + height + 18}, 0.4);
    }
    for (size_t s = 0; s < series.size(); ++s) {
        const int x = left + static_cast<int>(s) * 110;
        cv::rectangle(img, cv::Rect(x, top + height + 32, 12, 12), palette[s % palette.size()], cv::FILLED);
        text(img, series[s], {x + 16, top + height + 43}, 0.4);
    }
    save_png(path, img);
}

Image gradcam_overlay(const Image& img, const EvidenceMap& map, double alpha) {
    if (map.heat.size(0) != img.height() || map.heat.size(1) != img.width())
        throw InvalidInput("evidence map and image dimensions differ");
    auto heat8 = (map.heat * 255.0f).round().clamp(0, 255).to(torch::kUInt8).contiguous();
    cv::Mat gray(static_cast<int>(img.height()), static_cast<int>(img.width()), CV_8UC1, heat8.data_ptr<uint8_t>());
    cv::Mat colored;
    cv::applyColorMap(gray, colored, cv::COLORMAP_JET);
    cv::cvtColor(colored, colored, cv::COLOR_BGR2RGB);
    auto heat_rgb = torch::from_blob(colored.data, {colored.rows, colored.cols, 3}, torch::kUInt8).clone().to(torch::kFloat32) / 255.0f;
    auto base = img.channels() == 1 ? img.tensor().expand({img.height(), img.width(), 3}) : img.tensor();
    const auto a = static_cast<float>(alpha);
    return Image::trusted((base * (1.0f - a) + heat_rgb * a).clamp(0.0, 1.0));
}

}  // namespace aop
