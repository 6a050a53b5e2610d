#include "aop/report.hpp"

#include <chrono>
#include <cstdio>
#include <ctime>
#include <fstream>

#include "aop/errors.hpp"

namespace fs = std::filesystem;

namespace aop {

void ArmResult::set_split(Split s, const ConfusionMatrix& cm) {
    confusion[static_cast<int>(s)] = cm;
    accuracy[static_cast<int>(s)] = cm.accuracy();
    gap = accuracy_of(Split::Validation) - accuracy_of(Split::Test);
}

nlohmann::json MetricsReport::to_json() const {
    nlohmann::json arms_json = nlohmann::json::array();
    for (const auto& a : arms) {
        nlohmann::json acc, conf;
        for (int s = 0; s < 3; ++s) {
            const std::string name(kSplitNames[s]);
            acc[name] = a.accuracy[s];
            conf[name] = a.confusion[s].counts();
        }
        nlohmann::json arm = {{"arm", a.arm},
                              {"pretreat", a.pretreat_tag},
                              {"classifier_config_hash", a.classifier_config_hash},
                              {"accuracy", acc},
                              {"confusion", conf},
                              {"gap", a.gap},
                              {"gradcam_images", a.gradcam_images}};
        arm["gradcam_overlap"] = a.gradcam_overlap ? nlohmann::json(*a.gradcam_overlap) : nlohmann::json(nullptr);
        arms_json.push_back(arm);
    }
    nlohmann::json seg = nlohmann::json::object();
    for (const auto& [variant, s] : segmentation)
        seg[variant] = {{"precision", s.precision}, {"recall", s.recall}, {"f1", s.f1}};
    return {{"class_names", kLabelNames},
            {"arms", arms_json},
            {"segmentation", seg},
            {"provenance",
             {{"config_hash", provenance.config_hash},
              {"git_revision", provenance.git_revision},
              {"started", provenance.started},
              {"finished", provenance.finished}}}};
}

MetricsReport MetricsReport::from_json(const nlohmann::json& j) {
    MetricsReport r;
    for (const auto& a : j.at("arms")) {
        ArmResult arm;
        arm.arm = a.at("arm").get<std::string>();
        arm.pretreat_tag = a.at("pretreat").get<std::string>();
        arm.classifier_config_hash = a.at("classifier_config_hash").get<std::string>();
        for (int s = 0; s < 3; ++s) {
            const std::string name(kSplitNames[s]);
            arm.accuracy[s] = a.at("accuracy").at(name).get<double>();
            arm.confusion[s] = ConfusionMatrix(a.at("confusion").at(name).get<ConfusionMatrix::Counts>());
        }
        arm.gap = a.at("gap").get<double>();
        if (!a.at("gradcam_overlap").is_null()) arm.gradcam_overlap = a.at("gradcam_overlap").get<double>();
        arm.gradcam_images = a.value("gradcam_images", int64_t{0});
        r.arms.push_back(std::move(arm));
    }
    for (const auto& [variant, s] : j.at("segmentation").items())
        r.segmentation[variant] = {s.at("precision").get<double>(), s.at("recall").get<double>(), s.at("f1").get<double>()};
    const auto& p = j.at("provenance");
    r.provenance = {p.value("config_hash", ""), p.value("git_revision", ""), p.value("started", ""), p.value("finished", "")};
    return r;
}

void MetricsReport::save(const fs::path& path) const {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path);
    if (!out) throw DataError("cannot write report: " + path.string());
    out << to_json().dump(2) << '\n';
}

MetricsReport MetricsReport::load(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot read report: " + path.string());
    nlohmann::json j;
    in >> j;
    return from_json(j);
}

void MetricsReport::write_accuracy_csv(const fs::path& path) const {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write " + path.string());
    out.precision(10);
    out << "arm,training,validation,test,gap\n";
    for (const auto& a : arms)
        out << a.arm << ',' << a.accuracy[0] << ',' << a.accuracy[1] << ',' << a.accuracy[2] << ',' << a.gap << '\n';
}

void write_segmentation_csv(const fs::path& path, const std::vector<std::pair<std::string, SegmentationScores>>& rows) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path);
    if (!out) throw DataError("cannot write " + path.string());
    out.precision(10);
    out << "variant,precision,recall,f1\n";
    for (const auto& [variant, s] : rows) out << variant << ',' << s.precision << ',' << s.recall << ',' << s.f1 << '\n';
}

std::string utc_timestamp() {
    const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

std::string git_revision() {
    std::string out;
    if (FILE* pipe = popen("git rev-parse HEAD 2>/dev/null", "r")) {
        char buf[128];
        while (fgets(buf, sizeof(buf), pipe)) out += buf;
        pclose(pipe);
    }
    while (!out.empty() && (out.back() == '\n' || out.back() == '\r')) out.pop_back();
    return out.empty() ? "unknown" : out;
}

}  // namespace aop
