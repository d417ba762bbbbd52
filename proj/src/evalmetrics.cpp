#include "advmesh/evalmetrics.hpp"

#include <algorithm>
#include <stdexcept>

#include <json.hpp>

namespace advmesh {

double average_precision(const std::vector<SceneDetections>& scenes, double iou_threshold,
                         IouMode mode, ApInterpolation interp) {
    size_t total_gt = 0;
    for (const auto& s : scenes) total_gt += s.gt_boxes.size();
    if (total_gt == 0)
        throw std::invalid_argument("average_precision: no ground-truth boxes, recall undefined");

    struct Ranked {
        double score;
        int scene;
        int det;
    };
    std::vector<Ranked> ranked;
    for (size_t s = 0; s < scenes.size(); ++s)
        for (size_t d = 0; d < scenes[s].detections.size(); ++d)
            ranked.push_back({scenes[s].detections[d].score, static_cast<int>(s),
                              static_cast<int>(d)});
    std::sort(ranked.begin(), ranked.end(), [](const Ranked& a, const Ranked& b) {
        if (a.score != b.score) return a.score > b.score;
        if (a.scene != b.scene) return a.scene < b.scene;
        return a.det < b.det;
    });

    std::vector<std::vector<char>> gt_used(scenes.size());
    for (size_t s = 0; s < scenes.size(); ++s) gt_used[s].assign(scenes[s].gt_boxes.size(), 0);

    auto iou = [&](const Box3D& a, const Box3D& b) {
        return mode == IouMode::kBev ? bev_iou(a, b) : iou_3d(a, b);
    };

    std::vector<double> precision, recall;
    precision.reserve(ranked.size());
    recall.reserve(ranked.size());
    int tp = 0, fp = 0;
    for (const auto& r : ranked) {
        const auto& det = scenes[r.scene].detections[r.det];
        int best_gt = -1;
        double best_iou = 0.0;
        for (size_t g = 0; g < scenes[r.scene].gt_boxes.size(); ++g) {
            if (gt_used[r.scene][g]) continue;
            double v = iou(det.box, scenes[r.scene].gt_boxes[g]);
            if (v > best_iou) { best_iou = v; best_gt = static_cast<int>(g); }
        }
        if (best_gt >= 0 && best_iou >= iou_threshold) {
            gt_used[r.scene][best_gt] = 1;
            ++tp;
        } else {
            ++fp;
        }
        precision.push_back(static_cast<double>(tp) / (tp + fp));
        recall.push_back(static_cast<double>(tp) / static_cast<double>(total_gt));
    }

    // Precision envelope: best precision at recall >= r.
    std::vector<double> suffix_max(precision.size());
    for (int i = static_cast<int>(precision.size()) - 1; i >= 0; --i)
        suffix_max[i] = std::max(precision[i],
                                 i + 1 < static_cast<int>(precision.size()) ? suffix_max[i + 1] : 0.0);
    auto envelope = [&](double r) {
        auto it = std::lower_bound(recall.begin(), recall.end(), r);
        if (it == recall.end()) return 0.0;
        return suffix_max[static_cast<size_t>(it - recall.begin())];
    };

    double ap = 0.0;
    if (interp == ApInterpolation::kR40) {
        for (int i = 1; i <= 40; ++i) ap += envelope(i / 40.0);
        ap /= 40.0;
    } else {
        for (int i = 0; i <= 10; ++i) ap += envelope(i / 10.0);
        ap /= 11.0;
    }
    return ap;
}

double attack_success_rate(double p_o, double p_a) {
    if (p_o <= 0.0) throw std::invalid_argument("attack_success_rate: p_o must be > 0");
    return (p_o - p_a) / p_o;
}

InvisibilityReport invisibility_report(const DeformationState& state, const TriangleMesh& mesh) {
    InvisibilityReport r;
    r.l2 = l2_norm(state);
    r.laplacian = laplacian_loss(mesh).value;
    r.area_bev = bev_area(mesh);
    r.volume = signed_volume(mesh);
    return r;
}

std::string EvalReport::to_text() const {
    char buf[1024];
    std::snprintf(buf, sizeof(buf),
                  "map_bev=%.6f\nmap_3d=%.6f\nasr_bev=%.6f\nasr_3d=%.6f\n"
                  "l2=%.6f\nlaplacian=%.6f\narea_bev=%.6f\nvolume=%.6f\n"
                  "p_o_bev=%.6f\np_o_3d=%.6f\np_vanilla_bev=%.6f\np_vanilla_3d=%.6f\n",
                  map_bev, map_3d, asr_bev, asr_3d, invisibility.l2, invisibility.laplacian,
                  invisibility.area_bev, invisibility.volume, p_o_bev, p_o_3d, p_vanilla_bev,
                  p_vanilla_3d);
    return buf;
}

std::string EvalReport::to_json() const {
    nlohmann::json j{
        {"map_bev", map_bev},
        {"map_3d", map_3d},
        {"asr_bev", asr_bev},
        {"asr_3d", asr_3d},
        {"l2", invisibility.l2},
        {"laplacian", invisibility.laplacian},
        {"area_bev", invisibility.area_bev},
        {"volume", invisibility.volume},
        {"p_o_bev", p_o_bev},
        {"p_o_3d", p_o_3d},
        {"p_vanilla_bev", p_vanilla_bev},
        {"p_vanilla_3d", p_vanilla_3d},
    };
    return j.dump(2);
}

}  // namespace advmesh
