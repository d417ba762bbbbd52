#pragma once

#include <string>
#include <vector>

#include "advmesh/boxes.hpp"
#include "advmesh/deform.hpp"

namespace advmesh {

enum class IouMode { kBev, k3d };
enum class ApInterpolation { kR40, kR11 };

struct SceneDetections {
    std::vector<Detection> detections;
    std::vector<Box3D> gt_boxes;
};

// Single-class average precision at the given IoU threshold. Detections are
// pooled across scenes, sorted by score, and matched greedily (each GT at
// most once). 40-point interpolation by default, 11-point behind the flag.
// Throws when no scene has any GT box.
double average_precision(const std::vector<SceneDetections>& scenes, double iou_threshold,
                         IouMode mode, ApInterpolation interp = ApInterpolation::kR40);

// ASR := (p_o - p_a) / p_o. Throws when p_o <= 0. Negative values mean the
// attack improved detection.
double attack_success_rate(double p_o, double p_a);

struct InvisibilityReport {
    double l2 = 0.0;
    double laplacian = 0.0;
    double area_bev = 0.0;
    double volume = 0.0;
};

InvisibilityReport invisibility_report(const DeformationState& state, const TriangleMesh& mesh);

struct EvalReport {
    double map_bev = 0.0;   // precision with the evaluated mesh in place
    double map_3d = 0.0;
    double asr_bev = 0.0;
    double asr_3d = 0.0;
    InvisibilityReport invisibility;
    // Stored so the ASRs stay recomputable.
    double p_o_bev = 0.0, p_o_3d = 0.0;
    double p_vanilla_bev = 0.0, p_vanilla_3d = 0.0;

    std::string to_text() const;   // line-oriented key=value
    std::string to_json() const;
};

}  // namespace advmesh
