#pragma once

#include <optional>
#include <string>
#include <vector>

#include "advmesh/boxes.hpp"
#include "advmesh/evalmetrics.hpp"
#include "advmesh/mesh.hpp"

namespace advmesh {

enum class IouFactor { kAbsent, kFrozen, kLive };
enum class ScoreFactor { kAbsent, kFrozenScore, kLiveScore, kLiveLogit };
enum class LossForm { kLogBarrier, kProduct };
enum class StageSelector { kSingle, kS1, kS2 };

// One configurable misdetection loss covering the whole family: per matched
// pair, [iou term] x [score term], where frozen factors contribute value but
// no gradient. The log-barrier score term is -log(1 - sigmoid(s)).
struct LossSpec {
    IouFactor iou_factor = IouFactor::kLive;
    ScoreFactor score_factor = ScoreFactor::kLiveLogit;
    LossForm form = LossForm::kProduct;
    double relevance_score_min = 0.1;
    double relevance_iou_min = 0.1;
    IouMode relevance_iou_mode = IouMode::k3d;
    double lambda = 0.001;  // Laplacian weight
    StageSelector stage = StageSelector::kSingle;

    void validate() const;

    // named presets: ml_iou, ml_scoreweight, mr_logitbar, mr_phyadv,
    // c_product, c_logit
    static LossSpec preset(const std::string& name);
    std::string preset_name() const;  // best-effort reverse lookup
};

struct RelevantPair {
    int detection_index = 0;
    int gt_index = 0;
    double iou = 0.0;  // in the relevance mode
};

// Detections whose score and max-IoU against the ground truth both clear the
// relevance thresholds, paired with that ground-truth box.
std::vector<RelevantPair> relevance_filter(const std::vector<Detection>& detections,
                                           const std::vector<Box3D>& gt_boxes,
                                           const LossSpec& spec);

struct MisdetectionResult {
    double value = 0.0;
    // one entry per detection passed in (zero outside the matched pairs)
    std::vector<double> dlogit;
    std::vector<std::array<double, 7>> dbox;
    int saturated = 0;  // score terms clamped at sigma(s) ~ 1
};

// IoU gradients with respect to the 7 box parameters use central finite
// differences (h = 1e-4); analytic derivatives of the clipped polygon are
// fragile at vertex crossings.
MisdetectionResult misdetection_loss(const std::vector<Detection>& detections,
                                     const std::vector<Box3D>& gt_boxes,
                                     const std::vector<RelevantPair>& pairs,
                                     const LossSpec& spec);

struct TotalLoss {
    double value = 0.0;
    double misdetection = 0.0;
    double laplacian = 0.0;
    std::vector<Vec3> laplacian_gradient;  // per mesh vertex
};

// l = L + lambda * phi(mesh); the detector/render chain contributes the
// misdetection part of the vertex gradient, this adds the Laplacian part.
TotalLoss total_loss(double misdetection_value, const TriangleMesh& mesh, double lambda);

}  // namespace advmesh
