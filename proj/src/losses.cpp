#include "advmesh/losses.hpp"

#include <cmath>
#include <stdexcept>

namespace advmesh {

void LossSpec::validate() const {
    if (iou_factor == IouFactor::kAbsent && score_factor == ScoreFactor::kAbsent)
        throw std::invalid_argument("loss spec: at least one factor must be present");
    if (form == LossForm::kLogBarrier && score_factor == ScoreFactor::kAbsent)
        throw std::invalid_argument("loss spec: log_barrier requires a score factor");
    if (form == LossForm::kLogBarrier && score_factor == ScoreFactor::kLiveLogit)
        throw std::invalid_argument("loss spec: log_barrier takes a score, not a raw logit");
    if (lambda < 0.0) throw std::invalid_argument("loss spec: lambda must be >= 0");
}

LossSpec LossSpec::preset(const std::string& name) {
    LossSpec s;
    if (name == "ml_iou") {
        s.iou_factor = IouFactor::kLive;
        s.score_factor = ScoreFactor::kAbsent;
        s.form = LossForm::kProduct;
    } else if (name == "ml_scoreweight") {
        s.iou_factor = IouFactor::kLive;
        s.score_factor = ScoreFactor::kFrozenScore;
        s.form = LossForm::kProduct;
    } else if (name == "mr_logitbar") {
        s.iou_factor = IouFactor::kAbsent;
        s.score_factor = ScoreFactor::kLiveScore;
        s.form = LossForm::kLogBarrier;
    } else if (name == "mr_phyadv") {
        s.iou_factor = IouFactor::kFrozen;
        s.score_factor = ScoreFactor::kLiveScore;
        s.form = LossForm::kLogBarrier;
    } else if (name == "c_product") {
        s.iou_factor = IouFactor::kLive;
        s.score_factor = ScoreFactor::kLiveScore;
        s.form = LossForm::kProduct;
    } else if (name == "c_logit") {
        s.iou_factor = IouFactor::kLive;
        s.score_factor = ScoreFactor::kLiveLogit;
        s.form = LossForm::kProduct;
    } else {
        throw std::invalid_argument("unknown loss preset: " + name);
    }
    s.validate();
    return s;
}

std::string LossSpec::preset_name() const {
    for (const char* name :
         {"ml_iou", "ml_scoreweight", "mr_logitbar", "mr_phyadv", "c_product", "c_logit"}) {
        LossSpec p = preset(name);
        if (p.iou_factor == iou_factor && p.score_factor == score_factor && p.form == form)
            return name;
    }
    return "custom";
}

std::vector<RelevantPair> relevance_filter(const std::vector<Detection>& detections,
                                           const std::vector<Box3D>& gt_boxes,
                                           const LossSpec& spec) {
    std::vector<RelevantPair> pairs;
    for (size_t d = 0; d < detections.size(); ++d) {
        if (detections[d].score <= spec.relevance_score_min) continue;
        double best = 0.0;
        int best_gt = -1;
        for (size_t g = 0; g < gt_boxes.size(); ++g) {
            const double iou = spec.relevance_iou_mode == IouMode::kBev
                                   ? bev_iou(detections[d].box, gt_boxes[g])
                                   : iou_3d(detections[d].box, gt_boxes[g]);
            if (iou > best) {
                best = iou;
                best_gt = static_cast<int>(g);
            }
        }
        if (best_gt >= 0 && best > spec.relevance_iou_min)
            pairs.push_back({static_cast<int>(d), best_gt, best});
    }
    return pairs;
}

namespace {

double pair_iou(const Box3D& det, const Box3D& gt, IouMode mode) {
    return mode == IouMode::kBev ? bev_iou(det, gt) : iou_3d(det, gt);
}

constexpr double kSaturation = 1.0 - 1e-12;

}  // namespace

MisdetectionResult misdetection_loss(const std::vector<Detection>& detections,
                                     const std::vector<Box3D>& gt_boxes,
                                     const std::vector<RelevantPair>& pairs,
                                     const LossSpec& spec) {
    spec.validate();
    MisdetectionResult out;
    out.dlogit.assign(detections.size(), 0.0);
    out.dbox.assign(detections.size(), std::array<double, 7>{});
    for (const auto& pair : pairs) {
        const Detection& det = detections.at(pair.detection_index);
        const Box3D& gt = gt_boxes.at(pair.gt_index);

        double iou_term = 1.0;
        bool iou_live = false;
        if (spec.iou_factor != IouFactor::kAbsent) {
            iou_term = pair_iou(det.box, gt, spec.relevance_iou_mode);
            iou_live = spec.iou_factor == IouFactor::kLive;
        }

        double score_term = 1.0;
        double dscore_dlogit = 0.0;  // derivative of the score term w.r.t. the logit
        const double sigma = det.score;
        if (spec.score_factor != ScoreFactor::kAbsent) {
            if (spec.form == LossForm::kLogBarrier) {
                if (sigma >= kSaturation) {
                    score_term = -std::log(1e-12);  // saturated, flat
                    ++out.saturated;
                } else {
                    score_term = -std::log(1.0 - sigma);
                    dscore_dlogit = sigma;  // d/ds of -log(1-sigmoid(s))
                }
            } else if (spec.score_factor == ScoreFactor::kLiveLogit) {
                score_term = det.logit;
                dscore_dlogit = 1.0;
            } else {
                score_term = sigma;
                dscore_dlogit = sigma * (1.0 - sigma);
            }
            if (spec.score_factor == ScoreFactor::kFrozenScore) dscore_dlogit = 0.0;
        }

        out.value += iou_term * score_term;
        if (spec.score_factor != ScoreFactor::kAbsent && dscore_dlogit != 0.0)
            out.dlogit[pair.detection_index] += iou_term * dscore_dlogit;
        if (iou_live) {
            // central finite differences over the 7 box parameters
            constexpr double kH = 1e-4;
            auto params = det.box.to_array();
            auto& dbox = out.dbox[pair.detection_index];
            for (int k = 0; k < 7; ++k) {
                auto hi = params, lo = params;
                hi[k] += kH;
                lo[k] -= kH;
                const double f_hi = pair_iou(Box3D::from_array(hi), gt, spec.relevance_iou_mode);
                const double f_lo = pair_iou(Box3D::from_array(lo), gt, spec.relevance_iou_mode);
                dbox[k] += score_term * (f_hi - f_lo) / (2.0 * kH);
            }
        }
    }
    return out;
}

TotalLoss total_loss(double misdetection_value, const TriangleMesh& mesh, double lambda) {
    TotalLoss out;
    out.misdetection = misdetection_value;
    LaplacianResult lap = laplacian_loss(mesh);
    out.laplacian = lap.value;
    out.value = misdetection_value + lambda * lap.value;
    out.laplacian_gradient = std::move(lap.gradient);
    for (auto& g : out.laplacian_gradient) g *= lambda;
    return out;
}

}  // namespace advmesh
