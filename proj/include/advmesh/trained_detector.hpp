#pragma once

#include <array>
#include <string>
#include <vector>

#include "advmesh/detector.hpp"
#include "advmesh/scene.hpp"

namespace advmesh {

struct PillarTrainOptions {
    double reg_rate = 0.05;
    double weight_decay = 1e-4;
    double pos_iou = 0.55;       // anchors at or above this BEV IoU are positive
    double ignore_radius = 2.5;  // near-GT anchors that are neither side
    double nms_iou = 0.25;       // suppresses the crossed-orientation duplicate
    int max_candidates = 64;
};

// Logistic-regression detector over footprint-pooled pillar features (body
// density, above-roof density, 4-bin height histogram, log1p-compressed)
// with a linear offset head (dx, dy, dyaw) on box-fit features. The fit
// estimates the object frame from scan-line segment directions (fourth-order
// complex moments are invariant to which faces are visible), soft min/max
// extents and a visibility-blended center; all of it is smooth in the point
// coordinates and differentiated with the reverse-mode tape, while discrete
// choices (region, pair list, long-axis pick, NMS) are frozen per forward.
class TrainedPillarDetector : public DetectorContract {
 public:
    explicit TrainedPillarDetector(const TemplateDetectorConfig& base,
                                   const PillarTrainOptions& opts = {});

    std::string name() const override { return "trained_pillar"; }
    bool differentiable() const override { return true; }
    bool has_box_regression() const override { return true; }
    int stages() const override { return 1; }
    std::vector<Detection> forward(const PointCloud& cloud) override;
    std::vector<Detection> forward_frozen(const PointCloud& cloud) override;
    std::vector<Vec3> backward(const std::vector<double>& dlogit,
                               const std::vector<std::array<double, 7>>& dbox) override;
    std::unique_ptr<DetectorContract> clone() const override {
        return std::make_unique<TrainedPillarDetector>(*this);
    }

    std::string save_weights() const;
    static TrainedPillarDetector load_weights(const std::string& json_text);

    // training-time internals, also exercised directly by tests
    static constexpr int kFeatures = 6;
    std::vector<double> anchor_features(const PointCloud& cloud, int ix, int iy,
                                        int yaw_idx) const;
    double classification_loss(const std::vector<std::array<double, kFeatures>>& x,
                               const std::vector<int>& y) const;

    std::array<double, kFeatures> theta{};
    double theta0 = 0.0;
    std::array<std::array<double, 3>, 3> head_w{{{1, 0, 0}, {0, 1, 0}, {0, 0, 1}}};
    std::array<double, 3> head_b{};

    const TemplateDetectorConfig& base() const { return base_; }
    const PillarTrainOptions& options() const { return opts_; }

    struct FitStructure {
        std::vector<int> region;                    // cloud point indices
        std::vector<std::pair<int, int>> pairs;     // indices into region
        int axis_quarter = 0;                       // pi/2 multiples added to psi
        double yaw_wrap = 0.0;                      // constant so dpsi lands in (-pi/2, pi/2]
        bool empty = false;
        bool psi_valid = true;
    };
    FitStructure build_fit_structure(const PointCloud& cloud, double ax, double ay,
                                     double anchor_yaw) const;
    std::array<double, 3> fit_features(const PointCloud& cloud, const FitStructure& fs,
                                       double ax, double ay, double anchor_yaw) const;
    // gradient of (seed . fit_features) w.r.t. the cloud points, accumulated
    // into grads
    void fit_backward(const PointCloud& cloud, const FitStructure& fs, double ax, double ay,
                      double anchor_yaw, const std::array<double, 3>& seed,
                      std::vector<Vec3>& grads) const;

 private:
    struct CellFeatures {
        std::vector<std::array<double, kFeatures>> cells;
    };
    CellFeatures cell_features(const PointCloud& cloud) const;
    std::array<double, kFeatures> pooled(const CellFeatures& f, int ix, int iy,
                                         int yaw_idx) const;
    double logit_from_raw(const std::array<double, kFeatures>& raw) const;

    struct DetCache {
        int ix = 0, iy = 0, yaw_idx = 0;
        std::array<double, kFeatures> raw{};
        FitStructure fit;
    };
    Detection make_detection(const PointCloud& cloud, const CellFeatures& f, DetCache& cache,
                             bool rebuild_fit);

    TemplateDetectorConfig base_;
    PillarTrainOptions opts_;
    PointCloud cached_cloud_;
    std::vector<DetCache> cached_dets_;
    bool has_forward_ = false;

    friend TrainedPillarDetector train_pillar_logistic(const std::vector<SceneSample>&, int,
                                                       double, const TemplateDetectorConfig&,
                                                       const PillarTrainOptions&);
};

// Full-batch gradient descent: class-balanced cross-entropy for the logistic
// weights, smooth-L1 on positive anchors for the offset head. Throws when
// the scenes yield a single-class anchor set.
TrainedPillarDetector train_pillar_logistic(const std::vector<SceneSample>& scenes, int epochs,
                                            double rate, const TemplateDetectorConfig& base,
                                            const PillarTrainOptions& opts = {});

}  // namespace advmesh
