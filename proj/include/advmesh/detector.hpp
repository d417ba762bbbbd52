#pragma once

#include <array>
#include <memory>
#include <string>
#include <vector>

#include "advmesh/boxes.hpp"
#include "advmesh/pointcloud.hpp"

namespace advmesh {

// Pluggable detector. backward may only follow a matching forward and
// returns one xyz gradient per forwarded point. forward_frozen re-evaluates
// the last forward's detections with every discrete choice (anchor
// selection, NMS survivors, fit structure) pinned; finite-difference
// checks rely on it.
class DetectorContract {
 public:
    virtual ~DetectorContract() = default;
    virtual std::string name() const = 0;
    virtual bool differentiable() const = 0;
    virtual bool has_box_regression() const = 0;
    virtual int stages() const = 0;
    virtual std::vector<Detection> forward(const PointCloud& cloud) = 0;
    virtual std::vector<Detection> forward_frozen(const PointCloud& cloud) = 0;
    virtual std::vector<Vec3> backward(const std::vector<double>& dlogit,
                                       const std::vector<std::array<double, 7>>& dbox) = 0;
    // null for detectors that cannot run scenes in parallel (the bridge)
    virtual std::unique_ptr<DetectorContract> clone() const { return nullptr; }
};

struct GridSpec {
    double x_min = 0.0, x_max = 30.0;
    double y_min = -12.0, y_max = 12.0;
    double cell = 0.5;
    double bandwidth = 0.5;  // triangular soft-binning half-width

    int nx() const { return static_cast<int>(std::lround((x_max - x_min) / cell)); }
    int ny() const { return static_cast<int>(std::lround((y_max - y_min) / cell)); }
    double cx(int ix) const { return x_min + (ix + 0.5) * cell; }
    double cy(int iy) const { return y_min + (iy + 0.5) * cell; }
};

struct TemplateDetectorConfig {
    GridSpec grid;
    double anchor_l = 4.0, anchor_w = 1.7, anchor_h = 1.5;
    double roof_height = 1.5;
    double band_width = 0.05;   // logistic transition around band edges
    double w_body = 0.006;
    double w_above = -0.04;     // mass above the roof suppresses the car logit
    double bias = -4.0;
    double emission_threshold = 0.05;

    void validate() const;
};

// Analytic single-stage BEV detector: points are soft-binned into cells with
// bilinear weights, split into a body band (z in [0, roof]) and an
// above-roof band by smooth logistic indicators, and pooled over the anchor
// footprint (anchor box at each cell center, yaws 0 and pi/2). No box
// regression: box gradients are zero.
class TemplateDetector : public DetectorContract {
 public:
    explicit TemplateDetector(const TemplateDetectorConfig& config);

    std::string name() const override { return "template"; }
    bool differentiable() const override { return true; }
    bool has_box_regression() const override { return false; }
    int stages() const override { return 1; }
    std::vector<Detection> forward(const PointCloud& cloud) override;
    std::vector<Detection> forward_frozen(const PointCloud& cloud) override;
    std::vector<Vec3> backward(const std::vector<double>& dlogit,
                               const std::vector<std::array<double, 7>>& dbox) override;
    std::unique_ptr<DetectorContract> clone() const override {
        return std::make_unique<TemplateDetector>(*this);
    }

    const TemplateDetectorConfig& config() const { return config_; }
    // logit of one anchor against a cloud, exposed for fixtures
    double anchor_logit(const PointCloud& cloud, int ix, int iy, int yaw_idx) const;

 private:
    struct CellFeatures {
        std::vector<double> body;
        std::vector<double> above;
    };
    CellFeatures features(const PointCloud& cloud) const;
    double pooled(const std::vector<double>& cells, int ix, int iy, int yaw_idx) const;
    std::vector<Detection> emit(const PointCloud& cloud, bool frozen);

    TemplateDetectorConfig config_;
    PointCloud cached_cloud_;
    std::vector<std::array<int, 3>> cached_anchors_;  // ix, iy, yaw_idx
    bool has_forward_ = false;
};

}  // namespace advmesh
