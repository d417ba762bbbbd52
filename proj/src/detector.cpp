#include "advmesh/detector.hpp"

#include <cmath>
#include <stdexcept>

namespace advmesh {

void TemplateDetectorConfig::validate() const {
    if (grid.cell <= 0.0) throw std::invalid_argument("template config: cell size must be > 0");
    if (grid.bandwidth <= 0.0) throw std::invalid_argument("template config: bandwidth must be > 0");
    if (grid.x_max <= grid.x_min || grid.y_max <= grid.y_min)
        throw std::invalid_argument("template config: empty grid extent");
    if (anchor_l <= 0.0 || anchor_w <= 0.0 || anchor_h <= 0.0)
        throw std::invalid_argument("template config: anchor size must be positive");
    if (band_width <= 0.0) throw std::invalid_argument("template config: band width must be > 0");
}

namespace {

inline double tri(double u) {
    double a = 1.0 - std::abs(u);
    return a > 0.0 ? a : 0.0;
}

// z-band indicators with logistic transitions
inline double body_band(double z, double roof, double w) {
    return sigmoid(z / w) * sigmoid((roof - z) / w);
}
inline double above_band(double z, double roof, double w) {
    return sigmoid((z - roof) / w);
}
inline double body_band_dz(double z, double roof, double w) {
    const double s0 = sigmoid(z / w), s1 = sigmoid((roof - z) / w);
    return (s0 * (1.0 - s0) / w) * s1 - s0 * (s1 * (1.0 - s1) / w);
}
inline double above_band_dz(double z, double roof, double w) {
    const double s = sigmoid((z - roof) / w);
    return s * (1.0 - s) / w;
}

}  // namespace

TemplateDetector::TemplateDetector(const TemplateDetectorConfig& config) : config_(config) {
    config_.validate();
}

TemplateDetector::CellFeatures TemplateDetector::features(const PointCloud& cloud) const {
    const GridSpec& g = config_.grid;
    const int nx = g.nx(), ny = g.ny();
    CellFeatures f;
    f.body.assign(static_cast<size_t>(nx) * ny, 0.0);
    f.above.assign(static_cast<size_t>(nx) * ny, 0.0);
    for (const auto& p : cloud.points) {
        const double b = body_band(p.z, config_.roof_height, config_.band_width);
        const double a = above_band(p.z, config_.roof_height, config_.band_width);
        const int i0 = std::max(0, static_cast<int>(std::ceil((p.x - g.bandwidth - g.x_min) / g.cell - 0.5)));
        const int i1 = std::min(nx - 1, static_cast<int>(std::floor((p.x + g.bandwidth - g.x_min) / g.cell - 0.5)));
        const int j0 = std::max(0, static_cast<int>(std::ceil((p.y - g.bandwidth - g.y_min) / g.cell - 0.5)));
        const int j1 = std::min(ny - 1, static_cast<int>(std::floor((p.y + g.bandwidth - g.y_min) / g.cell - 0.5)));
        for (int i = i0; i <= i1; ++i) {
            const double wx = tri((p.x - g.cx(i)) / g.bandwidth);
            if (wx <= 0.0) continue;
            for (int j = j0; j <= j1; ++j) {
                const double wy = tri((p.y - g.cy(j)) / g.bandwidth);
                if (wy <= 0.0) continue;
                const size_t c = static_cast<size_t>(i) * ny + j;
                f.body[c] += wx * wy * b;
                f.above[c] += wx * wy * a;
            }
        }
    }
    return f;
}

double TemplateDetector::pooled(const std::vector<double>& cells, int ix, int iy,
                                int yaw_idx) const {
    const GridSpec& g = config_.grid;
    const int ny = g.ny(), nx = g.nx();
    const double half_l = 0.5 * (yaw_idx == 0 ? config_.anchor_l : config_.anchor_w);
    const double half_w = 0.5 * (yaw_idx == 0 ? config_.anchor_w : config_.anchor_l);
    const int di = static_cast<int>(std::floor(half_l / g.cell));
    const int dj = static_cast<int>(std::floor(half_w / g.cell));
    double sum = 0.0;
    for (int i = std::max(0, ix - di); i <= std::min(nx - 1, ix + di); ++i)
        for (int j = std::max(0, iy - dj); j <= std::min(ny - 1, iy + dj); ++j)
            sum += cells[static_cast<size_t>(i) * ny + j];
    return sum;
}

double TemplateDetector::anchor_logit(const PointCloud& cloud, int ix, int iy,
                                      int yaw_idx) const {
    CellFeatures f = features(cloud);
    return config_.w_body * pooled(f.body, ix, iy, yaw_idx) +
           config_.w_above * pooled(f.above, ix, iy, yaw_idx) + config_.bias;
}

std::vector<Detection> TemplateDetector::emit(const PointCloud& cloud, bool frozen) {
    const GridSpec& g = config_.grid;
    CellFeatures f = features(cloud);
    std::vector<Detection> out;
    auto make_detection = [&](int ix, int iy, int yaw_idx) {
        const double logit = config_.w_body * pooled(f.body, ix, iy, yaw_idx) +
                             config_.w_above * pooled(f.above, ix, iy, yaw_idx) + config_.bias;
        Box3D box;
        box.center = {g.cx(ix), g.cy(iy), 0.5 * config_.anchor_h};
        box.l = config_.anchor_l;
        box.w = config_.anchor_w;
        box.h = config_.anchor_h;
        box.yaw = yaw_idx == 0 ? 0.0 : 0.5 * kPi;
        return Detection::from_logit(box, logit);
    };
    if (frozen) {
        for (const auto& a : cached_anchors_) out.push_back(make_detection(a[0], a[1], a[2]));
        return out;
    }
    cached_anchors_.clear();
    for (int ix = 0; ix < g.nx(); ++ix)
        for (int iy = 0; iy < g.ny(); ++iy)
            for (int yaw_idx = 0; yaw_idx < 2; ++yaw_idx) {
                Detection d = make_detection(ix, iy, yaw_idx);
                if (d.score > config_.emission_threshold) {
                    cached_anchors_.push_back({ix, iy, yaw_idx});
                    out.push_back(d);
                }
            }
    return out;
}

std::vector<Detection> TemplateDetector::forward(const PointCloud& cloud) {
    cached_cloud_ = cloud;
    has_forward_ = true;
    return emit(cloud, false);
}

std::vector<Detection> TemplateDetector::forward_frozen(const PointCloud& cloud) {
    if (!has_forward_) throw std::runtime_error("template detector: forward_frozen before forward");
    return emit(cloud, true);
}

std::vector<Vec3> TemplateDetector::backward(const std::vector<double>& dlogit,
                                             const std::vector<std::array<double, 7>>&) {
    if (!has_forward_) throw std::runtime_error("template detector: backward before forward");
    if (dlogit.size() != cached_anchors_.size())
        throw std::invalid_argument("template detector: upstream gradient count mismatch");
    const GridSpec& g = config_.grid;
    const int nx = g.nx(), ny = g.ny();
    std::vector<double> cell_gb(static_cast<size_t>(nx) * ny, 0.0);
    std::vector<double> cell_ga(static_cast<size_t>(nx) * ny, 0.0);
    for (size_t k = 0; k < cached_anchors_.size(); ++k) {
        const auto& a = cached_anchors_[k];
        const double half_l = 0.5 * (a[2] == 0 ? config_.anchor_l : config_.anchor_w);
        const double half_w = 0.5 * (a[2] == 0 ? config_.anchor_w : config_.anchor_l);
        const int di = static_cast<int>(std::floor(half_l / g.cell));
        const int dj = static_cast<int>(std::floor(half_w / g.cell));
        for (int i = std::max(0, a[0] - di); i <= std::min(nx - 1, a[0] + di); ++i)
            for (int j = std::max(0, a[1] - dj); j <= std::min(ny - 1, a[1] + dj); ++j) {
                cell_gb[static_cast<size_t>(i) * ny + j] += dlogit[k] * config_.w_body;
                cell_ga[static_cast<size_t>(i) * ny + j] += dlogit[k] * config_.w_above;
            }
    }

    std::vector<Vec3> grads(cached_cloud_.size(), Vec3{});
    for (size_t pidx = 0; pidx < cached_cloud_.size(); ++pidx) {
        const auto& p = cached_cloud_.points[pidx];
        const double b = body_band(p.z, config_.roof_height, config_.band_width);
        const double a = above_band(p.z, config_.roof_height, config_.band_width);
        const double db = body_band_dz(p.z, config_.roof_height, config_.band_width);
        const double da = above_band_dz(p.z, config_.roof_height, config_.band_width);
        const int i0 = std::max(0, static_cast<int>(std::ceil((p.x - g.bandwidth - g.x_min) / g.cell - 0.5)));
        const int i1 = std::min(nx - 1, static_cast<int>(std::floor((p.x + g.bandwidth - g.x_min) / g.cell - 0.5)));
        const int j0 = std::max(0, static_cast<int>(std::ceil((p.y - g.bandwidth - g.y_min) / g.cell - 0.5)));
        const int j1 = std::min(ny - 1, static_cast<int>(std::floor((p.y + g.bandwidth - g.y_min) / g.cell - 0.5)));
        Vec3 grad{};
        for (int i = i0; i <= i1; ++i) {
            const double ux = (p.x - g.cx(i)) / g.bandwidth;
            const double wx = tri(ux);
            const double dwx = std::abs(ux) < 1.0 ? -(ux > 0 ? 1.0 : (ux < 0 ? -1.0 : 0.0)) / g.bandwidth : 0.0;
            for (int j = j0; j <= j1; ++j) {
                const double uy = (p.y - g.cy(j)) / g.bandwidth;
                const double wy = tri(uy);
                if (wx <= 0.0 && wy <= 0.0) continue;
                const size_t c = static_cast<size_t>(i) * ny + j;
                const double gb = cell_gb[c], ga = cell_ga[c];
                if (gb == 0.0 && ga == 0.0) continue;
                const double dwy = std::abs(uy) < 1.0 ? -(uy > 0 ? 1.0 : (uy < 0 ? -1.0 : 0.0)) / g.bandwidth : 0.0;
                const double band_mix = gb * b + ga * a;
                grad.x += dwx * wy * band_mix;
                grad.y += wx * dwy * band_mix;
                grad.z += wx * wy * (gb * db + ga * da);
            }
        }
        grads[pidx] = grad;
    }
    return grads;
}

}  // namespace advmesh
