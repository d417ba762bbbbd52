#include "advmesh/trained_detector.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include <json.hpp>

#include "advmesh/autodiff.hpp"

namespace advmesh {

namespace {

constexpr double kFitMargin = 1.0;      // footprint expansion for the fit, meters
constexpr double kEdgeSoftness = 0.1;   // membership logistic width
constexpr double kFitZLow = 0.15;       // excludes ground returns
constexpr double kFitZHigh = 2.6;
constexpr double kZSoftness = 0.05;
constexpr double kSoftExtremeBeta = 200.0;
constexpr int kPairWindow = 30;
constexpr double kHistEdges[5] = {0.0, 0.55, 1.1, 1.65, 2.2};

inline double tri(double u) {
    double a = 1.0 - std::abs(u);
    return a > 0.0 ? a : 0.0;
}

// feature index 0: body band, 1: above-roof band, 2..5: height histogram
inline void z_bands(double z, double roof, double w, double* val, double* dz) {
    const double s0 = sigmoid(z / w), s1 = sigmoid((roof - z) / w);
    val[0] = s0 * s1;
    dz[0] = (s0 * (1 - s0) / w) * s1 - s0 * (s1 * (1 - s1) / w);
    const double sa = sigmoid((z - roof) / w);
    val[1] = sa;
    dz[1] = sa * (1 - sa) / w;
    for (int k = 0; k < 4; ++k) {
        const double lo = kHistEdges[k], hi = kHistEdges[k + 1];
        const double u = sigmoid((z - lo) / w), v = sigmoid((hi - z) / w);
        val[2 + k] = u * v;
        dz[2 + k] = (u * (1 - u) / w) * v - u * (v * (1 - v) / w);
    }
}

struct FootprintSpan {
    int di, dj;
};

FootprintSpan footprint_span(const TemplateDetectorConfig& base, int yaw_idx) {
    const double half_l = 0.5 * (yaw_idx == 0 ? base.anchor_l : base.anchor_w);
    const double half_w = 0.5 * (yaw_idx == 0 ? base.anchor_w : base.anchor_l);
    return {static_cast<int>(std::floor(half_l / base.grid.cell)),
            static_cast<int>(std::floor(half_w / base.grid.cell))};
}

}  // namespace

TrainedPillarDetector::TrainedPillarDetector(const TemplateDetectorConfig& base,
                                             const PillarTrainOptions& opts)
    : base_(base), opts_(opts) {
    base_.validate();
}

TrainedPillarDetector::CellFeatures TrainedPillarDetector::cell_features(
    const PointCloud& cloud) const {
    const GridSpec& g = base_.grid;
    const int nx = g.nx(), ny = g.ny();
    CellFeatures f;
    f.cells.assign(static_cast<size_t>(nx) * ny, {});
    double val[kFeatures], dz[kFeatures];
    for (const auto& p : cloud.points) {
        z_bands(p.z, base_.roof_height, base_.band_width, val, dz);
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
                auto& cell = f.cells[static_cast<size_t>(i) * ny + j];
                for (int k = 0; k < kFeatures; ++k) cell[k] += wx * wy * val[k];
            }
        }
    }
    return f;
}

std::array<double, TrainedPillarDetector::kFeatures> TrainedPillarDetector::pooled(
    const CellFeatures& f, int ix, int iy, int yaw_idx) const {
    const GridSpec& g = base_.grid;
    const int nx = g.nx(), ny = g.ny();
    const FootprintSpan span = footprint_span(base_, yaw_idx);
    std::array<double, kFeatures> sum{};
    for (int i = std::max(0, ix - span.di); i <= std::min(nx - 1, ix + span.di); ++i)
        for (int j = std::max(0, iy - span.dj); j <= std::min(ny - 1, iy + span.dj); ++j) {
            const auto& cell = f.cells[static_cast<size_t>(i) * ny + j];
            for (int k = 0; k < kFeatures; ++k) sum[k] += cell[k];
        }
    return sum;
}

std::vector<double> TrainedPillarDetector::anchor_features(const PointCloud& cloud, int ix,
                                                           int iy, int yaw_idx) const {
    CellFeatures f = cell_features(cloud);
    auto raw = pooled(f, ix, iy, yaw_idx);
    return std::vector<double>(raw.begin(), raw.end());
}

double TrainedPillarDetector::logit_from_raw(const std::array<double, kFeatures>& raw) const {
    double z = theta0;
    for (int k = 0; k < kFeatures; ++k) z += theta[k] * std::log1p(raw[k]);
    return z;
}

TrainedPillarDetector::FitStructure TrainedPillarDetector::build_fit_structure(
    const PointCloud& cloud, double ax, double ay, double anchor_yaw) const {
    FitStructure fs;
    const double lim_x = 0.5 * base_.anchor_l + kFitMargin + 0.8;
    const double lim_y = 0.5 * base_.anchor_w + kFitMargin + 0.8;
    for (size_t i = 0; i < cloud.size(); ++i) {
        const auto& p = cloud.points[i];
        if (std::abs(p.x - ax) <= lim_x && std::abs(p.y - ay) <= lim_y && p.z > -0.3 &&
            p.z < 3.2)
            fs.region.push_back(static_cast<int>(i));
    }
    if (fs.region.size() < 3) {
        fs.empty = true;
        return fs;
    }
    // soft memberships, double-only prepass
    std::vector<double> m(fs.region.size());
    double mass = 0.0;
    const double Lx = 0.5 * base_.anchor_l + kFitMargin;
    const double Ly = 0.5 * base_.anchor_w + kFitMargin;
    for (size_t r = 0; r < fs.region.size(); ++r) {
        const auto& p = cloud.points[fs.region[r]];
        const double sx = sigmoid((Lx - std::abs(p.x - ax)) / kEdgeSoftness);
        const double sy = sigmoid((Ly - std::abs(p.y - ay)) / kEdgeSoftness);
        const double zb = sigmoid((p.z - kFitZLow) / kZSoftness) *
                          sigmoid((kFitZHigh - p.z) / kZSoftness);
        m[r] = sx * sy * zb;
        mass += m[r];
    }
    if (mass < 1e-6) {
        fs.empty = true;
        return fs;
    }
    // scan-line pairs: azimuth-sorted window, same-line gate on dz
    std::vector<int> order(fs.region.size());
    for (size_t r = 0; r < order.size(); ++r) order[r] = static_cast<int>(r);
    std::vector<double> azim(fs.region.size());
    for (size_t r = 0; r < fs.region.size(); ++r) {
        const auto& p = cloud.points[fs.region[r]];
        azim[r] = std::atan2(p.y, p.x);
    }
    std::sort(order.begin(), order.end(), [&](int a, int b) {
        if (azim[a] != azim[b]) return azim[a] < azim[b];
        return a < b;
    });
    for (size_t a = 0; a < order.size(); ++a) {
        const auto& pa = cloud.points[fs.region[order[a]]];
        for (size_t b = a + 1; b < std::min(order.size(), a + 1 + kPairWindow); ++b) {
            const auto& pb = cloud.points[fs.region[order[b]]];
            if (std::abs(pa.z - pb.z) >= 0.06) continue;
            const double d = std::hypot(pa.x - pb.x, pa.y - pb.y);
            if (d <= 0.015 || d >= 0.45) continue;
            fs.pairs.emplace_back(order[a], order[b]);
            if (fs.pairs.size() >= 20000) break;
        }
        if (fs.pairs.size() >= 20000) break;
    }
    // orientation mod pi/2 from fourth-order direction moments
    double zx = 0.0, zy = 0.0;
    for (const auto& [ia, ib] : fs.pairs) {
        const auto& pa = cloud.points[fs.region[ia]];
        const auto& pb = cloud.points[fs.region[ib]];
        const double dx = pb.x - pa.x, dy = pb.y - pa.y, dz = pb.z - pa.z;
        const double d = std::sqrt(dx * dx + dy * dy + 1e-12);
        const double gate = sigmoid((0.03 - std::abs(dz)) / 0.008) *
                            sigmoid((d - 0.02) / 0.008) * sigmoid((0.35 - d) / 0.03);
        const double q = m[ia] * m[ib] * gate;
        const double phi4 = 4.0 * std::atan2(dy, dx);
        zx += q * std::cos(phi4);
        zy += q * std::sin(phi4);
    }
    double psi = 0.0;
    if (std::hypot(zx, zy) < 1e-9) {
        fs.psi_valid = false;
    } else {
        psi = 0.25 * std::atan2(zy, zx);
    }
    // long-axis pick: mass spread along psi vs psi+pi/2, with an
    // anchor-orientation prior when the evidence is weak (frontal views)
    double cx = 0.0, cy = 0.0;
    for (size_t r = 0; r < fs.region.size(); ++r) {
        const auto& p = cloud.points[fs.region[r]];
        cx += m[r] * p.x;
        cy += m[r] * p.y;
    }
    cx /= mass;
    cy /= mass;
    auto spread = [&](double theta) {
        const double ex = std::cos(theta), ey = std::sin(theta);
        double s = 0.0;
        for (size_t r = 0; r < fs.region.size(); ++r) {
            const auto& p = cloud.points[fs.region[r]];
            const double proj = (p.x - cx) * ex + (p.y - cy) * ey;
            s += m[r] * proj * proj;
        }
        return s / mass;
    };
    const double s0 = spread(psi), s1 = spread(psi + 0.5 * kPi);
    const double prior = 0.4 * sigmoid((0.45 - std::max(s0, s1)) / 0.08);
    const double score0 = s0 + prior * std::cos(2.0 * (psi - anchor_yaw));
    const double score1 = s1 - prior * std::cos(2.0 * (psi - anchor_yaw));
    fs.axis_quarter = score0 >= score1 ? 0 : 1;
    const double psi_long = psi + fs.axis_quarter * 0.5 * kPi;
    fs.yaw_wrap = kPi * std::round((psi_long - anchor_yaw) / kPi);
    return fs;
}

namespace {

// Fit features, written once over a generic scalar: instantiated with plain
// doubles for the forward pass and with tape duals for the backward pass.
template <typename Ops>
struct FitEval {
    using S = typename Ops::Scalar;
    S dx, dy, dpsi;
    std::vector<S> in_x, in_y, in_z;
};

template <typename Ops>
FitEval<Ops> compute_fit(const Ops& ops, const PointCloud& cloud,
                         const TrainedPillarDetector::FitStructure& fs, double ax, double ay,
                         double anchor_yaw, const TemplateDetectorConfig& base) {
    using std::abs;
    using std::atan2;
    using std::cos;
    using std::exp;
    using std::log;
    using std::sin;
    using std::sqrt;
    using std::tanh;
    using S = typename Ops::Scalar;
    FitEval<Ops> out;
    out.dx = ops.constant(0.0);
    out.dy = ops.constant(0.0);
    out.dpsi = ops.constant(0.0);
    if (fs.empty) return out;

    const size_t n = fs.region.size();
    out.in_x.reserve(n);
    out.in_y.reserve(n);
    out.in_z.reserve(n);
    for (size_t r = 0; r < n; ++r) {
        const auto& p = cloud.points[fs.region[r]];
        out.in_x.push_back(ops.input(p.x));
        out.in_y.push_back(ops.input(p.y));
        out.in_z.push_back(ops.input(p.z));
    }
    const double Lx = 0.5 * base.anchor_l + kFitMargin;
    const double Ly = 0.5 * base.anchor_w + kFitMargin;
    std::vector<S> m;
    m.reserve(n);
    S mass = ops.constant(0.0);
    for (size_t r = 0; r < n; ++r) {
        S sx = logistic((Lx - abs(out.in_x[r] - ax)) / kEdgeSoftness);
        S sy = logistic((Ly - abs(out.in_y[r] - ay)) / kEdgeSoftness);
        S zb = logistic((out.in_z[r] - kFitZLow) / kZSoftness) *
               logistic((kFitZHigh - out.in_z[r]) / kZSoftness);
        m.push_back(sx * sy * zb);
        mass = mass + m[r];
    }

    S psi = ops.constant(0.0);
    if (fs.psi_valid) {
        S zxs = ops.constant(0.0), zys = ops.constant(0.0);
        for (const auto& [ia, ib] : fs.pairs) {
            S dxp = out.in_x[ib] - out.in_x[ia];
            S dyp = out.in_y[ib] - out.in_y[ia];
            S dzp = out.in_z[ib] - out.in_z[ia];
            S d = sqrt(dxp * dxp + dyp * dyp + 1e-12);
            S gate = logistic((0.03 - abs(dzp)) / 0.008) * logistic((d - 0.02) / 0.008) *
                     logistic((0.35 - d) / 0.03);
            S q = m[ia] * m[ib] * gate;
            S phi4 = 4.0 * atan2(dyp, dxp);
            zxs = zxs + q * cos(phi4);
            zys = zys + q * sin(phi4);
        }
        psi = 0.25 * atan2(zys, zxs);
    }
    S psi_long = psi + fs.axis_quarter * 0.5 * kPi;
    S cp = cos(psi_long);
    S sp = sin(psi_long);

    // rotated coordinates about the anchor center
    std::vector<S> xr, yr;
    xr.reserve(n);
    yr.reserve(n);
    for (size_t r = 0; r < n; ++r) {
        S px = out.in_x[r] - ax;
        S py = out.in_y[r] - ay;
        xr.push_back(cp * px + sp * py);
        yr.push_back(cp * py - sp * px);
    }
    // soft extremes; the hard min/max shift cancels exactly
    auto soft_min = [&](const std::vector<S>& v) {
        double lo = 1e300;
        for (size_t r = 0; r < n; ++r) lo = std::min(lo, Ops::value(v[r]));
        S acc = ops.constant(0.0);
        for (size_t r = 0; r < n; ++r)
            acc = acc + m[r] * exp(-kSoftExtremeBeta * (v[r] - lo));
        return ops.constant(lo) - log(acc + 1e-300) / kSoftExtremeBeta;
    };
    auto soft_max = [&](const std::vector<S>& v) {
        double hi = -1e300;
        for (size_t r = 0; r < n; ++r) hi = std::max(hi, Ops::value(v[r]));
        S acc = ops.constant(0.0);
        for (size_t r = 0; r < n; ++r)
            acc = acc + m[r] * exp(kSoftExtremeBeta * (v[r] - hi));
        return ops.constant(hi) + log(acc + 1e-300) / kSoftExtremeBeta;
    };
    S xmin = soft_min(xr), xmax = soft_max(xr);
    S ymin = soft_min(yr), ymax = soft_max(yr);

    // visibility blend: a face-on view shows ~zero extent along the axis and
    // the center sits half a box behind the visible face; a side view shows
    // the full extent and the midpoint is already the center
    auto blended_center = [&](const S& lo, const S& hi, double full, const S& sensor_coord) {
        S extent = hi - lo;
        S visfrac = extent * (1.0 / full);
        if (Ops::value(visfrac) > 1.0) visfrac = ops.constant(1.0);
        S mid = 0.5 * (lo + hi);
        S eta = -tanh((sensor_coord - mid) * 0.5);
        return mid + (1.0 - visfrac) * (0.5 * full) * eta;
    };
    // sensor xy assumed at the origin
    S sxr = cp * (-ax) + sp * (-ay);
    S syr = cp * (-ay) - sp * (-ax);
    S cxr = blended_center(xmin, xmax, base.anchor_l, sxr);
    S cyr = blended_center(ymin, ymax, base.anchor_w, syr);

    out.dx = cp * cxr - sp * cyr;
    out.dy = sp * cxr + cp * cyr;
    out.dpsi = psi_long - (anchor_yaw + fs.yaw_wrap);
    return out;
}

}  // namespace

std::array<double, 3> TrainedPillarDetector::fit_features(const PointCloud& cloud,
                                                          const FitStructure& fs, double ax,
                                                          double ay, double anchor_yaw) const {
    AdOpsDouble ops;
    auto fit = compute_fit(ops, cloud, fs, ax, ay, anchor_yaw, base_);
    return {fit.dx, fit.dy, fit.dpsi};
}

void TrainedPillarDetector::fit_backward(const PointCloud& cloud, const FitStructure& fs,
                                         double ax, double ay, double anchor_yaw,
                                         const std::array<double, 3>& seed,
                                         std::vector<Vec3>& grads) const {
    if (fs.empty) return;
    Tape tape;
    AdOpsTape ops{&tape};
    auto fit = compute_fit(ops, cloud, fs, ax, ay, anchor_yaw, base_);
    Ad combined = seed[0] * fit.dx + seed[1] * fit.dy + seed[2] * fit.dpsi;
    if (combined.idx < 0) return;
    std::vector<double> adj = tape.gradient(combined.idx);
    for (size_t r = 0; r < fs.region.size(); ++r) {
        Vec3& g = grads[fs.region[r]];
        g.x += adj[fit.in_x[r].idx];
        g.y += adj[fit.in_y[r].idx];
        g.z += adj[fit.in_z[r].idx];
    }
}

Detection TrainedPillarDetector::make_detection(const PointCloud& cloud, const CellFeatures& f,
                                                DetCache& cache, bool rebuild_fit) {
    const GridSpec& g = base_.grid;
    const double ax = g.cx(cache.ix), ay = g.cy(cache.iy);
    const double anchor_yaw = cache.yaw_idx == 0 ? 0.0 : 0.5 * kPi;
    cache.raw = pooled(f, cache.ix, cache.iy, cache.yaw_idx);
    if (rebuild_fit) cache.fit = build_fit_structure(cloud, ax, ay, anchor_yaw);
    auto r = fit_features(cloud, cache.fit, ax, ay, anchor_yaw);
    std::array<double, 3> offsets{};
    for (int i = 0; i < 3; ++i) {
        offsets[i] = head_b[i];
        for (int j = 0; j < 3; ++j) offsets[i] += head_w[i][j] * r[j];
    }
    Box3D box;
    box.center = {ax + offsets[0], ay + offsets[1], 0.5 * base_.anchor_h};
    box.l = base_.anchor_l;
    box.w = base_.anchor_w;
    box.h = base_.anchor_h;
    box.yaw = wrap_angle(anchor_yaw + offsets[2]);
    return Detection::from_logit(box, logit_from_raw(cache.raw));
}

std::vector<Detection> TrainedPillarDetector::forward(const PointCloud& cloud) {
    cached_cloud_ = cloud;
    has_forward_ = true;
    cached_dets_.clear();
    CellFeatures f = cell_features(cloud);
    const GridSpec& g = base_.grid;
    struct Candidate {
        double score;
        int ix, iy, yaw_idx;
    };
    std::vector<Candidate> candidates;
    for (int ix = 0; ix < g.nx(); ++ix)
        for (int iy = 0; iy < g.ny(); ++iy)
            for (int yi = 0; yi < 2; ++yi) {
                const double logit = logit_from_raw(pooled(f, ix, iy, yi));
                const double score = sigmoid(logit);
                if (score > base_.emission_threshold)
                    candidates.push_back({score, ix, iy, yi});
            }
    std::sort(candidates.begin(), candidates.end(), [&](const Candidate& a, const Candidate& b) {
        if (a.score != b.score) return a.score > b.score;
        if (a.ix != b.ix) return a.ix < b.ix;
        if (a.iy != b.iy) return a.iy < b.iy;
        return a.yaw_idx < b.yaw_idx;
    });
    if (static_cast<int>(candidates.size()) > opts_.max_candidates)
        candidates.resize(opts_.max_candidates);

    std::vector<Detection> out;
    for (const auto& c : candidates) {
        DetCache cache;
        cache.ix = c.ix;
        cache.iy = c.iy;
        cache.yaw_idx = c.yaw_idx;
        Detection det = make_detection(cloud, f, cache, /*rebuild_fit=*/true);
        bool suppressed = false;
        for (const auto& kept : out)
            if (bev_iou(det.box, kept.box) >= opts_.nms_iou) { suppressed = true; break; }
        if (suppressed) continue;
        out.push_back(det);
        cached_dets_.push_back(std::move(cache));
    }
    return out;
}

std::vector<Detection> TrainedPillarDetector::forward_frozen(const PointCloud& cloud) {
    if (!has_forward_)
        throw std::runtime_error("trained detector: forward_frozen before forward");
    CellFeatures f = cell_features(cloud);
    std::vector<Detection> out;
    out.reserve(cached_dets_.size());
    for (auto& cache : cached_dets_)
        out.push_back(make_detection(cloud, f, cache, /*rebuild_fit=*/false));
    return out;
}

std::vector<Vec3> TrainedPillarDetector::backward(
    const std::vector<double>& dlogit, const std::vector<std::array<double, 7>>& dbox) {
    if (!has_forward_) throw std::runtime_error("trained detector: backward before forward");
    if (dlogit.size() != cached_dets_.size() || dbox.size() != cached_dets_.size())
        throw std::invalid_argument("trained detector: upstream gradient count mismatch");
    const GridSpec& g = base_.grid;
    const int nx = g.nx(), ny = g.ny();
    std::vector<std::array<double, kFeatures>> cell_grad(static_cast<size_t>(nx) * ny,
                                                         std::array<double, kFeatures>{});
    for (size_t k = 0; k < cached_dets_.size(); ++k) {
        if (dlogit[k] == 0.0) continue;
        const auto& cache = cached_dets_[k];
        const FootprintSpan span = footprint_span(base_, cache.yaw_idx);
        std::array<double, kFeatures> df{};
        for (int f = 0; f < kFeatures; ++f)
            df[f] = dlogit[k] * theta[f] / (1.0 + cache.raw[f]);
        for (int i = std::max(0, cache.ix - span.di); i <= std::min(nx - 1, cache.ix + span.di); ++i)
            for (int j = std::max(0, cache.iy - span.dj); j <= std::min(ny - 1, cache.iy + span.dj); ++j) {
                auto& cg = cell_grad[static_cast<size_t>(i) * ny + j];
                for (int f = 0; f < kFeatures; ++f) cg[f] += df[f];
            }
    }

    std::vector<Vec3> grads(cached_cloud_.size(), Vec3{});
    double val[kFeatures], dzv[kFeatures];
    for (size_t pidx = 0; pidx < cached_cloud_.size(); ++pidx) {
        const auto& p = cached_cloud_.points[pidx];
        z_bands(p.z, base_.roof_height, base_.band_width, val, dzv);
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
                const auto& cg = cell_grad[static_cast<size_t>(i) * ny + j];
                double mix = 0.0, zmix = 0.0;
                for (int f = 0; f < kFeatures; ++f) {
                    mix += cg[f] * val[f];
                    zmix += cg[f] * dzv[f];
                }
                if (mix == 0.0 && zmix == 0.0) continue;
                const double dwy = std::abs(uy) < 1.0 ? -(uy > 0 ? 1.0 : (uy < 0 ? -1.0 : 0.0)) / g.bandwidth : 0.0;
                grad.x += dwx * wy * mix;
                grad.y += wx * dwy * mix;
                grad.z += wx * wy * zmix;
            }
        }
        grads[pidx] = grad;
    }

    // regression chain: dbox rows (x, y, yaw) through the linear head into
    // the fit features; z and sizes are not regressed
    for (size_t k = 0; k < cached_dets_.size(); ++k) {
        const std::array<double, 3> dout{dbox[k][0], dbox[k][1], dbox[k][6]};
        std::array<double, 3> seed{};
        for (int j = 0; j < 3; ++j)
            for (int i = 0; i < 3; ++i) seed[j] += head_w[i][j] * dout[i];
        if (seed[0] == 0.0 && seed[1] == 0.0 && seed[2] == 0.0) continue;
        const auto& cache = cached_dets_[k];
        const double ax = g.cx(cache.ix), ay = g.cy(cache.iy);
        const double anchor_yaw = cache.yaw_idx == 0 ? 0.0 : 0.5 * kPi;
        fit_backward(cached_cloud_, cache.fit, ax, ay, anchor_yaw, seed, grads);
    }
    return grads;
}

double TrainedPillarDetector::classification_loss(
    const std::vector<std::array<double, kFeatures>>& x, const std::vector<int>& y) const {
    size_t n_pos = 0, n_neg = 0;
    for (int t : y) (t ? n_pos : n_neg)++;
    if (n_pos == 0 || n_neg == 0)
        throw std::invalid_argument("pillar training: single-class anchor set");
    double loss = 0.0;
    for (size_t i = 0; i < x.size(); ++i) {
        double z = theta0;
        for (int k = 0; k < kFeatures; ++k) z += theta[k] * x[i][k];
        const double ce = std::max(z, 0.0) - z * y[i] + std::log1p(std::exp(-std::abs(z)));
        loss += ce * (y[i] ? 0.5 / n_pos : 0.5 / n_neg);
    }
    return loss;
}

std::string TrainedPillarDetector::save_weights() const {
    nlohmann::json j;
    j["theta"] = theta;
    j["theta0"] = theta0;
    j["head_w"] = head_w;
    j["head_b"] = head_b;
    j["base"] = {
        {"x_min", base_.grid.x_min}, {"x_max", base_.grid.x_max},
        {"y_min", base_.grid.y_min}, {"y_max", base_.grid.y_max},
        {"cell", base_.grid.cell},   {"bandwidth", base_.grid.bandwidth},
        {"anchor_l", base_.anchor_l}, {"anchor_w", base_.anchor_w},
        {"anchor_h", base_.anchor_h}, {"roof_height", base_.roof_height},
        {"band_width", base_.band_width}, {"emission_threshold", base_.emission_threshold},
    };
    return j.dump(2);
}

TrainedPillarDetector TrainedPillarDetector::load_weights(const std::string& json_text) {
    nlohmann::json j = nlohmann::json::parse(json_text);
    TemplateDetectorConfig base;
    const auto& b = j.at("base");
    base.grid.x_min = b.at("x_min");
    base.grid.x_max = b.at("x_max");
    base.grid.y_min = b.at("y_min");
    base.grid.y_max = b.at("y_max");
    base.grid.cell = b.at("cell");
    base.grid.bandwidth = b.at("bandwidth");
    base.anchor_l = b.at("anchor_l");
    base.anchor_w = b.at("anchor_w");
    base.anchor_h = b.at("anchor_h");
    base.roof_height = b.at("roof_height");
    base.band_width = b.at("band_width");
    base.emission_threshold = b.at("emission_threshold");
    TrainedPillarDetector det(base);
    j.at("theta").get_to(det.theta);
    det.theta0 = j.at("theta0");
    j.at("head_w").get_to(det.head_w);
    j.at("head_b").get_to(det.head_b);
    return det;
}

TrainedPillarDetector train_pillar_logistic(const std::vector<SceneSample>& scenes, int epochs,
                                            double rate, const TemplateDetectorConfig& base,
                                            const PillarTrainOptions& opts) {
    TrainedPillarDetector det(base, opts);
    const GridSpec& g = base.grid;
    const int nx = g.nx(), ny = g.ny();

    std::vector<std::array<double, TrainedPillarDetector::kFeatures>> X;
    std::vector<int> Y;
    std::vector<std::array<double, 3>> R;   // fit features of positive anchors
    std::vector<std::array<double, 3>> T;   // regression targets

    for (const auto& scene : scenes) {
        auto cells = det.cell_features(scene.cloud);
        // anchor labelling
        std::vector<int8_t> label(static_cast<size_t>(nx) * ny * 2, 0);  // 0 neg, 1 pos, -1 ignore
        std::vector<int> gt_of(label.size(), -1);
        for (size_t gi = 0; gi < scene.gt_boxes.size(); ++gi) {
            const Box3D& gt = scene.gt_boxes[gi];
            double best = -1.0;
            int best_a = -1;
            for (int ix = 0; ix < nx; ++ix)
                for (int iy = 0; iy < ny; ++iy) {
                    // cheap center gate before the polygon clip
                    if (std::abs(g.cx(ix) - gt.center.x) > 3.0 ||
                        std::abs(g.cy(iy) - gt.center.y) > 3.0)
                        continue;
                    for (int yi = 0; yi < 2; ++yi) {
                        Box3D anchor;
                        anchor.center = {g.cx(ix), g.cy(iy), 0.5 * base.anchor_h};
                        anchor.l = base.anchor_l;
                        anchor.w = base.anchor_w;
                        anchor.h = base.anchor_h;
                        anchor.yaw = yi == 0 ? 0.0 : 0.5 * kPi;
                        const double iou = bev_iou(anchor, gt);
                        const size_t a = (static_cast<size_t>(ix) * ny + iy) * 2 + yi;
                        if (iou >= opts.pos_iou && label[a] != 1) {
                            label[a] = 1;
                            gt_of[a] = static_cast<int>(gi);
                        }
                        if (iou > best) {
                            best = iou;
                            best_a = static_cast<int>(a);
                        }
                    }
                }
            if (best_a >= 0) {
                label[best_a] = 1;
                gt_of[best_a] = static_cast<int>(gi);
            }
        }
        for (int ix = 0; ix < nx; ++ix)
            for (int iy = 0; iy < ny; ++iy)
                for (int yi = 0; yi < 2; ++yi) {
                    const size_t a = (static_cast<size_t>(ix) * ny + iy) * 2 + yi;
                    if (label[a] == 1) continue;
                    for (const auto& gt : scene.gt_boxes)
                        if (std::hypot(g.cx(ix) - gt.center.x, g.cy(iy) - gt.center.y) <
                            opts.ignore_radius)
                            label[a] = -1;
                }
        for (int ix = 0; ix < nx; ++ix)
            for (int iy = 0; iy < ny; ++iy)
                for (int yi = 0; yi < 2; ++yi) {
                    const size_t a = (static_cast<size_t>(ix) * ny + iy) * 2 + yi;
                    if (label[a] == -1) continue;
                    auto raw = det.pooled(cells, ix, iy, yi);
                    std::array<double, TrainedPillarDetector::kFeatures> row{};
                    for (int k = 0; k < TrainedPillarDetector::kFeatures; ++k)
                        row[k] = std::log1p(raw[k]);
                    X.push_back(row);
                    Y.push_back(label[a] == 1 ? 1 : 0);
                    if (label[a] == 1) {
                        const double ax = g.cx(ix), ay = g.cy(iy);
                        const double ayaw = yi == 0 ? 0.0 : 0.5 * kPi;
                        auto fs = det.build_fit_structure(scene.cloud, ax, ay, ayaw);
                        R.push_back(det.fit_features(scene.cloud, fs, ax, ay, ayaw));
                        const Box3D& gt = scene.gt_boxes[gt_of[a]];
                        T.push_back({gt.center.x - ax, gt.center.y - ay,
                                     wrap_half(gt.yaw - ayaw)});
                    }
                }
    }

    size_t n_pos = 0, n_neg = 0;
    for (int y : Y) (y ? n_pos : n_neg)++;
    if (n_pos == 0 || n_neg == 0)
        throw std::invalid_argument("pillar training: single-class anchor set");

    // class-balanced logistic regression, full-batch gradient descent
    const double wp = 0.5 / n_pos, wn = 0.5 / n_neg;
    for (int epoch = 0; epoch < epochs; ++epoch) {
        std::array<double, TrainedPillarDetector::kFeatures> grad{};
        double grad0 = 0.0;
        for (size_t i = 0; i < X.size(); ++i) {
            double z = det.theta0;
            for (int k = 0; k < TrainedPillarDetector::kFeatures; ++k)
                z += det.theta[k] * X[i][k];
            const double err = (sigmoid(z) - Y[i]) * (Y[i] ? wp : wn);
            for (int k = 0; k < TrainedPillarDetector::kFeatures; ++k)
                grad[k] += err * X[i][k];
            grad0 += err;
        }
        for (int k = 0; k < TrainedPillarDetector::kFeatures; ++k)
            det.theta[k] -= rate * (grad[k] + 2.0 * opts.weight_decay * det.theta[k]);
        det.theta0 -= rate * grad0;
    }

    // offset head: smooth-L1 on positives, initialized at identity
    for (int epoch = 0; epoch < epochs && !R.empty(); ++epoch) {
        std::array<std::array<double, 3>, 3> gw{};
        std::array<double, 3> gb{};
        for (size_t i = 0; i < R.size(); ++i) {
            for (int o = 0; o < 3; ++o) {
                double pred = det.head_b[o];
                for (int j = 0; j < 3; ++j) pred += det.head_w[o][j] * R[i][j];
                const double resid = pred - T[i][o];
                const double d = std::abs(resid) < 1.0 ? resid : (resid > 0 ? 1.0 : -1.0);
                for (int j = 0; j < 3; ++j) gw[o][j] += d * R[i][j] / R.size();
                gb[o] += d / R.size();
            }
        }
        for (int o = 0; o < 3; ++o) {
            for (int j = 0; j < 3; ++j) det.head_w[o][j] -= opts.reg_rate * gw[o][j];
            det.head_b[o] -= opts.reg_rate * gb[o];
        }
    }
    return det;
}

}  // namespace advmesh
