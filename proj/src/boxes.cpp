#include "advmesh/boxes.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <tuple>

namespace advmesh {

void Box3D::validate() const {
    if (l <= 0.0 || w <= 0.0 || h <= 0.0)
        throw std::invalid_argument("box: extents must be positive");
}

Box3D Box3D::normalized() const {
    Box3D b = *this;
    b.yaw = wrap_angle(b.yaw);
    return b;
}

std::array<std::array<double, 2>, 4> Box3D::bev_corners() const {
    const double c = std::cos(yaw), s = std::sin(yaw);
    const double hl = 0.5 * l, hw = 0.5 * w;
    std::array<std::array<double, 2>, 4> out{};
    const double dx[4] = {hl, hl, -hl, -hl};
    const double dy[4] = {-hw, hw, hw, -hw};
    for (int k = 0; k < 4; ++k)
        out[k] = {center.x + c * dx[k] - s * dy[k], center.y + s * dx[k] + c * dy[k]};
    return out;
}

std::array<double, 7> Box3D::to_array() const {
    return {center.x, center.y, center.z, l, w, h, yaw};
}

Box3D Box3D::from_array(const std::array<double, 7>& a) {
    return {{a[0], a[1], a[2]}, a[3], a[4], a[5], a[6]};
}

Detection Detection::from_logit(const Box3D& box, double logit, int label) {
    Detection d;
    d.box = box;
    d.logit = logit;
    d.score = sigmoid(logit);
    d.label = label;
    return d;
}

namespace {

using Poly = std::vector<std::array<double, 2>>;

double shoelace(const Poly& p) {
    double a = 0.0;
    const size_t n = p.size();
    for (size_t i = 0; i < n; ++i) {
        const auto& u = p[i];
        const auto& v = p[(i + 1) % n];
        a += u[0] * v[1] - v[0] * u[1];
    }
    return 0.5 * a;
}

// Clip polygon against the half-plane left of edge a->b (subject polygons
// are counter-clockwise).
Poly clip_edge(const Poly& poly, const std::array<double, 2>& a, const std::array<double, 2>& b) {
    Poly out;
    const size_t n = poly.size();
    auto side = [&](const std::array<double, 2>& p) {
        return (b[0] - a[0]) * (p[1] - a[1]) - (b[1] - a[1]) * (p[0] - a[0]);
    };
    for (size_t i = 0; i < n; ++i) {
        const auto& cur = poly[i];
        const auto& nxt = poly[(i + 1) % n];
        const double sc = side(cur), sn = side(nxt);
        if (sc >= 0.0) out.push_back(cur);
        if ((sc > 0.0 && sn < 0.0) || (sc < 0.0 && sn > 0.0)) {
            const double f = sc / (sc - sn);
            out.push_back({cur[0] + f * (nxt[0] - cur[0]), cur[1] + f * (nxt[1] - cur[1])});
        }
    }
    return out;
}

double rect_intersection_area(const Box3D& a, const Box3D& b) {
    auto ca = a.bev_corners();
    auto cb = b.bev_corners();
    Poly poly(ca.begin(), ca.end());
    for (int k = 0; k < 4 && !poly.empty(); ++k)
        poly = clip_edge(poly, cb[k], cb[(k + 1) % 4]);
    if (poly.size() < 3) return 0.0;
    return std::max(0.0, shoelace(poly));
}

// Canonical argument order makes the IoU bit-exactly symmetric.
std::tuple<double, double, double, double, double, double, double> box_key(const Box3D& b) {
    return {b.center.x, b.center.y, b.center.z, b.l, b.w, b.h, b.yaw};
}

double bev_intersection(const Box3D& a, const Box3D& b) {
    return box_key(a) <= box_key(b) ? rect_intersection_area(a, b)
                                    : rect_intersection_area(b, a);
}

}  // namespace

double bev_iou(const Box3D& a, const Box3D& b) {
    a.validate();
    b.validate();
    const double inter = bev_intersection(a, b);
    const double uni = a.l * a.w + b.l * b.w - inter;
    if (uni <= 0.0) return 0.0;
    return std::clamp(inter / uni, 0.0, 1.0);
}

double iou_3d(const Box3D& a, const Box3D& b) {
    a.validate();
    b.validate();
    const double inter_bev = bev_intersection(a, b);
    const double z0 = std::max(a.center.z - 0.5 * a.h, b.center.z - 0.5 * b.h);
    const double z1 = std::min(a.center.z + 0.5 * a.h, b.center.z + 0.5 * b.h);
    const double inter = inter_bev * std::max(0.0, z1 - z0);
    const double uni = a.volume() + b.volume() - inter;
    if (uni <= 0.0) return 0.0;
    return std::clamp(inter / uni, 0.0, 1.0);
}

}  // namespace advmesh
