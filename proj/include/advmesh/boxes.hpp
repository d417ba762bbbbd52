#pragma once

#include <array>
#include <vector>

#include "advmesh/vec3.hpp"

namespace advmesh {

// Oriented 3D box: true center, full extents, yaw about +z. Yaw is kept in
// (-pi, pi].
struct Box3D {
    Vec3 center;
    double l = 0.0, w = 0.0, h = 0.0;
    double yaw = 0.0;

    void validate() const;
    Box3D normalized() const;
    double volume() const { return l * w * h; }
    std::array<std::array<double, 2>, 4> bev_corners() const;

    // Flat (x, y, z, l, w, h, yaw) view used by the bridge protocol and the
    // finite-difference IoU gradients.
    std::array<double, 7> to_array() const;
    static Box3D from_array(const std::array<double, 7>& a);
};

struct Detection {
    Box3D box;
    double logit = 0.0;
    double score = 0.0;  // always sigmoid(logit)
    int label = 0;

    static Detection from_logit(const Box3D& box, double logit, int label = 0);
};

// Rotated-rectangle IoU in the xy-plane (Sutherland-Hodgman clip + shoelace).
// Exactly symmetric in its arguments.
double bev_iou(const Box3D& a, const Box3D& b);

// (BEV intersection area x vertical overlap) / union volume.
double iou_3d(const Box3D& a, const Box3D& b);

}  // namespace advmesh
