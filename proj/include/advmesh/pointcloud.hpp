#pragma once

#include <vector>

#include "advmesh/vec3.hpp"

namespace advmesh {

// KITTI-style N x 4 cloud. Reflectivity is zeroed at every ingestion point
// in this engine; the pipelines are purely geometric.
struct CloudPoint {
    double x = 0.0, y = 0.0, z = 0.0, reflectivity = 0.0;
    Vec3 xyz() const { return {x, y, z}; }
};

struct PointCloud {
    std::vector<CloudPoint> points;

    size_t size() const { return points.size(); }
    void push(const Vec3& p) { points.push_back({p.x, p.y, p.z, 0.0}); }
};

}  // namespace advmesh
