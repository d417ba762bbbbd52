#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "advmesh/mesh.hpp"
#include "advmesh/pointcloud.hpp"
#include "advmesh/vec3.hpp"

namespace advmesh {

struct Ray {
    Vec3 origin;
    Vec3 direction;  // unit length
};

// Scan pattern: one ray per (elevation line, azimuth column). Angles in
// degrees, elevations strictly decreasing.
struct RayPattern {
    std::vector<double> elevations_deg;
    double azimuth_start_deg = -45.0;
    double azimuth_end_deg = 45.0;
    double azimuth_step_deg = 0.2;
    Vec3 sensor_origin{0.0, 0.0, 1.73};
    double max_range = 120.0;

    void validate() const;
    int azimuth_count() const;
    int ray_count() const { return static_cast<int>(elevations_deg.size()) * azimuth_count(); }
    Ray ray(int ray_id) const;
    // Spacing between adjacent elevation lines (falls back to the azimuth
    // step for single-line patterns); used by the occlusion test.
    double elevation_step_deg() const;
};

struct Hdl64Config {
    bool rooftop_only = false;   // keep the top 10 of the 64 lines
    double azimuth_start_deg = -45.0;
    double azimuth_end_deg = 45.0;
    double azimuth_step_deg = 0.2;
    Vec3 sensor_origin{0.0, 0.0, 1.73};
    double max_range = 120.0;
};

// HDL-64E-like pattern: 64 elevations uniformly spaced from +2 deg down to
// -24.8 deg; rooftop mode keeps the top 10 lines.
RayPattern hdl64_pattern(const Hdl64Config& config);

struct HitRecord {
    int ray_id = 0;
    int instance_id = 0;   // which placed mesh instance
    int face_id = 0;
    double t = 0.0;        // range along the ray
    double u = 0.0;        // barycentric toward vertex 1
    double v = 0.0;        // barycentric toward vertex 2
    Vec3 point;            // sensor-frame hit point
};

// Moller-Trumbore ray/triangle intersection, no backface culling, inclusive
// boundaries, hits accepted for t > 1e-8. Degenerate triangles never hit.
std::optional<HitRecord> intersect(const Ray& ray, const Vec3& v0, const Vec3& v1,
                                   const Vec3& v2);

// One placement of the adversarial mesh. When rest_on_roof is set the mesh
// is lifted so its lowest vertex touches the pose's z plane; the lift is
// recomputed per render and held constant in the backward pass.
struct MeshInstance {
    Pose pose;
    bool rest_on_roof = true;
};

struct RenderResult {
    PointCloud cloud;                 // kept base points, then hit points
    std::vector<HitRecord> hits;      // hit i maps to cloud point first_hit_index + i
    int first_hit_index = 0;
    std::vector<int> kept_base;       // indices into the input base cloud
    std::vector<double> lifts;        // per-instance z lift applied
};

// G(P, M, t): casts the pattern against all placed instances, appends the
// closest hit per ray (reflectivity 0) and removes base points that lie on
// an occluded ray (within half a step in azimuth and elevation, and farther
// than the hit).
RenderResult render(const PointCloud& base_cloud, const TriangleMesh& mesh,
                    const std::vector<MeshInstance>& instances, const RayPattern& pattern);

// Single-placement convenience wrapper.
RenderResult render(const PointCloud& base_cloud, const TriangleMesh& mesh, const Pose& pose,
                    const RayPattern& pattern, bool rest_on_roof = true);

// Re-evaluates hit points for new mesh vertices with the ray->face
// assignment, occlusion mask and roof lifts frozen from a previous render
// (plane intersection only, no bounds checks). Basis of the
// finite-difference gradient checks.
PointCloud render_frozen(const PointCloud& base_cloud, const TriangleMesh& mesh,
                         const std::vector<MeshInstance>& instances, const RayPattern& pattern,
                         const RenderResult& reference);

// d(hit point)/d(v0, v1, v2) for a fixed ray, 3x9 row-major. Throws when the
// Moller-Trumbore determinant is below 1e-12; callers drop such hits.
std::array<std::array<double, 9>, 3> hit_jacobian(const Ray& ray, const Vec3& v0, const Vec3& v1,
                                                  const Vec3& v2);

}  // namespace advmesh
