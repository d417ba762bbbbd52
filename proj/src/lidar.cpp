#include "advmesh/lidar.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <unordered_map>

namespace advmesh {

void RayPattern::validate() const {
    if (azimuth_step_deg <= 0.0) throw std::invalid_argument("pattern: azimuth step must be > 0");
    if (azimuth_end_deg < azimuth_start_deg)
        throw std::invalid_argument("pattern: azimuth sector end < start");
    if (max_range <= 0.0) throw std::invalid_argument("pattern: max range must be > 0");
    for (size_t i = 1; i < elevations_deg.size(); ++i)
        if (!(elevations_deg[i] < elevations_deg[i - 1]))
            throw std::invalid_argument("pattern: elevations must be strictly decreasing");
}

int RayPattern::azimuth_count() const {
    return static_cast<int>(std::floor((azimuth_end_deg - azimuth_start_deg) / azimuth_step_deg +
                                       1e-9)) + 1;
}

Ray RayPattern::ray(int ray_id) const {
    const int n_az = azimuth_count();
    const int ei = ray_id / n_az;
    const int ai = ray_id % n_az;
    const double el = deg2rad(elevations_deg[ei]);
    const double az = deg2rad(azimuth_start_deg + ai * azimuth_step_deg);
    return {sensor_origin,
            {std::cos(el) * std::cos(az), std::cos(el) * std::sin(az), std::sin(el)}};
}

double RayPattern::elevation_step_deg() const {
    if (elevations_deg.size() < 2) return azimuth_step_deg;
    double step = 1e300;
    for (size_t i = 1; i < elevations_deg.size(); ++i)
        step = std::min(step, elevations_deg[i - 1] - elevations_deg[i]);
    return step;
}

RayPattern hdl64_pattern(const Hdl64Config& config) {
    RayPattern p;
    const double top = 2.0, bottom = -24.8;
    const double step = (top - bottom) / 63.0;  // ~0.4254 deg per line
    const int lines = config.rooftop_only ? 10 : 64;
    p.elevations_deg.reserve(lines);
    for (int i = 0; i < lines; ++i) p.elevations_deg.push_back(top - i * step);
    p.azimuth_start_deg = config.azimuth_start_deg;
    p.azimuth_end_deg = config.azimuth_end_deg;
    p.azimuth_step_deg = config.azimuth_step_deg;
    p.sensor_origin = config.sensor_origin;
    p.max_range = config.max_range;
    p.validate();
    return p;
}

std::optional<HitRecord> intersect(const Ray& ray, const Vec3& v0, const Vec3& v1,
                                   const Vec3& v2) {
    constexpr double kDetEps = 1e-12;
    constexpr double kRayEps = 1e-8;
    const Vec3 e1 = v1 - v0;
    const Vec3 e2 = v2 - v0;
    const Vec3 pvec = cross(ray.direction, e2);
    const double det = dot(e1, pvec);
    if (std::abs(det) < kDetEps) return std::nullopt;  // parallel or degenerate
    const double inv_det = 1.0 / det;
    const Vec3 tvec = ray.origin - v0;
    const double u = dot(tvec, pvec) * inv_det;
    if (u < 0.0 || u > 1.0) return std::nullopt;
    const Vec3 qvec = cross(tvec, e1);
    const double v = dot(ray.direction, qvec) * inv_det;
    if (v < 0.0 || u + v > 1.0) return std::nullopt;
    const double t = dot(e2, qvec) * inv_det;
    if (t <= kRayEps) return std::nullopt;
    HitRecord hit;
    hit.t = t;
    hit.u = u;
    hit.v = v;
    hit.point = ray.origin + ray.direction * t;
    return hit;
}

namespace {

struct WorldInstance {
    std::vector<Vec3> vertices;  // pose- and lift-transformed
    Vec3 sphere_center;
    double sphere_radius = 0.0;
    double lift = 0.0;
};

double roof_lift(const TriangleMesh& mesh) {
    double min_z = 1e300;
    for (const auto& v : mesh.vertices) min_z = std::min(min_z, v.z);
    return -min_z;
}

WorldInstance make_world_instance(const TriangleMesh& mesh, const MeshInstance& inst,
                                  double lift) {
    WorldInstance w;
    w.lift = lift;
    w.vertices.resize(mesh.vertices.size());
    Vec3 mean{};
    for (size_t i = 0; i < mesh.vertices.size(); ++i) {
        Vec3 local = mesh.vertices[i];
        local.z += lift;
        w.vertices[i] = inst.pose.apply(local);
        mean += w.vertices[i];
    }
    if (!w.vertices.empty()) mean = mean / static_cast<double>(w.vertices.size());
    w.sphere_center = mean;
    for (const auto& v : w.vertices)
        w.sphere_radius = std::max(w.sphere_radius, norm(v - mean));
    w.sphere_radius += 1e-9;
    return w;
}

bool ray_hits_sphere(const Ray& ray, const Vec3& center, double radius, double max_range) {
    const Vec3 L = center - ray.origin;
    const double tc = dot(L, ray.direction);
    if (tc + radius <= 0.0 || tc - radius > max_range) return false;
    const double d2 = dot(L, L) - tc * tc;
    return d2 <= radius * radius;
}

}  // namespace

RenderResult render(const PointCloud& base_cloud, const TriangleMesh& mesh,
                    const std::vector<MeshInstance>& instances, const RayPattern& pattern) {
    pattern.validate();
    RenderResult out;
    out.lifts.reserve(instances.size());
    const double base_lift = instances.empty() ? 0.0 : roof_lift(mesh);
    std::vector<WorldInstance> world;
    world.reserve(instances.size());
    for (const auto& inst : instances) {
        double lift = inst.rest_on_roof ? base_lift : 0.0;
        world.push_back(make_world_instance(mesh, inst, lift));
        out.lifts.push_back(lift);
    }

    const int n_rays = pattern.elevations_deg.empty() ? 0 : pattern.ray_count();
    for (int id = 0; id < n_rays; ++id) {
        const Ray r = pattern.ray(id);
        HitRecord best;
        best.t = pattern.max_range;
        bool found = false;
        for (size_t k = 0; k < world.size(); ++k) {
            const WorldInstance& w = world[k];
            if (!ray_hits_sphere(r, w.sphere_center, w.sphere_radius, pattern.max_range))
                continue;
            for (size_t f = 0; f < mesh.faces.size(); ++f) {
                const auto& face = mesh.faces[f];
                auto hit = intersect(r, w.vertices[face[0]], w.vertices[face[1]],
                                     w.vertices[face[2]]);
                if (hit && hit->t < best.t) {
                    best = *hit;
                    best.ray_id = id;
                    best.instance_id = static_cast<int>(k);
                    best.face_id = static_cast<int>(f);
                    found = true;
                }
            }
        }
        if (found) out.hits.push_back(best);
    }

    // Occlusion: a base point within half a step (azimuth and elevation) of a
    // hitting ray and farther than the hit is removed.
    std::unordered_map<int64_t, double> hit_range;
    const int n_az = pattern.elevations_deg.empty() ? 1 : pattern.azimuth_count();
    for (const auto& h : out.hits) hit_range[h.ray_id] = h.t;
    const double el_half = 0.5 * pattern.elevation_step_deg();
    const double az_half = 0.5 * pattern.azimuth_step_deg;

    out.kept_base.reserve(base_cloud.size());
    for (size_t i = 0; i < base_cloud.size(); ++i) {
        const CloudPoint& p = base_cloud.points[i];
        bool removed = false;
        if (!out.hits.empty()) {
            const Vec3 rel = p.xyz() - pattern.sensor_origin;
            const double range = norm(rel);
            if (range > 1e-12) {
                const double az = rad2deg(std::atan2(rel.y, rel.x));
                const double el = rad2deg(std::atan2(rel.z, std::hypot(rel.x, rel.y)));
                int best_e = -1;
                double best_de = el_half;
                for (size_t e = 0; e < pattern.elevations_deg.size(); ++e) {
                    double de = std::abs(el - pattern.elevations_deg[e]);
                    if (de <= best_de) { best_de = de; best_e = static_cast<int>(e); }
                }
                if (best_e >= 0) {
                    int ai = static_cast<int>(std::lround((az - pattern.azimuth_start_deg) /
                                                          pattern.azimuth_step_deg));
                    if (ai >= 0 && ai < n_az &&
                        std::abs(az - (pattern.azimuth_start_deg + ai * pattern.azimuth_step_deg)) <=
                            az_half) {
                        auto it = hit_range.find(best_e * n_az + ai);
                        if (it != hit_range.end() && range > it->second) removed = true;
                    }
                }
            }
        }
        if (!removed) {
            out.kept_base.push_back(static_cast<int>(i));
            out.cloud.points.push_back(p);
        }
    }
    out.first_hit_index = static_cast<int>(out.cloud.points.size());
    for (const auto& h : out.hits) out.cloud.push(h.point);
    return out;
}

RenderResult render(const PointCloud& base_cloud, const TriangleMesh& mesh, const Pose& pose,
                    const RayPattern& pattern, bool rest_on_roof) {
    return render(base_cloud, mesh, {MeshInstance{pose, rest_on_roof}}, pattern);
}

PointCloud render_frozen(const PointCloud& base_cloud, const TriangleMesh& mesh,
                         const std::vector<MeshInstance>& instances, const RayPattern& pattern,
                         const RenderResult& reference) {
    std::vector<WorldInstance> world;
    world.reserve(instances.size());
    for (size_t k = 0; k < instances.size(); ++k)
        world.push_back(make_world_instance(mesh, instances[k], reference.lifts[k]));

    PointCloud out;
    out.points.reserve(reference.cloud.size());
    for (int idx : reference.kept_base) out.points.push_back(base_cloud.points[idx]);
    for (const auto& h : reference.hits) {
        const Ray r = pattern.ray(h.ray_id);
        const auto& face = mesh.faces[h.face_id];
        const WorldInstance& w = world[h.instance_id];
        const Vec3 v0 = w.vertices[face[0]];
        const Vec3 n = cross(w.vertices[face[1]] - v0, w.vertices[face[2]] - v0);
        const double denom = dot(r.direction, n);
        double t = std::abs(denom) < 1e-12 ? h.t : dot(v0 - r.origin, n) / denom;
        out.push(r.origin + r.direction * t);
    }
    return out;
}

std::array<std::array<double, 9>, 3> hit_jacobian(const Ray& ray, const Vec3& v0, const Vec3& v1,
                                                  const Vec3& v2) {
    const Vec3 e1 = v1 - v0;
    const Vec3 e2 = v2 - v0;
    const Vec3 n = cross(e1, e2);
    const double denom = dot(ray.direction, n);
    if (std::abs(denom) < 1e-12)
        throw std::runtime_error("hit_jacobian: near-degenerate determinant");
    const Vec3 w = v0 - ray.origin;
    const double a = dot(w, n);
    // t = a / denom with a = w.n and denom = d.n; gradients of n fold into
    // cross products against w and d.
    const Vec3 grad_a[3] = {n + cross(e1 - e2, w), cross(e2, w), cross(w, e1)};
    const Vec3 grad_d[3] = {cross(e1 - e2, ray.direction), cross(e2, ray.direction),
                            cross(ray.direction, e1)};
    std::array<std::array<double, 9>, 3> jac{};
    const double inv2 = 1.0 / (denom * denom);
    for (int blk = 0; blk < 3; ++blk) {
        const Vec3 grad_t = (grad_a[blk] * denom - grad_d[blk] * a) * inv2;
        for (int r = 0; r < 3; ++r)
            for (int c = 0; c < 3; ++c)
                jac[r][blk * 3 + c] = ray.direction[r] * grad_t[c];
    }
    return jac;
}

}  // namespace advmesh
