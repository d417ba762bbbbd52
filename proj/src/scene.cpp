#include "advmesh/scene.hpp"

#include <cmath>
#include <cstring>
#include <sstream>
#include <stdexcept>

namespace advmesh {

PointCloud load_kitti_bin(const std::string& bytes) {
    if (bytes.size() % 16 != 0)
        throw std::invalid_argument("kitti bin: byte length not divisible by 16");
    PointCloud cloud;
    const size_t n = bytes.size() / 16;
    cloud.points.resize(n);
    for (size_t i = 0; i < n; ++i) {
        float f[4];
        std::memcpy(f, bytes.data() + i * 16, 16);
        cloud.points[i] = {static_cast<double>(f[0]), static_cast<double>(f[1]),
                           static_cast<double>(f[2]), 0.0};  // reflectivity zeroed
    }
    return cloud;
}

std::string save_kitti_bin(const PointCloud& cloud) {
    std::string bytes(cloud.size() * 16, '\0');
    for (size_t i = 0; i < cloud.size(); ++i) {
        const auto& p = cloud.points[i];
        float f[4] = {static_cast<float>(p.x), static_cast<float>(p.y),
                      static_cast<float>(p.z), static_cast<float>(p.reflectivity)};
        std::memcpy(bytes.data() + i * 16, f, 16);
    }
    return bytes;
}

std::vector<Box3D> load_kitti_labels(const std::string& text) {
    std::vector<Box3D> boxes;
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::istringstream ls(line);
        std::string type;
        ls >> type;
        double fields[14];
        for (int k = 0; k < 14; ++k) {
            if (!(ls >> fields[k]))
                throw std::invalid_argument("kitti label parse error at line " +
                                            std::to_string(lineno));
        }
        if (type != "Car") continue;
        const double h = fields[7], w = fields[8], l = fields[9];
        const double cam_x = fields[10], cam_y = fields[11], cam_z = fields[12];
        const double ry = fields[13];
        Box3D b;
        b.center = {cam_z, -cam_x, -cam_y + 0.5 * h};  // label gives bottom-face center
        b.l = l;
        b.w = w;
        b.h = h;
        b.yaw = wrap_angle(-ry - 0.5 * kPi);
        b.validate();
        boxes.push_back(b);
    }
    return boxes;
}

void SyntheticSceneSpec::validate() const {
    if (car_l <= 0 || car_w <= 0 || car_h <= 0)
        throw std::invalid_argument("scene spec: car size must be positive");
    if (dist_min <= 0 || dist_max < dist_min)
        throw std::invalid_argument("scene spec: bad distance range");
    if (n_cars < 1) throw std::invalid_argument("scene spec: need at least one car");
    if (size_spread < 0) throw std::invalid_argument("scene spec: negative size spread");
}

TriangleMesh make_cuboid(const Vec3& center, double l, double w, double h, double yaw) {
    TriangleMesh m;
    const double hl = 0.5 * l, hw = 0.5 * w, hh = 0.5 * h;
    m.vertices = {
        {-hl, -hw, -hh}, {hl, -hw, -hh}, {hl, hw, -hh}, {-hl, hw, -hh},
        {-hl, -hw, hh}, {hl, -hw, hh}, {hl, hw, hh}, {-hl, hw, hh},
    };
    m.faces = {
        {0, 2, 1}, {0, 3, 2},  // bottom
        {4, 5, 6}, {4, 6, 7},  // top
        {0, 1, 5}, {0, 5, 4},  // -y
        {2, 3, 7}, {2, 7, 6},  // +y
        {1, 2, 6}, {1, 6, 5},  // +x
        {3, 0, 4}, {3, 4, 7},  // -x
    };
    Pose pose{center, yaw};
    for (auto& v : m.vertices) v = pose.apply(v);
    return m;
}

int points_in_box(const PointCloud& cloud, const Box3D& box) {
    const double c = std::cos(box.yaw), s = std::sin(box.yaw);
    int count = 0;
    for (const auto& p : cloud.points) {
        const double dx = p.x - box.center.x, dy = p.y - box.center.y, dz = p.z - box.center.z;
        const double lx = c * dx + s * dy;
        const double ly = -s * dx + c * dy;
        if (std::abs(lx) <= 0.5 * box.l && std::abs(ly) <= 0.5 * box.w &&
            std::abs(dz) <= 0.5 * box.h)
            ++count;
    }
    return count;
}

namespace {

void append_mesh(TriangleMesh& dst, const TriangleMesh& src) {
    const int base = static_cast<int>(dst.vertices.size());
    dst.vertices.insert(dst.vertices.end(), src.vertices.begin(), src.vertices.end());
    for (const auto& f : src.faces) dst.faces.push_back({f[0] + base, f[1] + base, f[2] + base});
}

}  // namespace

SceneSample synth_scene(const SyntheticSceneSpec& spec, const RayPattern& pattern,
                        uint64_t seed) {
    spec.validate();
    pattern.validate();
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);

    for (int attempt = 0; attempt <= spec.max_retries; ++attempt) {
        SceneSample scene;
        TriangleMesh geometry;
        if (spec.ground_plane) {
            // two huge triangles well beyond the sweep
            TriangleMesh ground;
            const double z = spec.ground_z;
            ground.vertices = {{-10, -80, z}, {150, -80, z}, {150, 80, z}, {-10, 80, z}};
            ground.faces = {{0, 1, 2}, {0, 2, 3}};
            append_mesh(geometry, ground);
        }
        for (int k = 0; k < spec.n_cars; ++k) {
            const double dist = spec.dist_min + (spec.dist_max - spec.dist_min) * unit(rng);
            const double lateral = spec.lateral_max * (2.0 * unit(rng) - 1.0);
            const double yaw = spec.yaw_max * (2.0 * unit(rng) - 1.0);
            auto draw_size = [&](double mean) {
                return mean + spec.size_spread * (2.0 * unit(rng) - 1.0);
            };
            Box3D box;
            box.l = draw_size(spec.car_l);
            box.w = draw_size(spec.car_w);
            box.h = draw_size(spec.car_h);
            box.center = {dist, lateral, spec.ground_z + 0.5 * box.h};
            box.yaw = yaw;
            scene.gt_boxes.push_back(box);
            append_mesh(geometry, make_cuboid(box.center, box.l, box.w, box.h, box.yaw));
        }
        for (int k = 0; k < spec.n_poles; ++k) {
            const double x = 5.0 + 23.0 * unit(rng);
            const double y = 10.0 * (2.0 * unit(rng) - 1.0);
            const double h = spec.pole_height_min +
                             (spec.pole_height_max - spec.pole_height_min) * unit(rng);
            bool clear = true;
            for (const auto& b : scene.gt_boxes)
                if (std::hypot(x - b.center.x, y - b.center.y) < 4.0) clear = false;
            if (!clear) continue;
            append_mesh(geometry, make_cuboid({x, y, spec.ground_z + 0.5 * h},
                                              2 * spec.pole_half_width, 2 * spec.pole_half_width,
                                              h, 0.0));
        }

        RenderResult rendered = render(PointCloud{}, geometry, Pose{}, pattern,
                                       /*rest_on_roof=*/false);
        scene.cloud = std::move(rendered.cloud);
        for (int k = 0; k < spec.clutter_points; ++k) {
            const double x = 4.0 + 26.0 * unit(rng);
            const double y = 10.0 * (2.0 * unit(rng) - 1.0);
            const double z = spec.ground_z + 2.5 * unit(rng);
            scene.cloud.push({x, y, z});
        }

        bool ok = true;
        for (const auto& b : scene.gt_boxes)
            if (points_in_box(scene.cloud, b) < spec.min_points_per_box) ok = false;
        if (!ok) continue;
        for (const auto& b : scene.gt_boxes) scene.rooftop_poses.push_back(rooftop_pose(b));
        return scene;
    }
    throw std::runtime_error("synth_scene: retries exhausted without a valid scene");
}

Pose rooftop_pose(const Box3D& box) {
    return Pose{{box.center.x, box.center.y, box.center.z + 0.5 * box.h}, box.yaw};
}

}  // namespace advmesh
