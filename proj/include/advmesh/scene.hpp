#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "advmesh/boxes.hpp"
#include "advmesh/lidar.hpp"
#include "advmesh/pointcloud.hpp"

namespace advmesh {

struct SceneSample {
    PointCloud cloud;
    std::vector<Box3D> gt_boxes;       // class "Car" only
    std::vector<Pose> rooftop_poses;   // one per GT box, top-face center
};

// KITTI velodyne .bin: little-endian float32 quadruples, reflectivity
// forcibly zeroed. Throws on byte counts not divisible by 16.
PointCloud load_kitti_bin(const std::string& bytes);
std::string save_kitti_bin(const PointCloud& cloud);

// KITTI label lines (15 whitespace-separated fields). Only "Car" rows are
// kept and converted to the sensor frame with the fixed camera-to-lidar
// convention: lidar x = cam z, lidar y = -cam x, lidar z = -cam y, yaw =
// -rotation_y - pi/2; the label location is the bottom-face center.
std::vector<Box3D> load_kitti_labels(const std::string& text);

struct SyntheticSceneSpec {
    // car size distribution; default spread 0 keeps anchors exact
    double car_l = 4.0, car_w = 1.7, car_h = 1.5;
    double size_spread = 0.0;          // uniform half-width per dimension
    double dist_min = 6.0, dist_max = 25.0;
    double lateral_max = 8.0;
    double yaw_max = kPi / 6.0;        // yaw uniform in [-yaw_max, yaw_max]
    int n_cars = 1;
    double ground_z = 0.0;
    bool ground_plane = true;
    int clutter_points = 120;          // uniform sprinkle, z in [0, 2.5]
    int n_poles = 3;                   // vertical clutter columns
    double pole_half_width = 0.12;
    double pole_height_min = 2.0, pole_height_max = 3.0;
    int min_points_per_box = 10;
    int max_retries = 20;

    void validate() const;
};

// Deterministic synthetic scene: ground plane plus cuboid cars and poles
// sampled through the ray caster, then uniform clutter. Scenes failing the
// >= 10 points-in-box filter are resampled; throws when retries run out.
SceneSample synth_scene(const SyntheticSceneSpec& spec, const RayPattern& pattern,
                        uint64_t seed);

// Rooftop placement: translation at the top-face center, rotation by the
// box yaw. The mesh rests tangent to the roof plane (see MeshInstance).
Pose rooftop_pose(const Box3D& box);

// Axis-aligned cuboid mesh helper (cars, poles, fixtures).
TriangleMesh make_cuboid(const Vec3& center, double l, double w, double h, double yaw = 0.0);

int points_in_box(const PointCloud& cloud, const Box3D& box);

}  // namespace advmesh
