#pragma once

#include <array>
#include <cmath>
#include <iosfwd>

namespace advmesh {

struct Vec3 {
    double x = 0.0;
    double y = 0.0;
    double z = 0.0;

    double& operator[](int i) { return i == 0 ? x : (i == 1 ? y : z); }
    double operator[](int i) const { return i == 0 ? x : (i == 1 ? y : z); }

    Vec3 operator+(const Vec3& o) const { return {x + o.x, y + o.y, z + o.z}; }
    Vec3 operator-(const Vec3& o) const { return {x - o.x, y - o.y, z - o.z}; }
    Vec3 operator*(double s) const { return {x * s, y * s, z * s}; }
    Vec3 operator/(double s) const { return {x / s, y / s, z / s}; }
    Vec3 operator-() const { return {-x, -y, -z}; }
    Vec3& operator+=(const Vec3& o) { x += o.x; y += o.y; z += o.z; return *this; }
    Vec3& operator-=(const Vec3& o) { x -= o.x; y -= o.y; z -= o.z; return *this; }
    Vec3& operator*=(double s) { x *= s; y *= s; z *= s; return *this; }
};

inline Vec3 operator*(double s, const Vec3& v) { return v * s; }

inline double dot(const Vec3& a, const Vec3& b) { return a.x * b.x + a.y * b.y + a.z * b.z; }

inline Vec3 cross(const Vec3& a, const Vec3& b) {
    return {a.y * b.z - a.z * b.y, a.z * b.x - a.x * b.z, a.x * b.y - a.y * b.x};
}

inline double norm2(const Vec3& v) { return dot(v, v); }
inline double norm(const Vec3& v) { return std::sqrt(norm2(v)); }

inline Vec3 normalized(const Vec3& v) {
    double n = norm(v);
    return n > 0.0 ? v / n : Vec3{};
}

inline Vec3 clamp_box(const Vec3& v, const Vec3& lo, const Vec3& hi) {
    auto c = [](double t, double a, double b) { return t < a ? a : (t > b ? b : t); };
    return {c(v.x, lo.x, hi.x), c(v.y, lo.y, hi.y), c(v.z, lo.z, hi.z)};
}

// Rigid pose: rotation by yaw about +z, then translation. All placements in
// this engine (rooftop poses, scene objects) are gravity-aligned.
struct Pose {
    Vec3 translation{};
    double yaw = 0.0;

    Vec3 apply(const Vec3& v) const {
        double c = std::cos(yaw), s = std::sin(yaw);
        return {c * v.x - s * v.y + translation.x,
                s * v.x + c * v.y + translation.y,
                v.z + translation.z};
    }
    // Rotation-only transpose, used to pull world-frame gradients back into
    // the object frame.
    Vec3 rotate_back(const Vec3& v) const {
        double c = std::cos(yaw), s = std::sin(yaw);
        return {c * v.x + s * v.y, -s * v.x + c * v.y, v.z};
    }
};

constexpr double kPi = 3.14159265358979323846;

inline double deg2rad(double d) { return d * kPi / 180.0; }
inline double rad2deg(double r) { return r * 180.0 / kPi; }

// Wrap angle to (-pi, pi].
inline double wrap_angle(double a) {
    a = std::fmod(a + kPi, 2.0 * kPi);
    if (a <= 0.0) a += 2.0 * kPi;
    return a - kPi;
}

// Wrap to (-pi/2, pi/2]; rectangle orientations are only meaningful mod pi.
inline double wrap_half(double a) {
    a = std::fmod(a, kPi);
    if (a > 0.5 * kPi) a -= kPi;
    if (a <= -0.5 * kPi) a += kPi;
    return a;
}

inline double sigmoid(double s) {
    if (s >= 0.0) return 1.0 / (1.0 + std::exp(-s));
    double e = std::exp(s);
    return e / (1.0 + e);
}

}  // namespace advmesh
