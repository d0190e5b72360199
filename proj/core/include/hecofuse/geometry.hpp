#pragma once

#include <array>
#include <cmath>
#include <optional>

#include "hecofuse/errors.hpp"

namespace hecofuse {

struct Vec3 {
    double x = 0.0, y = 0.0, z = 0.0;

    Vec3 operator+(const Vec3& o) const { return {x + o.x, y + o.y, z + o.z}; }
    Vec3 operator-(const Vec3& o) const { return {x - o.x, y - o.y, z - o.z}; }
    Vec3 operator*(double s) const { return {x * s, y * s, z * s}; }
    double dot(const Vec3& o) const { return x * o.x + y * o.y + z * o.z; }
    Vec3 cross(const Vec3& o) const {
        return {y * o.z - z * o.y, z * o.x - x * o.z, x * o.y - y * o.x};
    }
    double norm() const { return std::sqrt(dot(*this)); }
    Vec3 normalized() const {
        const double n = norm();
        if (n == 0.0) throw DomainError("normalizing zero vector");
        return {x / n, y / n, z / n};
    }
};

struct Vec2 {
    double x = 0.0, y = 0.0;
};

// BEV grid over a ground-plane rectangle. Rows index y, columns index x.
struct BevGridSpec {
    double x_min, x_max, y_min, y_max;
    double cell_size;
    int rows, cols;  // rows = (y_max - y_min) / cell_size

    BevGridSpec(double x_min_, double x_max_, double y_min_, double y_max_,
                double cell_size_);

    double cell_center_x(int col) const {
        return x_min + (col + 0.5) * cell_size;
    }
    double cell_center_y(int row) const {
        return y_min + (row + 0.5) * cell_size;
    }
};

// Rigid transform: world_point = rotation * local_point + translation.
struct Pose {
    // Row-major 3x3 rotation.
    std::array<double, 9> rotation{1, 0, 0, 0, 1, 0, 0, 0, 1};
    Vec3 translation;

    static Pose identity() { return Pose{}; }
    // Rotation about world z by yaw, then translate.
    static Pose from_yaw(double yaw, const Vec3& t);
    // Camera pose at `eye` looking at `target`: camera z forward, x right,
    // y down, with world z up.
    static Pose look_at(const Vec3& eye, const Vec3& target);

    void validate() const;  // orthonormality and det +1 within 1e-6

    Vec3 apply(const Vec3& p) const;
    Vec3 apply_inverse(const Vec3& p) const;
    Pose inverse() const;
    Pose compose(const Pose& inner) const;  // this * inner
};

struct CameraIntrinsics {
    double fx, fy, cx, cy;
    int width, height;

    CameraIntrinsics(double fx_, double fy_, double cx_, double cy_,
                     int width_, int height_);
};

struct OrientedBox3D {
    Vec3 center;
    double length, width, height;  // all > 0
    double yaw;                    // radians in [-pi, pi), about world z from +x
    int class_id = 0;
    double score = 1.0;  // meaningful for predictions only

    OrientedBox3D() : length(1), width(1), height(1), yaw(0) {}
    OrientedBox3D(const Vec3& c, double l, double w, double h, double y,
                  int cls = 0, double s = 1.0);
};

double normalize_yaw(double yaw);  // wrap into [-pi, pi)

// Cell indices when p lies inside the grid ranges (half-open on the max
// edges), nullopt otherwise.
std::optional<std::pair<int, int>> world_to_bev_cell(const Vec3& p,
                                                     const BevGridSpec& grid);

// Pinhole back-projection followed by the camera pose.
Vec3 pixel_depth_to_world(double u, double v, double d,
                          const CameraIntrinsics& K, const Pose& cam_pose);

// Forward projection; returns (u, v, depth) or nullopt when the point is
// behind the camera.
std::optional<std::array<double, 3>> world_to_pixel(const Vec3& p,
                                                    const CameraIntrinsics& K,
                                                    const Pose& cam_pose);

// Ground-plane footprint corners, counter-clockwise.
std::array<Vec2, 4> box_bev_corners(const OrientedBox3D& b);

// Nearest intersection distance of the ray origin + t*dir (t > eps) with the
// oriented box, via the slab test in box coordinates.
std::optional<double> ray_box_intersect(const Vec3& origin, const Vec3& dir,
                                        const OrientedBox3D& box);

bool point_in_box(const Vec3& p, const OrientedBox3D& box);

}  // namespace hecofuse
