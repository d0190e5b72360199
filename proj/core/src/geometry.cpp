#include "hecofuse/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace hecofuse {

BevGridSpec::BevGridSpec(double x_min_, double x_max_, double y_min_,
                         double y_max_, double cell_size_)
    : x_min(x_min_), x_max(x_max_), y_min(y_min_), y_max(y_max_),
      cell_size(cell_size_) {
    if (cell_size <= 0.0 || x_max <= x_min || y_max <= y_min) {
        throw ConfigError("BevGridSpec: degenerate ranges or cell size");
    }
    const double nx = (x_max - x_min) / cell_size;
    const double ny = (y_max - y_min) / cell_size;
    cols = static_cast<int>(std::lround(nx));
    rows = static_cast<int>(std::lround(ny));
    if (std::abs(nx - cols) > 1e-9 || std::abs(ny - rows) > 1e-9) {
        throw ConfigError("BevGridSpec: ranges must divide evenly by cell size");
    }
    if (rows < 4 || cols < 4) {
        throw ConfigError("BevGridSpec: grid must be at least 4x4 cells");
    }
}

Pose Pose::from_yaw(double yaw, const Vec3& t) {
    Pose p;
    const double c = std::cos(yaw), s = std::sin(yaw);
    p.rotation = {c, -s, 0, s, c, 0, 0, 0, 1};
    p.translation = t;
    return p;
}

Pose Pose::look_at(const Vec3& eye, const Vec3& target) {
    const Vec3 forward = (target - eye).normalized();
    Vec3 up{0, 0, 1};
    if (std::abs(forward.dot(up)) > 0.999) up = Vec3{0, 1, 0};
    const Vec3 right = forward.cross(up).normalized();
    const Vec3 down = forward.cross(right).normalized();
    Pose p;
    // Columns are the world directions of the camera axes (x right, y down,
    // z forward).
    p.rotation = {right.x, down.x, forward.x,
                  right.y, down.y, forward.y,
                  right.z, down.z, forward.z};
    p.translation = eye;
    return p;
}

void Pose::validate() const {
    const auto& r = rotation;
    // R^T R == I
    for (int i = 0; i < 3; ++i) {
        for (int j = 0; j < 3; ++j) {
            double dot = 0.0;
            for (int k = 0; k < 3; ++k) dot += r[k * 3 + i] * r[k * 3 + j];
            const double expect = (i == j) ? 1.0 : 0.0;
            if (std::abs(dot - expect) > 1e-6) {
                throw DomainError("Pose: rotation is not orthonormal");
            }
        }
    }
    const double det =
        r[0] * (r[4] * r[8] - r[5] * r[7]) - r[1] * (r[3] * r[8] - r[5] * r[6]) +
        r[2] * (r[3] * r[7] - r[4] * r[6]);
    if (std::abs(det - 1.0) > 1e-6) {
        throw DomainError("Pose: rotation determinant is not +1");
    }
}

Vec3 Pose::apply(const Vec3& p) const {
    const auto& r = rotation;
    return {r[0] * p.x + r[1] * p.y + r[2] * p.z + translation.x,
            r[3] * p.x + r[4] * p.y + r[5] * p.z + translation.y,
            r[6] * p.x + r[7] * p.y + r[8] * p.z + translation.z};
}

Vec3 Pose::apply_inverse(const Vec3& p) const {
    const Vec3 d = p - translation;
    const auto& r = rotation;
    return {r[0] * d.x + r[3] * d.y + r[6] * d.z,
            r[1] * d.x + r[4] * d.y + r[7] * d.z,
            r[2] * d.x + r[5] * d.y + r[8] * d.z};
}

Pose Pose::inverse() const {
    Pose inv;
    const auto& r = rotation;
    inv.rotation = {r[0], r[3], r[6], r[1], r[4], r[7], r[2], r[5], r[8]};
    const Vec3 t = translation;
    inv.translation = Vec3{0, 0, 0} - Vec3{inv.rotation[0] * t.x +
                                               inv.rotation[1] * t.y +
                                               inv.rotation[2] * t.z,
                                           inv.rotation[3] * t.x +
                                               inv.rotation[4] * t.y +
                                               inv.rotation[5] * t.z,
                                           inv.rotation[6] * t.x +
                                               inv.rotation[7] * t.y +
                                               inv.rotation[8] * t.z};
    return inv;
}

Pose Pose::compose(const Pose& inner) const {
    Pose out;
    const auto& a = rotation;
    const auto& b = inner.rotation;
    for (int i = 0; i < 3; ++i) {
        for (int j = 0; j < 3; ++j) {
            double acc = 0.0;
            for (int k = 0; k < 3; ++k) acc += a[i * 3 + k] * b[k * 3 + j];
            out.rotation[i * 3 + j] = acc;
        }
    }
    out.translation = apply(inner.translation);
    return out;
}

CameraIntrinsics::CameraIntrinsics(double fx_, double fy_, double cx_,
                                   double cy_, int width_, int height_)
    : fx(fx_), fy(fy_), cx(cx_), cy(cy_), width(width_), height(height_) {
    if (fx <= 0 || fy <= 0 || cx < 0 || cx >= width || cy < 0 || cy >= height ||
        width < 1 || height < 1) {
        throw ConfigError("CameraIntrinsics: invalid parameters");
    }
}

OrientedBox3D::OrientedBox3D(const Vec3& c, double l, double w, double h,
                             double y, int cls, double s)
    : center(c), length(l), width(w), height(h), yaw(normalize_yaw(y)),
      class_id(cls), score(s) {
    if (l <= 0 || w <= 0 || h <= 0) {
        throw DomainError("OrientedBox3D: size components must be positive");
    }
}

double normalize_yaw(double yaw) {
    yaw = std::fmod(yaw + M_PI, 2.0 * M_PI);
    if (yaw < 0) yaw += 2.0 * M_PI;
    return yaw - M_PI;
}

std::optional<std::pair<int, int>> world_to_bev_cell(const Vec3& p,
                                                     const BevGridSpec& grid) {
    if (p.x < grid.x_min || p.x >= grid.x_max || p.y < grid.y_min ||
        p.y >= grid.y_max) {
        return std::nullopt;
    }
    const int col = static_cast<int>((p.x - grid.x_min) / grid.cell_size);
    const int row = static_cast<int>((p.y - grid.y_min) / grid.cell_size);
    return std::make_pair(std::min(row, grid.rows - 1),
                          std::min(col, grid.cols - 1));
}

Vec3 pixel_depth_to_world(double u, double v, double d,
                          const CameraIntrinsics& K, const Pose& cam_pose) {
    if (d <= 0.0) throw DomainError("pixel_depth_to_world: depth must be > 0");
    const Vec3 cam{(u - K.cx) * d / K.fx, (v - K.cy) * d / K.fy, d};
    return cam_pose.apply(cam);
}

std::optional<std::array<double, 3>> world_to_pixel(const Vec3& p,
                                                    const CameraIntrinsics& K,
                                                    const Pose& cam_pose) {
    const Vec3 cam = cam_pose.apply_inverse(p);
    if (cam.z <= 1e-9) return std::nullopt;
    return std::array<double, 3>{K.cx + cam.x * K.fx / cam.z,
                                 K.cy + cam.y * K.fy / cam.z, cam.z};
}

std::array<Vec2, 4> box_bev_corners(const OrientedBox3D& b) {
    const double c = std::cos(b.yaw), s = std::sin(b.yaw);
    const double hl = 0.5 * b.length, hw = 0.5 * b.width;
    // Counter-clockwise in the box frame, then rotated.
    const std::array<Vec2, 4> local{Vec2{hl, hw}, Vec2{-hl, hw}, Vec2{-hl, -hw},
                                    Vec2{hl, -hw}};
    std::array<Vec2, 4> out;
    for (int i = 0; i < 4; ++i) {
        out[i] = Vec2{b.center.x + c * local[i].x - s * local[i].y,
                      b.center.y + s * local[i].x + c * local[i].y};
    }
    return out;
}

std::optional<double> ray_box_intersect(const Vec3& origin, const Vec3& dir,
                                        const OrientedBox3D& box) {
    // Transform the ray into the box frame (yaw about z, centered).
    const double c = std::cos(box.yaw), s = std::sin(box.yaw);
    const Vec3 d0 = origin - box.center;
    const Vec3 o{c * d0.x + s * d0.y, -s * d0.x + c * d0.y, d0.z};
    const Vec3 r{c * dir.x + s * dir.y, -s * dir.x + c * dir.y, dir.z};

    const double half[3] = {0.5 * box.length, 0.5 * box.width,
                            0.5 * box.height};
    const double oo[3] = {o.x, o.y, o.z};
    const double rr[3] = {r.x, r.y, r.z};
    double t_near = -1e300, t_far = 1e300;
    for (int a = 0; a < 3; ++a) {
        if (std::abs(rr[a]) < 1e-12) {
            if (oo[a] < -half[a] || oo[a] > half[a]) return std::nullopt;
            continue;
        }
        double t1 = (-half[a] - oo[a]) / rr[a];
        double t2 = (half[a] - oo[a]) / rr[a];
        if (t1 > t2) std::swap(t1, t2);
        t_near = std::max(t_near, t1);
        t_far = std::min(t_far, t2);
        if (t_near > t_far) return std::nullopt;
    }
    if (t_far < 1e-9) return std::nullopt;
    return t_near >= 1e-9 ? t_near : t_far;
}

bool point_in_box(const Vec3& p, const OrientedBox3D& box) {
    const double c = std::cos(box.yaw), s = std::sin(box.yaw);
    const Vec3 d = p - box.center;
    const double lx = c * d.x + s * d.y;
    const double ly = -s * d.x + c * d.y;
    return std::abs(lx) <= 0.5 * box.length && std::abs(ly) <= 0.5 * box.width &&
           std::abs(d.z) <= 0.5 * box.height;
}

}  // namespace hecofuse
