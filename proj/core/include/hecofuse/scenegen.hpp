#pragma once

#include <cstdint>
#include <vector>

#include "hecofuse/geometry.hpp"
#include "hecofuse/tensor.hpp"

namespace hecofuse {

// Object classes used throughout: car, bus, pedestrian, cyclist.
inline constexpr int kNumClasses = 4;

struct ClassPrior {
    const char* name;
    double length, width, height;
};

const ClassPrior& class_prior(int class_id);

struct Scene {
    std::vector<OrientedBox3D> objects;
    std::uint64_t seed = 0;
};

struct LidarPoint {
    double x, y, z;
    double intensity;  // in [0, 1]
};

// Points in the coordinate frame of the emitting sensor.
struct PointCloud {
    std::vector<LidarPoint> points;
};

struct SyntheticImage {
    int width = 0, height = 0;
    // Class-coded per-pixel features, shape (1, kNumClasses + 1, height,
    // width); channel kNumClasses is the background code.
    Tensor4 features;
    // True z-depth per pixel, row-major; +inf for background. Oracle-only:
    // the model never reads this.
    std::vector<double> depth;
};

// Deterministic scene with non-overlapping footprints inside the grid.
// Objects are separated so their circumscribed footprint circles are
// disjoint, which bounds pairwise footprint IoU at zero.
Scene generate_scene(std::uint64_t seed, int n_objects,
                     const BevGridSpec& grid);

// Surface-sampled LiDAR with nearest-surface occlusion and Gaussian range
// noise. Output points are in the sensor frame.
PointCloud simulate_lidar(const Scene& scene, const Pose& sensor_pose,
                          int rays_per_object, double noise_sigma,
                          std::uint64_t seed);

PointCloud transform_cloud(const PointCloud& pc, const Pose& sensor_pose);

// Per-pixel ray-cast rasterization of object footprints into class channels
// plus the hidden depth map. feature_noise_sigma perturbs the class codes.
SyntheticImage simulate_camera(const Scene& scene, const CameraIntrinsics& K,
                               const Pose& cam_pose, std::uint64_t seed,
                               double feature_noise_sigma = 0.0);

}  // namespace hecofuse
