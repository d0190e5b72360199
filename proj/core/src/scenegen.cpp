#include "hecofuse/scenegen.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "hecofuse/rng.hpp"

namespace hecofuse {

namespace {

constexpr ClassPrior kPriors[kNumClasses] = {
    {"car", 4.5, 1.9, 1.6},
    {"bus", 8.0, 2.9, 3.2},
    {"pedestrian", 0.6, 0.6, 1.7},
    {"cyclist", 1.8, 0.6, 1.6},
};

double footprint_radius(const OrientedBox3D& b) {
    return 0.5 * std::hypot(b.length, b.width);
}

// Uniform point on the box surface, area-weighted across the six faces.
// Returns the point in world coordinates.
Vec3 sample_surface_point(const OrientedBox3D& b, Rng& rng) {
    const double l = b.length, w = b.width, h = b.height;
    const double area_lw = l * w, area_lh = l * h, area_wh = w * h;
    const double total = 2.0 * (area_lw + area_lh + area_wh);
    double pick = rng.uniform() * total;
    double lx, ly, lz;
    if (pick < 2.0 * area_wh) {  // +-x faces
        lx = (pick < area_wh) ? 0.5 * l : -0.5 * l;
        ly = rng.uniform(-0.5 * w, 0.5 * w);
        lz = rng.uniform(-0.5 * h, 0.5 * h);
    } else if (pick < 2.0 * (area_wh + area_lh)) {  // +-y faces
        pick -= 2.0 * area_wh;
        lx = rng.uniform(-0.5 * l, 0.5 * l);
        ly = (pick < area_lh) ? 0.5 * w : -0.5 * w;
        lz = rng.uniform(-0.5 * h, 0.5 * h);
    } else {  // +-z faces
        pick -= 2.0 * (area_wh + area_lh);
        lx = rng.uniform(-0.5 * l, 0.5 * l);
        ly = rng.uniform(-0.5 * w, 0.5 * w);
        lz = (pick < area_lw) ? 0.5 * h : -0.5 * h;
    }
    const double c = std::cos(b.yaw), s = std::sin(b.yaw);
    return {b.center.x + c * lx - s * ly, b.center.y + s * lx + c * ly,
            b.center.z + lz};
}

double class_intensity(int class_id) {
    return 0.15 + 0.2 * class_id;  // distinct code per class, stays in [0,1]
}

}  // namespace

const ClassPrior& class_prior(int class_id) {
    if (class_id < 0 || class_id >= kNumClasses) {
        throw DomainError("class_prior: unknown class " +
                          std::to_string(class_id));
    }
    return kPriors[class_id];
}

Scene generate_scene(std::uint64_t seed, int n_objects,
                     const BevGridSpec& grid) {
    if (n_objects < 1) {
        throw DomainError("generate_scene: n_objects must be >= 1");
    }
    Rng rng(seed ^ 0x9e3779b97f4a7c15ull);
    Scene scene;
    scene.seed = seed;
    const int retries_per_object = 200;
    for (int i = 0; i < n_objects; ++i) {
        bool placed = false;
        for (int attempt = 0; attempt < retries_per_object; ++attempt) {
            const int cls = static_cast<int>(rng.uniform_index(kNumClasses));
            const ClassPrior& prior = kPriors[cls];
            const double jitter = rng.uniform(0.92, 1.08);
            const double l = prior.length * jitter;
            const double w = prior.width * jitter;
            const double h = prior.height * jitter;
            const double yaw = rng.uniform(-M_PI, M_PI);
            const double margin = 0.5 * std::hypot(l, w);
            if (grid.x_max - grid.x_min <= 2.0 * margin ||
                grid.y_max - grid.y_min <= 2.0 * margin) {
                continue;  // object cannot fit at all
            }
            const double cx =
                rng.uniform(grid.x_min + margin, grid.x_max - margin);
            const double cy =
                rng.uniform(grid.y_min + margin, grid.y_max - margin);
            OrientedBox3D box({cx, cy, 0.5 * h}, l, w, h, yaw, cls);
            bool clear = true;
            for (const auto& other : scene.objects) {
                const double min_sep =
                    footprint_radius(box) + footprint_radius(other);
                if (std::hypot(box.center.x - other.center.x,
                               box.center.y - other.center.y) <= min_sep) {
                    clear = false;
                    break;
                }
            }
            if (clear) {
                scene.objects.push_back(box);
                placed = true;
                break;
            }
        }
        if (!placed) {
            throw GenerationError(
                "generate_scene: could not place object " + std::to_string(i) +
                " within the retry budget");
        }
    }
    return scene;
}

PointCloud simulate_lidar(const Scene& scene, const Pose& sensor_pose,
                          int rays_per_object, double noise_sigma,
                          std::uint64_t seed) {
    if (rays_per_object < 1) {
        throw DomainError("simulate_lidar: rays_per_object must be >= 1");
    }
    Rng rng(seed ^ 0x517cc1b727220a95ull);
    const Vec3 origin = sensor_pose.translation;
    PointCloud pc;
    for (std::size_t oi = 0; oi < scene.objects.size(); ++oi) {
        const OrientedBox3D& target = scene.objects[oi];
        for (int ray = 0; ray < rays_per_object; ++ray) {
            const Vec3 aim = sample_surface_point(target, rng);
            const Vec3 delta = aim - origin;
            const double dist = delta.norm();
            if (dist < 1e-9) continue;
            const Vec3 dir = delta * (1.0 / dist);
            // Nearest surface along the ray wins; a closer hit on another
            // box occludes this return.
            double best_t = std::numeric_limits<double>::infinity();
            std::size_t best_obj = scene.objects.size();
            for (std::size_t oj = 0; oj < scene.objects.size(); ++oj) {
                const auto t = ray_box_intersect(origin, dir, scene.objects[oj]);
                if (t && *t < best_t) {
                    best_t = *t;
                    best_obj = oj;
                }
            }
            if (best_obj != oi) continue;
            const double range = best_t + (noise_sigma > 0.0
                                               ? rng.normal(0.0, noise_sigma)
                                               : 0.0);
            if (range <= 0.0) continue;
            const Vec3 world = origin + dir * range;
            const Vec3 local = sensor_pose.apply_inverse(world);
            pc.points.push_back(
                {local.x, local.y, local.z, class_intensity(target.class_id)});
        }
    }
    return pc;
}

PointCloud transform_cloud(const PointCloud& pc, const Pose& sensor_pose) {
    PointCloud out;
    out.points.reserve(pc.points.size());
    for (const auto& p : pc.points) {
        const Vec3 world = sensor_pose.apply({p.x, p.y, p.z});
        out.points.push_back({world.x, world.y, world.z, p.intensity});
    }
    return out;
}

SyntheticImage simulate_camera(const Scene& scene, const CameraIntrinsics& K,
                               const Pose& cam_pose, std::uint64_t seed,
                               double feature_noise_sigma) {
    Rng rng(seed ^ 0x2545f4914f6cdd1dull);
    SyntheticImage img;
    img.width = K.width;
    img.height = K.height;
    const int channels = kNumClasses + 1;
    img.features = Tensor4(1, channels, K.height, K.width);
    img.depth.assign(static_cast<std::size_t>(K.height) * K.width,
                     std::numeric_limits<double>::infinity());
    const Vec3 origin = cam_pose.translation;
    for (int v = 0; v < K.height; ++v) {
        for (int u = 0; u < K.width; ++u) {
            // Ray through the pixel center.
            const Vec3 cam_dir{(u + 0.5 - K.cx) / K.fx, (v + 0.5 - K.cy) / K.fy,
                               1.0};
            const Vec3 world_target = cam_pose.apply(cam_dir);
            const Vec3 dir = (world_target - origin).normalized();
            double best_t = std::numeric_limits<double>::infinity();
            int best_cls = -1;
            for (const auto& box : scene.objects) {
                const auto t = ray_box_intersect(origin, dir, box);
                if (t && *t < best_t) {
                    best_t = *t;
                    best_cls = box.class_id;
                }
            }
            const int code_channel = (best_cls >= 0) ? best_cls : kNumClasses;
            img.features.at(0, code_channel, v, u) = 1.0f;
            if (best_cls >= 0) {
                const Vec3 hit = origin + dir * best_t;
                img.depth[static_cast<std::size_t>(v) * K.width + u] =
                    cam_pose.apply_inverse(hit).z;
            }
            if (feature_noise_sigma > 0.0) {
                for (int c = 0; c < channels; ++c) {
                    img.features.at(0, c, v, u) += static_cast<float>(
                        rng.normal(0.0, feature_noise_sigma));
                }
            }
        }
    }
    return img;
}

}  // namespace hecofuse
