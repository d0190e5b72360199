#pragma once

#include <array>
#include <cstdint>
#include <string>

#include "hecofuse/coop_fusion.hpp"
#include "hecofuse/encoders.hpp"
#include "hecofuse/geometry.hpp"

namespace hecofuse {

// One node's physical sensor mounting.
struct NodeRig {
    Pose lidar_pose;
    Pose camera_pose;
    CameraIntrinsics intrinsics{40.0, 40.0, 32.0, 24.0, 64, 48};
};

// Vehicle + infrastructure pairing drawn from the nine-entry registry.
struct ScenarioConfig {
    SensorSet vehicle;
    SensorSet infra;

    bool operator==(const ScenarioConfig&) const = default;

    std::string token() const;  // e.g. "lc+c"
    static ScenarioConfig from_token(const std::string& token);
};

const std::array<ScenarioConfig, 9>& scenario_registry();

class Rng;

// Uniform draw from the registry; every training step resamples.
ScenarioConfig sample_config(Rng& rng);

// All desk-scale defaults in one place; everything here round-trips through
// the JSON config file.
struct HarnessConfig {
    // BEV grid
    double x_min = 0.0, x_max = 32.0;
    double y_min = 0.0, y_max = 32.0;
    double cell_size = 0.5;

    // feature widths
    int c_bev = 16;
    int c_out = 16;

    // camera lift
    int depth_bin_count = 8;
    double depth_min = 2.0;  // bin centers span to the grid diagonal

    // ASR scale divisors (high, medium, low)
    int s_high = 4, s_medium = 2, s_low = 1;

    // sensor rigs
    NodeRig vehicle_rig;
    NodeRig infra_rig;

    // simulation
    int min_objects = 2, max_objects = 5;
    int rays_per_object = 60;
    double lidar_noise_sigma = 0.02;
    double camera_feature_noise = 0.02;

    // training
    int epochs = 20;
    double learning_rate = 0.01;
    double momentum = 0.9;
    double lambda_box = 2.0;
    double focal_gamma = 2.0;

    // detection decode / evaluation
    double iou_threshold = 0.5;
    double min_score = 0.05;

    std::uint64_t seed = 42;

    HarnessConfig();  // fills the default rigs

    BevGridSpec grid() const;
    DepthBins depth_bins() const;
    AsrPolicy policy() const { return AsrPolicy(s_high, s_medium, s_low); }

    std::string to_json_string() const;
    static HarnessConfig from_json_string(const std::string& text);
    static HarnessConfig load(const std::string& path);
    void save(const std::string& path) const;
};

}  // namespace hecofuse
