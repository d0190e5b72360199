#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "hecofuse/config.hpp"
#include "hecofuse/scenegen.hpp"

namespace hecofuse {

// Everything needed to replay one synthetic scene: the ground-truth objects
// plus the sensor rigs and simulation knobs that were in force when it was
// generated. Serializes to a self-describing JSON file.
struct ScenarioSpec {
    std::uint64_t seed = 0;
    Scene scene;
    BevGridSpec grid{0.0, 32.0, 0.0, 32.0, 0.5};
    NodeRig vehicle_rig;
    NodeRig infra_rig;
    int rays_per_object = 60;
    double lidar_noise_sigma = 0.02;
    double camera_feature_noise = 0.02;
    double depth_min = 2.0;  // nearest camera depth-bin center
};

// Generates the scene for `scene_seed` under the harness defaults; the
// object count is drawn from the configured range using the same seed.
ScenarioSpec make_scenario(const HarnessConfig& cfg, std::uint64_t scene_seed);

std::string scenario_to_json_string(const ScenarioSpec& spec);
ScenarioSpec scenario_from_json_string(const std::string& text);

void save_scenario(const ScenarioSpec& spec, const std::string& path);
ScenarioSpec load_scenario(const std::string& path);

}  // namespace hecofuse
