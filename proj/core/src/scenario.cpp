#include "hecofuse/scenario.hpp"

#include <fstream>
#include <sstream>

#include <json.hpp>

#include "hecofuse/rng.hpp"

namespace hecofuse {

namespace {

using nlohmann::json;

json pose_to_json(const Pose& p) {
    json j;
    j["rotation"] = p.rotation;
    j["translation"] = {p.translation.x, p.translation.y, p.translation.z};
    return j;
}

Pose pose_from_json(const json& j) {
    Pose p;
    const auto& r = j.at("rotation");
    for (int i = 0; i < 9; ++i) p.rotation[i] = r.at(i).get<double>();
    const auto& t = j.at("translation");
    p.translation = {t.at(0).get<double>(), t.at(1).get<double>(),
                     t.at(2).get<double>()};
    p.validate();
    return p;
}

json rig_to_json(const NodeRig& rig) {
    json j;
    j["lidar_pose"] = pose_to_json(rig.lidar_pose);
    j["camera_pose"] = pose_to_json(rig.camera_pose);
    j["intrinsics"] = {{"fx", rig.intrinsics.fx},
                       {"fy", rig.intrinsics.fy},
                       {"cx", rig.intrinsics.cx},
                       {"cy", rig.intrinsics.cy},
                       {"width", rig.intrinsics.width},
                       {"height", rig.intrinsics.height}};
    return j;
}

NodeRig rig_from_json(const json& j) {
    NodeRig rig;
    rig.lidar_pose = pose_from_json(j.at("lidar_pose"));
    rig.camera_pose = pose_from_json(j.at("camera_pose"));
    const auto& k = j.at("intrinsics");
    rig.intrinsics = CameraIntrinsics(
        k.at("fx").get<double>(), k.at("fy").get<double>(),
        k.at("cx").get<double>(), k.at("cy").get<double>(),
        k.at("width").get<int>(), k.at("height").get<int>());
    return rig;
}

}  // namespace

ScenarioConfig sample_config(Rng& rng) {
    const auto& registry = scenario_registry();
    return registry[rng.uniform_index(registry.size())];
}

ScenarioSpec make_scenario(const HarnessConfig& cfg, std::uint64_t scene_seed) {
    ScenarioSpec spec;
    spec.seed = scene_seed;
    spec.grid = cfg.grid();
    spec.vehicle_rig = cfg.vehicle_rig;
    spec.infra_rig = cfg.infra_rig;
    spec.rays_per_object = cfg.rays_per_object;
    spec.lidar_noise_sigma = cfg.lidar_noise_sigma;
    spec.camera_feature_noise = cfg.camera_feature_noise;
    spec.depth_min = cfg.depth_min;
    // The count draw is salted so it does not alias the placement stream
    // inside generate_scene.
    Rng count_rng(scene_seed ^ 0xc2b2ae3d27d4eb4fULL);
    const int span = cfg.max_objects - cfg.min_objects + 1;
    const int n = cfg.min_objects +
                  static_cast<int>(count_rng.uniform_index(
                      static_cast<std::uint64_t>(span)));
    spec.scene = generate_scene(scene_seed, n, spec.grid);
    return spec;
}

std::string scenario_to_json_string(const ScenarioSpec& spec) {
    json j;
    j["format"] = "hecofuse-scenario";
    j["version"] = 1;
    j["seed"] = spec.seed;
    j["grid"] = {{"x_min", spec.grid.x_min}, {"x_max", spec.grid.x_max},
                 {"y_min", spec.grid.y_min}, {"y_max", spec.grid.y_max},
                 {"cell_size", spec.grid.cell_size}};
    json objects = json::array();
    for (const auto& b : spec.scene.objects) {
        objects.push_back({{"center", {b.center.x, b.center.y, b.center.z}},
                           {"length", b.length},
                           {"width", b.width},
                           {"height", b.height},
                           {"yaw", b.yaw},
                           {"class_id", b.class_id}});
    }
    j["objects"] = objects;
    j["vehicle_rig"] = rig_to_json(spec.vehicle_rig);
    j["infra_rig"] = rig_to_json(spec.infra_rig);
    j["simulation"] = {{"rays_per_object", spec.rays_per_object},
                       {"lidar_noise_sigma", spec.lidar_noise_sigma},
                       {"camera_feature_noise", spec.camera_feature_noise},
                       {"depth_min", spec.depth_min}};
    return j.dump(2) + "\n";
}

ScenarioSpec scenario_from_json_string(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ConfigError(std::string("scenario parse failure: ") + e.what());
    }
    try {
        if (j.value("format", "") != "hecofuse-scenario") {
            throw ConfigError("scenario file: unrecognized format tag");
        }
        if (j.value("version", 0) != 1) {
            throw ConfigError("scenario file: unsupported version");
        }
        ScenarioSpec spec;
        spec.seed = j.at("seed").get<std::uint64_t>();
        const auto& g = j.at("grid");
        spec.grid = BevGridSpec(
            g.at("x_min").get<double>(), g.at("x_max").get<double>(),
            g.at("y_min").get<double>(), g.at("y_max").get<double>(),
            g.at("cell_size").get<double>());
        spec.scene.seed = spec.seed;
        for (const auto& o : j.at("objects")) {
            const auto& c = o.at("center");
            spec.scene.objects.emplace_back(
                Vec3{c.at(0).get<double>(), c.at(1).get<double>(),
                     c.at(2).get<double>()},
                o.at("length").get<double>(), o.at("width").get<double>(),
                o.at("height").get<double>(), o.at("yaw").get<double>(),
                o.at("class_id").get<int>());
        }
        spec.vehicle_rig = rig_from_json(j.at("vehicle_rig"));
        spec.infra_rig = rig_from_json(j.at("infra_rig"));
        const auto& s = j.at("simulation");
        spec.rays_per_object = s.at("rays_per_object").get<int>();
        spec.lidar_noise_sigma = s.at("lidar_noise_sigma").get<double>();
        spec.camera_feature_noise = s.at("camera_feature_noise").get<double>();
        spec.depth_min = s.value("depth_min", 2.0);
        return spec;
    } catch (const json::exception& e) {
        throw ConfigError(std::string("scenario field failure: ") + e.what());
    }
}

void save_scenario(const ScenarioSpec& spec, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write scenario file: " + path);
    out << scenario_to_json_string(spec);
}

ScenarioSpec load_scenario(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open scenario file: " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return scenario_from_json_string(buf.str());
}

}  // namespace hecofuse
