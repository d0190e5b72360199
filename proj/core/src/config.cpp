#include "hecofuse/config.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

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
    if (r.size() != 9) throw ConfigError("pose rotation must have 9 entries");
    for (int i = 0; i < 9; ++i) p.rotation[i] = r[i].get<double>();
    const auto& t = j.at("translation");
    if (t.size() != 3) throw ConfigError("pose translation must have 3 entries");
    p.translation = {t[0].get<double>(), t[1].get<double>(), t[2].get<double>()};
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

std::string ScenarioConfig::token() const {
    return vehicle.token() + "+" + infra.token();
}

ScenarioConfig ScenarioConfig::from_token(const std::string& token) {
    const auto plus = token.find('+');
    if (plus == std::string::npos) {
        throw ConfigError("scenario token '" + token +
                          "' missing '+' separator");
    }
    ScenarioConfig cfg{SensorSet::from_token(token.substr(0, plus)),
                       SensorSet::from_token(token.substr(plus + 1))};
    for (const auto& known : scenario_registry()) {
        if (known == cfg) return cfg;
    }
    throw ConfigError("scenario token '" + token +
                      "' is not one of the nine registered configurations");
}

const std::array<ScenarioConfig, 9>& scenario_registry() {
    static const std::array<ScenarioConfig, 9> registry = {{
        {{true, true}, {true, true}},    // lc+lc
        {{true, false}, {true, false}},  // l+l
        {{false, true}, {false, true}},  // c+c
        {{true, false}, {false, true}},  // l+c
        {{false, true}, {true, false}},  // c+l
        {{true, true}, {false, true}},   // lc+c
        {{true, true}, {true, false}},   // lc+l
        {{false, true}, {true, true}},   // c+lc
        {{true, false}, {true, true}},   // l+lc
    }};
    return registry;
}

HarnessConfig::HarnessConfig() {
    // Vehicle node parked at the near edge, sensors facing into the grid.
    vehicle_rig.lidar_pose = Pose::from_yaw(0.0, Vec3{16.0, 1.0, 1.8});
    vehicle_rig.camera_pose =
        Pose::look_at(Vec3{16.0, 1.0, 1.6}, Vec3{16.0, 16.0, 1.0});
    // Infrastructure node on a pole in the far corner looking down at the
    // grid center.
    infra_rig.lidar_pose = Pose::from_yaw(0.0, Vec3{30.0, 30.0, 6.0});
    infra_rig.camera_pose =
        Pose::look_at(Vec3{30.0, 30.0, 6.0}, Vec3{16.0, 16.0, 0.0});
}

BevGridSpec HarnessConfig::grid() const {
    return BevGridSpec(x_min, x_max, y_min, y_max, cell_size);
}

DepthBins HarnessConfig::depth_bins() const {
    const double diag = std::hypot(x_max - x_min, y_max - y_min);
    return DepthBins::uniform(depth_min, diag, depth_bin_count);
}

std::string HarnessConfig::to_json_string() const {
    json j;
    j["grid"] = {{"x_min", x_min}, {"x_max", x_max},
                 {"y_min", y_min}, {"y_max", y_max},
                 {"cell_size", cell_size}};
    j["channels"] = {{"c_bev", c_bev}, {"c_out", c_out}};
    j["camera_lift"] = {{"depth_bin_count", depth_bin_count},
                        {"depth_min", depth_min}};
    j["scale_policy"] = {{"s_high", s_high},
                         {"s_medium", s_medium},
                         {"s_low", s_low}};
    j["vehicle_rig"] = rig_to_json(vehicle_rig);
    j["infra_rig"] = rig_to_json(infra_rig);
    j["simulation"] = {{"min_objects", min_objects},
                       {"max_objects", max_objects},
                       {"rays_per_object", rays_per_object},
                       {"lidar_noise_sigma", lidar_noise_sigma},
                       {"camera_feature_noise", camera_feature_noise}};
    j["training"] = {{"epochs", epochs},
                     {"learning_rate", learning_rate},
                     {"momentum", momentum},
                     {"lambda_box", lambda_box},
                     {"focal_gamma", focal_gamma}};
    j["evaluation"] = {{"iou_threshold", iou_threshold},
                       {"min_score", min_score}};
    j["seed"] = seed;
    return j.dump(2) + "\n";
}

HarnessConfig HarnessConfig::from_json_string(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ConfigError(std::string("config parse failure: ") + e.what());
    }
    HarnessConfig cfg;
    try {
        if (j.contains("grid")) {
            const auto& g = j["grid"];
            cfg.x_min = g.value("x_min", cfg.x_min);
            cfg.x_max = g.value("x_max", cfg.x_max);
            cfg.y_min = g.value("y_min", cfg.y_min);
            cfg.y_max = g.value("y_max", cfg.y_max);
            cfg.cell_size = g.value("cell_size", cfg.cell_size);
        }
        if (j.contains("channels")) {
            cfg.c_bev = j["channels"].value("c_bev", cfg.c_bev);
            cfg.c_out = j["channels"].value("c_out", cfg.c_out);
        }
        if (j.contains("camera_lift")) {
            const auto& c = j["camera_lift"];
            cfg.depth_bin_count = c.value("depth_bin_count", cfg.depth_bin_count);
            cfg.depth_min = c.value("depth_min", cfg.depth_min);
        }
        if (j.contains("scale_policy")) {
            const auto& s = j["scale_policy"];
            cfg.s_high = s.value("s_high", cfg.s_high);
            cfg.s_medium = s.value("s_medium", cfg.s_medium);
            cfg.s_low = s.value("s_low", cfg.s_low);
        }
        if (j.contains("vehicle_rig")) {
            cfg.vehicle_rig = rig_from_json(j["vehicle_rig"]);
        }
        if (j.contains("infra_rig")) {
            cfg.infra_rig = rig_from_json(j["infra_rig"]);
        }
        if (j.contains("simulation")) {
            const auto& s = j["simulation"];
            cfg.min_objects = s.value("min_objects", cfg.min_objects);
            cfg.max_objects = s.value("max_objects", cfg.max_objects);
            cfg.rays_per_object = s.value("rays_per_object", cfg.rays_per_object);
            cfg.lidar_noise_sigma =
                s.value("lidar_noise_sigma", cfg.lidar_noise_sigma);
            cfg.camera_feature_noise =
                s.value("camera_feature_noise", cfg.camera_feature_noise);
        }
        if (j.contains("training")) {
            const auto& t = j["training"];
            cfg.epochs = t.value("epochs", cfg.epochs);
            cfg.learning_rate = t.value("learning_rate", cfg.learning_rate);
            cfg.momentum = t.value("momentum", cfg.momentum);
            cfg.lambda_box = t.value("lambda_box", cfg.lambda_box);
            cfg.focal_gamma = t.value("focal_gamma", cfg.focal_gamma);
        }
        if (j.contains("evaluation")) {
            const auto& e = j["evaluation"];
            cfg.iou_threshold = e.value("iou_threshold", cfg.iou_threshold);
            cfg.min_score = e.value("min_score", cfg.min_score);
        }
        cfg.seed = j.value("seed", cfg.seed);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config field failure: ") + e.what());
    }
    if (cfg.min_objects < 0 || cfg.max_objects < cfg.min_objects) {
        throw ConfigError("config: object count range is empty");
    }
    if (cfg.epochs < 0 || cfg.c_bev <= 0 || cfg.c_out <= 0 ||
        cfg.depth_bin_count <= 0) {
        throw ConfigError("config: counts must be positive");
    }
    cfg.grid();    // validates grid divisibility
    cfg.policy();  // validates scale ordering
    return cfg;
}

HarnessConfig HarnessConfig::load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open config file: " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return from_json_string(buf.str());
}

void HarnessConfig::save(const std::string& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write config file: " + path);
    out << to_json_string();
}

}  // namespace hecofuse
