#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "hecofuse/model.hpp"
#include "hecofuse/scenario.hpp"

namespace hecofuse {

// Simulated raw sensor captures for both nodes; computed once per scene and
// reused for every configuration (the configuration only selects which of
// these feed the network).
struct SensorData {
    PillarGrid vehicle_pillars, infra_pillars;
    SyntheticImage vehicle_image, infra_image;
};

SensorData simulate_sensors(const ScenarioSpec& spec);

struct TrainSample {
    ScenarioSpec spec;
    SensorData data;
};

TrainSample prepare_sample(const ScenarioSpec& spec);

// Dense supervision targets on the output grid (the fused grid at divisor
// s_out). Background cells carry class_id == kNumClasses.
struct TargetGrid {
    int rows = 0, cols = 0, s_out = 1;
    std::vector<int> class_id;
    // Valid on positive cells: dx, dy (meters from cell center), log length,
    // log width, sin yaw, cos yaw.
    std::vector<std::array<float, 6>> box;
};

TargetGrid build_targets(const Scene& scene, const BevGridSpec& grid,
                         int s_out);

// Every intermediate needed by the analytic backward pass.
struct ForwardCache {
    SensorSet sensors_vehicle, sensors_infra;
    std::optional<LidarEncodeCache> lidar_vehicle, lidar_infra;
    std::optional<CameraEncodeCache> camera_vehicle, camera_infra;
    NodeFusionCache node_vehicle, node_infra;
    HafFuseCache haf;
    Tensor4 fused;  // asr_fuse output, the head input
    Tensor4 class_logits, class_probs, box_reg;
    int s_out = 1;
    bool valid = false;
};

// Full pipeline forward for one scene under one configuration. When
// `wire_hop` is set the infrastructure feature map makes an encode/decode
// round trip through the feature-message format before fusion.
FusedResult pipeline_forward(const SensorData& data, const ScenarioSpec& spec,
                             const ScenarioConfig& cfg, const Model& model,
                             bool wire_hop, ForwardCache* cache);

struct LossResult {
    double total = 0.0, cls = 0.0, box = 0.0;
    int positives = 0;
};

// Focal-modulated softmax cross-entropy over every cell plus smooth-L1 box
// regression on positive cells. Gradients w.r.t. the head outputs are
// written when the pointers are non-null.
LossResult detection_loss(const Tensor4& class_logits, const Tensor4& box_reg,
                          const TargetGrid& targets, double focal_gamma,
                          double lambda_box, Tensor4* g_class_logits,
                          Tensor4* g_box_reg);

using GradMap = std::map<std::string, std::vector<float>>;

// Backpropagates head-output gradients through the whole pipeline; keys
// match the Model::params() names. Parameters shared between nodes receive
// the sum of both nodes' contributions.
GradMap pipeline_backward(const Model& model, const ForwardCache& cache,
                          const Tensor4& g_class_logits,
                          const Tensor4& g_box_reg);

// Greedy per-cell box decoding: argmax class, softmax-max score, 3x3
// local-max suppression, z and height filled from the class priors.
std::vector<OrientedBox3D> decode_detections(const Tensor4& class_probs,
                                             const Tensor4& box_reg,
                                             const BevGridSpec& grid,
                                             int s_out, double min_score);

struct ScenarioOutcome {
    std::vector<OrientedBox3D> detections;
    FusedResult fused;
};

ScenarioOutcome run_scenario(const ScenarioSpec& spec, const SensorData& data,
                             const ScenarioConfig& cfg, const Model& model,
                             double min_score);

struct StepRecord {
    std::int64_t step = 0;
    int epoch = 0;
    std::string config_token;
    double loss = 0.0;
};

// SGD with momentum and cosine-decayed rate over `total_steps_for_decay`
// steps. One step per (epoch, sample); the configuration is resampled from
// the state's persistent stream each step. Throws TrainingError on NaN loss.
void train(TrainState& state, const std::vector<TrainSample>& samples,
           const HarnessConfig& cfg, int epochs,
           std::int64_t total_steps_for_decay,
           std::vector<StepRecord>* log = nullptr);

// Mean loss over the samples with a deterministic per-scene configuration
// (registry entry i mod 9); no parameter updates.
double validation_loss(const Model& model,
                       const std::vector<TrainSample>& samples,
                       const HarnessConfig& cfg);

struct ConfigEval {
    std::string config_token;
    std::optional<double> precision, recall, mean_iou, pos_rmse, rot_rmse;
    double map = 0.0;
    int scenes = 0;
};

// Pools matches and AP labels across scenes given per-scene detections in
// sample order; shared by the sequential and parallel evaluation paths.
ConfigEval pool_config_eval(
    const ScenarioConfig& cfg,
    const std::vector<std::vector<OrientedBox3D>>& detections,
    const std::vector<TrainSample>& samples, const HarnessConfig& harness);

// Pools matches and AP labels across all samples for one configuration.
ConfigEval evaluate_config(const Model& model,
                           const std::vector<TrainSample>& samples,
                           const ScenarioConfig& cfg,
                           const HarnessConfig& harness);

struct FlopsReport {
    double macs_with = 0.0;
    double macs_without = 0.0;
    double reduction = 0.0;  // 1 - with/without
};

// Analytic multiply-accumulate count of the fusion stage (intra-node fusion,
// scale pooling, spatial attention, elementwise aggregation, restoration
// upsampling) as a pure function of shapes.
FlopsReport estimate_fusion_flops(const ScenarioConfig& cfg,
                                  const AsrPolicy& policy, int rows, int cols,
                                  int c_bev, int c_out);

}  // namespace hecofuse
