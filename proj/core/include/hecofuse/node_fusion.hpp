#pragma once

#include <optional>
#include <string>

#include "hecofuse/tensor.hpp"

namespace hecofuse {

// Sensor subset carried by one node; both flags false is the sensorless
// fallback case.
struct SensorSet {
    bool has_lidar = false;
    bool has_camera = false;

    int count() const { return (has_lidar ? 1 : 0) + (has_camera ? 1 : 0); }

    bool operator==(const SensorSet&) const = default;

    // "l", "c", "lc", or "-" for the empty set.
    std::string token() const;
    static SensorSet from_token(const std::string& token);
};

// Parameters for both intra-node paths: dual-sensor fusion and the
// single-sensor adapters, plus the sensorless fallback constant.
struct NodeFusionParams {
    ConvParams fusion_conv;     // c_out x (2 * c_bev) x 1 x 1
    NormParams fusion_norm;
    ConvParams lidar_adapter;   // c_out x c_bev x 1 x 1
    NormParams lidar_norm;
    ConvParams camera_adapter;  // c_out x c_bev x 1 x 1
    NormParams camera_norm;
    float fallback_value = 0.0f;

    NodeFusionParams(int c_bev, int c_out);

    int c_bev() const { return lidar_adapter.c_in; }
    int c_out() const { return lidar_adapter.c_out; }
};

enum class NodePath { DualFusion, LidarAdapter, CameraAdapter, Fallback };

struct NodeFusionCache {
    NodePath path = NodePath::Fallback;
    Tensor4 concat_input;  // dual path
    Tensor4 single_input;  // adapter paths
    Tensor4 conv_out;      // pre-norm
    Tensor4 norm_out;      // pre-activation
    int c_bev = 0;
};

// Concat -> 1x1 conv -> norm -> relu (dual-sensor intra-node fusion).
Tensor4 bev_fusion(const Tensor4& f_cam, const Tensor4& f_lidar,
                   const NodeFusionParams& p, NodeFusionCache* cache = nullptr);

// Single-sensor adapter (1x1 conv -> norm -> relu) or the constant fallback
// tensor when the sensor set is empty.
Tensor4 pseudo_fusion(const std::optional<Tensor4>& f, const SensorSet& s,
                      const NodeFusionParams& p, int b, int h, int w,
                      NodeFusionCache* cache = nullptr);

// Pathway dispatch on |S_n|: dual -> bev_fusion, single -> pseudo_fusion,
// empty -> fallback. Output shape is (b, c_out, h, w) for every sensor set.
Tensor4 node_features(const std::optional<Tensor4>& f_cam,
                      const std::optional<Tensor4>& f_lidar, const SensorSet& s,
                      const NodeFusionParams& p, int b, int h, int w,
                      NodeFusionCache* cache = nullptr);

struct NodeFusionGrads {
    // Gradients w.r.t. the encoder outputs that fed this node; absent when
    // the corresponding sensor did not feed the path.
    std::optional<Tensor4> g_f_cam;
    std::optional<Tensor4> g_f_lidar;
    // Parameter gradients for the path taken; other paths stay zero.
    std::vector<float> g_fusion_kernel, g_fusion_bias, g_fusion_gamma,
        g_fusion_beta;
    std::vector<float> g_lidar_kernel, g_lidar_bias, g_lidar_gamma,
        g_lidar_beta;
    std::vector<float> g_camera_kernel, g_camera_bias, g_camera_gamma,
        g_camera_beta;
};

NodeFusionGrads node_features_backward(const NodeFusionParams& p,
                                       const NodeFusionCache& cache,
                                       const Tensor4& g_out);

}  // namespace hecofuse
