#include "hecofuse/node_fusion.hpp"

namespace hecofuse {

std::string SensorSet::token() const {
    if (has_lidar && has_camera) return "lc";
    if (has_lidar) return "l";
    if (has_camera) return "c";
    return "-";
}

SensorSet SensorSet::from_token(const std::string& token) {
    if (token == "lc" || token == "cl") return {true, true};
    if (token == "l") return {true, false};
    if (token == "c") return {false, true};
    if (token == "-") return {false, false};
    throw ConfigError("SensorSet: unknown token '" + token + "'");
}

NodeFusionParams::NodeFusionParams(int c_bev, int c_out)
    : fusion_conv(c_out, 2 * c_bev, 1, 1),
      fusion_norm(c_out),
      lidar_adapter(c_out, c_bev, 1, 1),
      lidar_norm(c_out),
      camera_adapter(c_out, c_bev, 1, 1),
      camera_norm(c_out) {}

namespace {

Tensor4 conv_norm_act(const Tensor4& x, const ConvParams& conv,
                      const NormParams& norm, NodeFusionCache* cache) {
    Tensor4 conv_out = conv2d(x, conv);
    Tensor4 norm_out = affine_norm(conv_out, norm);
    Tensor4 out = relu(norm_out);
    if (cache) {
        cache->conv_out = std::move(conv_out);
        cache->norm_out = std::move(norm_out);
    }
    return out;
}

}  // namespace

Tensor4 bev_fusion(const Tensor4& f_cam, const Tensor4& f_lidar,
                   const NodeFusionParams& p, NodeFusionCache* cache) {
    if (!f_cam.same_shape(f_lidar)) {
        throw ShapeError("bev_fusion: camera and lidar feature shapes differ");
    }
    Tensor4 cat = concat_channels(f_cam, f_lidar);
    if (cache) {
        cache->path = NodePath::DualFusion;
        cache->concat_input = cat;
        cache->c_bev = f_cam.c;
    }
    return conv_norm_act(cat, p.fusion_conv, p.fusion_norm, cache);
}

Tensor4 pseudo_fusion(const std::optional<Tensor4>& f, const SensorSet& s,
                      const NodeFusionParams& p, int b, int h, int w,
                      NodeFusionCache* cache) {
    if (s.count() == 0) {
        if (cache) cache->path = NodePath::Fallback;
        return Tensor4(b, p.c_out(), h, w, p.fallback_value);
    }
    if (s.count() != 1) {
        throw ContractError("pseudo_fusion: expects a single-sensor set");
    }
    if (!f) {
        throw ContractError("pseudo_fusion: sensor flagged but feature absent");
    }
    if (cache) {
        cache->path = s.has_lidar ? NodePath::LidarAdapter
                                  : NodePath::CameraAdapter;
        cache->single_input = *f;
    }
    const ConvParams& conv = s.has_lidar ? p.lidar_adapter : p.camera_adapter;
    const NormParams& norm = s.has_lidar ? p.lidar_norm : p.camera_norm;
    return conv_norm_act(*f, conv, norm, cache);
}

Tensor4 node_features(const std::optional<Tensor4>& f_cam,
                      const std::optional<Tensor4>& f_lidar, const SensorSet& s,
                      const NodeFusionParams& p, int b, int h, int w,
                      NodeFusionCache* cache) {
    if (s.has_camera != f_cam.has_value() || s.has_lidar != f_lidar.has_value()) {
        throw ContractError(
            "node_features: encoder outputs must match the sensor set exactly");
    }
    if (s.count() == 2) return bev_fusion(*f_cam, *f_lidar, p, cache);
    if (s.count() == 1) {
        return pseudo_fusion(s.has_lidar ? f_lidar : f_cam, s, p, b, h, w,
                             cache);
    }
    return pseudo_fusion(std::nullopt, s, p, b, h, w, cache);
}

NodeFusionGrads node_features_backward(const NodeFusionParams& p,
                                       const NodeFusionCache& cache,
                                       const Tensor4& g_out) {
    NodeFusionGrads g;
    if (cache.path == NodePath::Fallback) {
        return g;  // constant path, nothing upstream or trainable
    }
    const ConvParams& conv = cache.path == NodePath::DualFusion
                                 ? p.fusion_conv
                                 : (cache.path == NodePath::LidarAdapter
                                        ? p.lidar_adapter
                                        : p.camera_adapter);
    const NormParams& norm = cache.path == NodePath::DualFusion
                                 ? p.fusion_norm
                                 : (cache.path == NodePath::LidarAdapter
                                        ? p.lidar_norm
                                        : p.camera_norm);
    const Tensor4& conv_input = cache.path == NodePath::DualFusion
                                    ? cache.concat_input
                                    : cache.single_input;
    Tensor4 g_norm = relu_backward(cache.norm_out, g_out);
    NormGrads ng = affine_norm_backward(cache.conv_out, norm, g_norm);
    ConvGrads cg = conv2d_backward(conv_input, conv, ng.gx);

    switch (cache.path) {
        case NodePath::DualFusion:
            g.g_fusion_kernel = std::move(cg.g_kernel);
            g.g_fusion_bias = std::move(cg.g_bias);
            g.g_fusion_gamma = std::move(ng.g_gamma);
            g.g_fusion_beta = std::move(ng.g_beta);
            g.g_f_cam = slice_channels(cg.gx, 0, cache.c_bev);
            g.g_f_lidar = slice_channels(cg.gx, cache.c_bev, cg.gx.c);
            break;
        case NodePath::LidarAdapter:
            g.g_lidar_kernel = std::move(cg.g_kernel);
            g.g_lidar_bias = std::move(cg.g_bias);
            g.g_lidar_gamma = std::move(ng.g_gamma);
            g.g_lidar_beta = std::move(ng.g_beta);
            g.g_f_lidar = std::move(cg.gx);
            break;
        case NodePath::CameraAdapter:
            g.g_camera_kernel = std::move(cg.g_kernel);
            g.g_camera_bias = std::move(cg.g_bias);
            g.g_camera_gamma = std::move(ng.g_gamma);
            g.g_camera_beta = std::move(ng.g_beta);
            g.g_f_cam = std::move(cg.gx);
            break;
        case NodePath::Fallback:
            break;
    }
    return g;
}

}  // namespace hecofuse
