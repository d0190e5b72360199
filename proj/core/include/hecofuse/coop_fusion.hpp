#pragma once

#include <vector>

#include "hecofuse/node_fusion.hpp"
#include "hecofuse/tensor.hpp"

namespace hecofuse {

enum class NodeRole { Vehicle, Infra };

// Learned channel logits plus one spatial-attention conv stack per node role.
struct HafParams {
    std::vector<float> w_channel;  // raw logits, length = feature channels
    ConvParams vehicle_conv1, vehicle_conv2;  // C -> C/2 -> 1, 3x3, padding 1
    ConvParams infra_conv1, infra_conv2;

    explicit HafParams(int channels);

    int channels() const { return static_cast<int>(w_channel.size()); }
    const ConvParams& conv1(NodeRole role) const {
        return role == NodeRole::Vehicle ? vehicle_conv1 : infra_conv1;
    }
    const ConvParams& conv2(NodeRole role) const {
        return role == NodeRole::Vehicle ? vehicle_conv2 : infra_conv2;
    }
};

// Scale divisors per sensor makeup; larger divisor = coarser grid.
struct AsrPolicy {
    int s_high = 4, s_medium = 2, s_low = 1;

    AsrPolicy() = default;
    AsrPolicy(int high, int medium, int low);
};

struct FusedResult {
    Tensor4 f_final;
    Tensor4 alpha_snapshot;   // (1, C, 1, 1)
    Tensor4 attention_vehicle;  // (B, 1, Hc, Wc) on the fused common grid
    Tensor4 attention_infra;
    int s_vehicle = 1, s_infra = 1;
};

struct SpatialAttentionCache {
    Tensor4 input;
    Tensor4 pre_act;   // conv1 output
    Tensor4 hidden;    // relu
    Tensor4 logits;    // conv2 output
    Tensor4 attention; // sigmoid
};

struct HafFuseCache {
    int s_vehicle = 1, s_infra = 1, s_common = 1, s_min = 1;
    int in_h = 0, in_w = 0;
    Tensor4 f_vehicle, f_infra;          // original inputs
    Tensor4 f_vehicle_down, f_infra_down;  // at each node's own scale
    SpatialAttentionCache att_vehicle, att_infra;  // at node scale
    Tensor4 f_vehicle_common, f_infra_common;
    Tensor4 att_vehicle_common, att_infra_common;
    std::vector<float> alpha;  // sigmoid(w_channel)
    Tensor4 fused_common;      // pre-upsample
    bool valid = false;
};

// alpha = sigmoid(w_channel), shape (1, C, 1, 1); input-independent.
Tensor4 channel_attention(const HafParams& p);

// Per-channel convex combination alpha * f_v + (1 - alpha) * f_i.
Tensor4 channel_fuse(const Tensor4& f_v, const Tensor4& f_i,
                     const Tensor4& alpha);

// sigma(conv2(relu(conv1(f)))), shape (B, 1, H, W).
Tensor4 spatial_attention(const Tensor4& f, NodeRole role, const HafParams& p,
                          SpatialAttentionCache* cache = nullptr);

// Full hierarchical fusion at a single scale:
// (f_v . alpha) . A_v + (f_i . (1 - alpha)) . A_i.
FusedResult haf_fuse(const Tensor4& f_v, const Tensor4& f_i, const HafParams& p,
                     HafFuseCache* cache = nullptr);

int select_scale(const SensorSet& s, const AsrPolicy& policy);

// Scale-aware wrapper: per-node adaptive pooling to H/s_n, per-node spatial
// attention at that scale, coarser-grid meet for the weighted sum, bilinear
// restoration to H/min(s_v, s_i).
FusedResult asr_fuse(const Tensor4& f_v, const Tensor4& f_i,
                     const SensorSet& s_v, const SensorSet& s_i,
                     const HafParams& p, const AsrPolicy& policy,
                     HafFuseCache* cache = nullptr);

struct HafGrads {
    Tensor4 g_f_vehicle, g_f_infra;  // at the original input resolution
    std::vector<float> g_w_channel;
    std::vector<float> g_vehicle_conv1_kernel, g_vehicle_conv1_bias;
    std::vector<float> g_vehicle_conv2_kernel, g_vehicle_conv2_bias;
    std::vector<float> g_infra_conv1_kernel, g_infra_conv1_bias;
    std::vector<float> g_infra_conv2_kernel, g_infra_conv2_bias;
};

// Analytic gradients through the haf/asr forward recorded in `cache`.
HafGrads haf_backward(const Tensor4& g_out, const HafParams& p,
                      const HafFuseCache& cache);

}  // namespace hecofuse
