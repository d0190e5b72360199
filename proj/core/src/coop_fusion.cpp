#include "hecofuse/coop_fusion.hpp"

#include <cmath>
#include <string>

namespace hecofuse {

namespace {

float sigmoid_scalar(float x) {
    if (x >= 0.0f) return 1.0f / (1.0f + std::exp(-x));
    const float e = std::exp(x);
    return e / (1.0f + e);
}

}  // namespace

HafParams::HafParams(int channels)
    : w_channel(channels > 0 ? channels : 0, 0.0f),
      vehicle_conv1(std::max(channels / 2, 1), std::max(channels, 1), 3, 3, 1, 1),
      vehicle_conv2(1, std::max(channels / 2, 1), 3, 3, 1, 1),
      infra_conv1(std::max(channels / 2, 1), std::max(channels, 1), 3, 3, 1, 1),
      infra_conv2(1, std::max(channels / 2, 1), 3, 3, 1, 1) {
    if (channels < 1) throw ConfigError("HafParams: channels must be >= 1");
}

AsrPolicy::AsrPolicy(int high, int medium, int low)
    : s_high(high), s_medium(medium), s_low(low) {
    if (!(s_high >= s_medium && s_medium >= s_low && s_low >= 1)) {
        throw ConfigError("AsrPolicy: requires s_high >= s_medium >= s_low >= 1");
    }
}

Tensor4 channel_attention(const HafParams& p) {
    Tensor4 alpha(1, p.channels(), 1, 1);
    for (int c = 0; c < p.channels(); ++c) {
        alpha.data[c] = sigmoid_scalar(p.w_channel[c]);
    }
    return alpha;
}

Tensor4 channel_fuse(const Tensor4& f_v, const Tensor4& f_i,
                     const Tensor4& alpha) {
    if (!f_v.same_shape(f_i)) throw ShapeError("channel_fuse: shape mismatch");
    if (alpha.c != f_v.c || alpha.b != 1 || alpha.h != 1 || alpha.w != 1) {
        throw ShapeError("channel_fuse: alpha must be (1, C, 1, 1)");
    }
    Tensor4 out = Tensor4::zeros_like(f_v);
    for (int bi = 0; bi < f_v.b; ++bi) {
        for (int ci = 0; ci < f_v.c; ++ci) {
            const double a = alpha.data[ci];
            const double one_minus_a = 1.0 - a;
            for (int hi = 0; hi < f_v.h; ++hi) {
                for (int wi = 0; wi < f_v.w; ++wi) {
                    // Double accumulation so the convex-combination identities
                    // (alpha endpoints, f_v == f_i fixed point) survive the
                    // final float rounding.
                    out.at(bi, ci, hi, wi) = static_cast<float>(
                        a * f_v.at(bi, ci, hi, wi) +
                        one_minus_a * f_i.at(bi, ci, hi, wi));
                }
            }
        }
    }
    return out;
}

Tensor4 spatial_attention(const Tensor4& f, NodeRole role, const HafParams& p,
                          SpatialAttentionCache* cache) {
    if (f.c != p.channels()) {
        throw ShapeError("spatial_attention: feature channels do not match params");
    }
    Tensor4 pre = conv2d(f, p.conv1(role));
    Tensor4 hidden = relu(pre);
    Tensor4 logits = conv2d(hidden, p.conv2(role));
    Tensor4 att = sigmoid(logits);
    if (cache) {
        cache->input = f;
        cache->pre_act = std::move(pre);
        cache->hidden = std::move(hidden);
        cache->logits = std::move(logits);
        cache->attention = att;
    }
    return att;
}

namespace {

// The Eq-style weighted sum (f_v . alpha) . A_v + (f_i . (1-alpha)) . A_i,
// evaluated in double with a single rounding so the degeneracy chain holds
// bit-exactly under forced weights.
Tensor4 weighted_sum(const Tensor4& f_v, const Tensor4& f_i,
                     const std::vector<float>& alpha, const Tensor4& a_v,
                     const Tensor4& a_i) {
    Tensor4 out = Tensor4::zeros_like(f_v);
    for (int bi = 0; bi < f_v.b; ++bi) {
        for (int ci = 0; ci < f_v.c; ++ci) {
            const double a = alpha[ci];
            const double one_minus_a = 1.0 - a;
            for (int hi = 0; hi < f_v.h; ++hi) {
                for (int wi = 0; wi < f_v.w; ++wi) {
                    const double tv = (f_v.at(bi, ci, hi, wi) * a) *
                                      a_v.at(bi, 0, hi, wi);
                    const double ti = (f_i.at(bi, ci, hi, wi) * one_minus_a) *
                                      a_i.at(bi, 0, hi, wi);
                    out.at(bi, ci, hi, wi) = static_cast<float>(tv + ti);
                }
            }
        }
    }
    return out;
}

FusedResult fuse_at_scales(const Tensor4& f_v, const Tensor4& f_i, int s_v,
                           int s_i, const HafParams& p, HafFuseCache* cache) {
    if (!f_v.same_shape(f_i)) throw ShapeError("haf_fuse: shape mismatch");
    HafFuseCache local;
    HafFuseCache& cc = cache ? *cache : local;
    cc = HafFuseCache{};
    cc.s_vehicle = s_v;
    cc.s_infra = s_i;
    cc.s_common = std::max(s_v, s_i);
    cc.s_min = std::min(s_v, s_i);
    cc.in_h = f_v.h;
    cc.in_w = f_v.w;
    cc.f_vehicle = f_v;
    cc.f_infra = f_i;

    cc.f_vehicle_down =
        s_v > 1 ? adaptive_avg_pool(f_v, f_v.h / s_v, f_v.w / s_v) : f_v;
    cc.f_infra_down =
        s_i > 1 ? adaptive_avg_pool(f_i, f_i.h / s_i, f_i.w / s_i) : f_i;

    spatial_attention(cc.f_vehicle_down, NodeRole::Vehicle, p, &cc.att_vehicle);
    spatial_attention(cc.f_infra_down, NodeRole::Infra, p, &cc.att_infra);

    const int hc = f_v.h / cc.s_common, wc = f_v.w / cc.s_common;
    auto to_common = [&](const Tensor4& t) {
        return (t.h == hc && t.w == wc) ? t : adaptive_avg_pool(t, hc, wc);
    };
    cc.f_vehicle_common = to_common(cc.f_vehicle_down);
    cc.f_infra_common = to_common(cc.f_infra_down);
    cc.att_vehicle_common = to_common(cc.att_vehicle.attention);
    cc.att_infra_common = to_common(cc.att_infra.attention);

    cc.alpha.resize(p.channels());
    for (int c = 0; c < p.channels(); ++c) {
        cc.alpha[c] = sigmoid_scalar(p.w_channel[c]);
    }

    cc.fused_common = weighted_sum(cc.f_vehicle_common, cc.f_infra_common,
                                   cc.alpha, cc.att_vehicle_common,
                                   cc.att_infra_common);

    FusedResult result;
    result.s_vehicle = s_v;
    result.s_infra = s_i;
    result.alpha_snapshot = Tensor4(1, p.channels(), 1, 1);
    for (int c = 0; c < p.channels(); ++c) {
        result.alpha_snapshot.data[c] = cc.alpha[c];
    }
    result.attention_vehicle = cc.att_vehicle_common;
    result.attention_infra = cc.att_infra_common;
    if (cc.s_common > cc.s_min) {
        result.f_final = bilinear_upsample(cc.fused_common, f_v.h / cc.s_min,
                                           f_v.w / cc.s_min);
    } else {
        result.f_final = cc.fused_common;
    }
    cc.valid = true;
    return result;
}

}  // namespace

FusedResult haf_fuse(const Tensor4& f_v, const Tensor4& f_i, const HafParams& p,
                     HafFuseCache* cache) {
    return fuse_at_scales(f_v, f_i, 1, 1, p, cache);
}

int select_scale(const SensorSet& s, const AsrPolicy& policy) {
    if (s.has_lidar && s.has_camera) return policy.s_medium;
    if (s.has_lidar) return policy.s_low;
    // Camera-only and the sensorless fallback both take the cheapest grid.
    return policy.s_high;
}

FusedResult asr_fuse(const Tensor4& f_v, const Tensor4& f_i,
                     const SensorSet& s_v, const SensorSet& s_i,
                     const HafParams& p, const AsrPolicy& policy,
                     HafFuseCache* cache) {
    if (f_v.h % policy.s_high != 0 || f_v.w % policy.s_high != 0) {
        throw ConfigError("asr_fuse: feature dims " + std::to_string(f_v.h) +
                          "x" + std::to_string(f_v.w) +
                          " not divisible by s_high=" +
                          std::to_string(policy.s_high));
    }
    return fuse_at_scales(f_v, f_i, select_scale(s_v, policy),
                          select_scale(s_i, policy), p, cache);
}

namespace {

struct RoleBackward {
    Tensor4 g_input;  // gradient w.r.t. the node's original-resolution input
    std::vector<float> g_conv1_kernel, g_conv1_bias;
    std::vector<float> g_conv2_kernel, g_conv2_bias;
};

// Backward through one node's branch: common-grid meet, spatial attention
// stack at node scale, per-node pooling.
RoleBackward role_backward(const Tensor4& g_f_common, const Tensor4& g_att_common,
                           const SpatialAttentionCache& att,
                           const Tensor4& f_orig, const Tensor4& f_down,
                           const ConvParams& conv1, const ConvParams& conv2,
                           int s_n, int s_common) {
    RoleBackward rb;
    // Meet: pool from node scale to common when this node was finer.
    Tensor4 g_f_down =
        (f_down.h == g_f_common.h && f_down.w == g_f_common.w)
            ? g_f_common
            : adaptive_avg_pool_backward(f_down, g_f_common.h, g_f_common.w,
                                         g_f_common);
    Tensor4 g_att =
        (att.attention.h == g_att_common.h && att.attention.w == g_att_common.w)
            ? g_att_common
            : adaptive_avg_pool_backward(att.attention, g_att_common.h,
                                         g_att_common.w, g_att_common);

    // Attention stack backward; its input is f_down, so the gradient adds to
    // the feature path.
    Tensor4 g_logits = sigmoid_backward(att.attention, g_att);
    ConvGrads g2 = conv2d_backward(att.hidden, conv2, g_logits);
    Tensor4 g_pre = relu_backward(att.pre_act, g2.gx);
    ConvGrads g1 = conv2d_backward(att.input, conv1, g_pre);
    g_f_down = add(g_f_down, g1.gx);

    rb.g_input = (s_n > 1)
                     ? adaptive_avg_pool_backward(f_orig, f_down.h, f_down.w,
                                                  g_f_down)
                     : g_f_down;
    rb.g_conv1_kernel = std::move(g1.g_kernel);
    rb.g_conv1_bias = std::move(g1.g_bias);
    rb.g_conv2_kernel = std::move(g2.g_kernel);
    rb.g_conv2_bias = std::move(g2.g_bias);
    (void)s_common;
    return rb;
}

}  // namespace

HafGrads haf_backward(const Tensor4& g_out, const HafParams& p,
                      const HafFuseCache& cache) {
    if (!cache.valid) {
        throw ContractError("haf_backward: no cached forward state");
    }
    // Upsample backward when the fused map was restored to a finer grid.
    const Tensor4& fused = cache.fused_common;
    Tensor4 g_fused =
        (g_out.h == fused.h && g_out.w == fused.w)
            ? g_out
            : bilinear_upsample_backward(fused, g_out.h, g_out.w, g_out);

    const Tensor4& fv = cache.f_vehicle_common;
    const Tensor4& fi = cache.f_infra_common;
    const Tensor4& av = cache.att_vehicle_common;
    const Tensor4& ai = cache.att_infra_common;

    Tensor4 g_fv = Tensor4::zeros_like(fv);
    Tensor4 g_fi = Tensor4::zeros_like(fi);
    Tensor4 g_av = Tensor4::zeros_like(av);
    Tensor4 g_ai = Tensor4::zeros_like(ai);
    std::vector<double> g_alpha(cache.alpha.size(), 0.0);

    for (int bi = 0; bi < fv.b; ++bi) {
        for (int ci = 0; ci < fv.c; ++ci) {
            const double a = cache.alpha[ci];
            for (int hi = 0; hi < fv.h; ++hi) {
                for (int wi = 0; wi < fv.w; ++wi) {
                    const double g = g_fused.at(bi, ci, hi, wi);
                    const double xv = fv.at(bi, ci, hi, wi);
                    const double xi = fi.at(bi, ci, hi, wi);
                    const double mv = av.at(bi, 0, hi, wi);
                    const double mi = ai.at(bi, 0, hi, wi);
                    g_fv.at(bi, ci, hi, wi) += static_cast<float>(g * a * mv);
                    g_fi.at(bi, ci, hi, wi) +=
                        static_cast<float>(g * (1.0 - a) * mi);
                    g_av.at(bi, 0, hi, wi) += static_cast<float>(g * xv * a);
                    g_ai.at(bi, 0, hi, wi) +=
                        static_cast<float>(g * xi * (1.0 - a));
                    g_alpha[ci] += g * (xv * mv - xi * mi);
                }
            }
        }
    }

    HafGrads grads;
    grads.g_w_channel.resize(cache.alpha.size());
    for (std::size_t c = 0; c < cache.alpha.size(); ++c) {
        const double a = cache.alpha[c];
        grads.g_w_channel[c] = static_cast<float>(g_alpha[c] * a * (1.0 - a));
    }

    RoleBackward rv = role_backward(g_fv, g_av, cache.att_vehicle,
                                    cache.f_vehicle, cache.f_vehicle_down,
                                    p.vehicle_conv1, p.vehicle_conv2,
                                    cache.s_vehicle, cache.s_common);
    RoleBackward ri = role_backward(g_fi, g_ai, cache.att_infra, cache.f_infra,
                                    cache.f_infra_down, p.infra_conv1,
                                    p.infra_conv2, cache.s_infra,
                                    cache.s_common);
    grads.g_f_vehicle = std::move(rv.g_input);
    grads.g_f_infra = std::move(ri.g_input);
    grads.g_vehicle_conv1_kernel = std::move(rv.g_conv1_kernel);
    grads.g_vehicle_conv1_bias = std::move(rv.g_conv1_bias);
    grads.g_vehicle_conv2_kernel = std::move(rv.g_conv2_kernel);
    grads.g_vehicle_conv2_bias = std::move(rv.g_conv2_bias);
    grads.g_infra_conv1_kernel = std::move(ri.g_conv1_kernel);
    grads.g_infra_conv1_bias = std::move(ri.g_conv1_bias);
    grads.g_infra_conv2_kernel = std::move(ri.g_conv2_kernel);
    grads.g_infra_conv2_bias = std::move(ri.g_conv2_bias);
    return grads;
}

}  // namespace hecofuse
