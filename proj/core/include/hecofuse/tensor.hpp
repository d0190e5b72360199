#pragma once

#include <cstddef>
#include <functional>
#include <vector>

#include "hecofuse/errors.hpp"

namespace hecofuse {

// Dense 4-D float tensor (batch, channels, height, width), row-major with
// width fastest. The currency of every fusion stage.
struct Tensor4 {
    int b = 0, c = 0, h = 0, w = 0;
    std::vector<float> data;

    Tensor4() = default;
    Tensor4(int b_, int c_, int h_, int w_, float fill = 0.0f);

    static Tensor4 zeros_like(const Tensor4& other) {
        return Tensor4(other.b, other.c, other.h, other.w, 0.0f);
    }

    std::size_t size() const { return data.size(); }

    float& at(int bi, int ci, int hi, int wi) {
        return data[((static_cast<std::size_t>(bi) * c + ci) * h + hi) * w + wi];
    }
    float at(int bi, int ci, int hi, int wi) const {
        return data[((static_cast<std::size_t>(bi) * c + ci) * h + hi) * w + wi];
    }

    bool same_shape(const Tensor4& other) const {
        return b == other.b && c == other.c && h == other.h && w == other.w;
    }

    bool all_finite() const;
};

// 2-D convolution parameters. Kernel layout: (c_out, c_in, k_h, k_w).
struct ConvParams {
    int c_out = 0, c_in = 0, k_h = 0, k_w = 0;
    int stride = 1, padding = 0;
    std::vector<float> kernel;  // c_out * c_in * k_h * k_w
    std::vector<float> bias;    // c_out

    ConvParams() = default;
    ConvParams(int c_out_, int c_in_, int k_h_, int k_w_, int stride_ = 1,
               int padding_ = 0);

    float& k_at(int co, int ci, int kh, int kw) {
        return kernel[((static_cast<std::size_t>(co) * c_in + ci) * k_h + kh) * k_w + kw];
    }
    float k_at(int co, int ci, int kh, int kw) const {
        return kernel[((static_cast<std::size_t>(co) * c_in + ci) * k_h + kh) * k_w + kw];
    }
};

// Per-channel affine normalization in inference form:
// y = gamma * (x - running_mean) / sqrt(running_var + eps) + beta.
struct NormParams {
    std::vector<float> gamma, beta, running_mean, running_var;
    float eps = 1e-5f;

    explicit NormParams(int channels = 0)
        : gamma(channels, 1.0f),
          beta(channels, 0.0f),
          running_mean(channels, 0.0f),
          running_var(channels, 1.0f) {}
};

// --- forward ops -----------------------------------------------------------

// Direct cross-correlation (no kernel flip).
Tensor4 conv2d(const Tensor4& x, const ConvParams& p);

Tensor4 sigmoid(const Tensor4& x);
Tensor4 relu(const Tensor4& x);

Tensor4 adaptive_avg_pool(const Tensor4& x, int out_h, int out_w);

// align-corners=false bilinear interpolation; grow-only.
Tensor4 bilinear_upsample(const Tensor4& x, int out_h, int out_w);

Tensor4 concat_channels(const Tensor4& a, const Tensor4& b);
Tensor4 slice_channels(const Tensor4& x, int c_begin, int c_end);

// Elementwise product; b may broadcast along batch, channel, or spatial dims
// (any singleton dim of b stretches).
Tensor4 hadamard(const Tensor4& a, const Tensor4& b);

Tensor4 add(const Tensor4& a, const Tensor4& b);
Tensor4 scale(const Tensor4& a, float s);

Tensor4 affine_norm(const Tensor4& x, const NormParams& p);

// Softmax across the channel dimension, per (b, h, w) site.
Tensor4 softmax_channels(const Tensor4& x);

// --- backward ops ----------------------------------------------------------

struct ConvGrads {
    Tensor4 gx;
    std::vector<float> g_kernel;
    std::vector<float> g_bias;
};
ConvGrads conv2d_backward(const Tensor4& x, const ConvParams& p,
                          const Tensor4& gy);

// y = sigmoid(x); gradient expressed through the forward output.
Tensor4 sigmoid_backward(const Tensor4& y, const Tensor4& gy);
Tensor4 relu_backward(const Tensor4& x, const Tensor4& gy);

Tensor4 adaptive_avg_pool_backward(const Tensor4& x, int out_h, int out_w,
                                   const Tensor4& gy);
Tensor4 bilinear_upsample_backward(const Tensor4& x, int out_h, int out_w,
                                   const Tensor4& gy);

// Gradient of hadamard(a, b) w.r.t. a given b's (possibly broadcast) shape;
// for the gradient w.r.t. b, broadcast dims are sum-reduced.
Tensor4 hadamard_backward_a(const Tensor4& gy, const Tensor4& b);
Tensor4 hadamard_backward_b(const Tensor4& gy, const Tensor4& a,
                            const Tensor4& b_shape);

struct NormGrads {
    Tensor4 gx;
    std::vector<float> g_gamma, g_beta;
};
NormGrads affine_norm_backward(const Tensor4& x, const NormParams& p,
                               const Tensor4& gy);

// y = softmax_channels(x).
Tensor4 softmax_channels_backward(const Tensor4& y, const Tensor4& gy);

// --- verification utility --------------------------------------------------

// Central-difference gradient of a scalar functional, element by element.
Tensor4 finite_diff_grad(const std::function<double(const Tensor4&)>& f,
                         const Tensor4& x, double eps);

}  // namespace hecofuse
