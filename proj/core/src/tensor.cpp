#include "hecofuse/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace hecofuse {

namespace {

void check_positive_dims(int b, int c, int h, int w) {
    if (b < 1 || c < 1 || h < 1 || w < 1) {
        throw ConfigError("Tensor4 dimensions must all be >= 1, got (" +
                          std::to_string(b) + "," + std::to_string(c) + "," +
                          std::to_string(h) + "," + std::to_string(w) + ")");
    }
}

// Window boundaries for adaptive pooling: start=floor(i*in/out),
// end=ceil((i+1)*in/out).
inline int pool_start(int i, int in, int out) {
    return static_cast<int>(static_cast<long>(i) * in / out);
}
inline int pool_end(int i, int in, int out) {
    return static_cast<int>((static_cast<long>(i + 1) * in + out - 1) / out);
}

}  // namespace

Tensor4::Tensor4(int b_, int c_, int h_, int w_, float fill)
    : b(b_), c(c_), h(h_), w(w_) {
    check_positive_dims(b, c, h, w);
    data.assign(static_cast<std::size_t>(b) * c * h * w, fill);
}

bool Tensor4::all_finite() const {
    for (float v : data) {
        if (!std::isfinite(v)) return false;
    }
    return true;
}

ConvParams::ConvParams(int c_out_, int c_in_, int k_h_, int k_w_, int stride_,
                       int padding_)
    : c_out(c_out_), c_in(c_in_), k_h(k_h_), k_w(k_w_), stride(stride_),
      padding(padding_) {
    if (c_out < 1 || c_in < 1 || k_h < 1 || k_w < 1 || stride < 1 ||
        padding < 0) {
        throw ConfigError("invalid ConvParams geometry");
    }
    kernel.assign(static_cast<std::size_t>(c_out) * c_in * k_h * k_w, 0.0f);
    bias.assign(c_out, 0.0f);
}

Tensor4 conv2d(const Tensor4& x, const ConvParams& p) {
    if (x.c != p.c_in) {
        throw ConfigError("conv2d: input has " + std::to_string(x.c) +
                          " channels, kernel expects " + std::to_string(p.c_in));
    }
    const int out_h = (x.h + 2 * p.padding - p.k_h) / p.stride + 1;
    const int out_w = (x.w + 2 * p.padding - p.k_w) / p.stride + 1;
    if (out_h < 1 || out_w < 1) {
        throw ConfigError("conv2d: zero-sized output");
    }
    Tensor4 y(x.b, p.c_out, out_h, out_w);
    for (int bi = 0; bi < x.b; ++bi) {
        for (int co = 0; co < p.c_out; ++co) {
            for (int oh = 0; oh < out_h; ++oh) {
                for (int ow = 0; ow < out_w; ++ow) {
                    double acc = p.bias[co];
                    const int h0 = oh * p.stride - p.padding;
                    const int w0 = ow * p.stride - p.padding;
                    for (int ci = 0; ci < p.c_in; ++ci) {
                        for (int kh = 0; kh < p.k_h; ++kh) {
                            const int ih = h0 + kh;
                            if (ih < 0 || ih >= x.h) continue;
                            for (int kw = 0; kw < p.k_w; ++kw) {
                                const int iw = w0 + kw;
                                if (iw < 0 || iw >= x.w) continue;
                                acc += static_cast<double>(x.at(bi, ci, ih, iw)) *
                                       p.k_at(co, ci, kh, kw);
                            }
                        }
                    }
                    y.at(bi, co, oh, ow) = static_cast<float>(acc);
                }
            }
        }
    }
    return y;
}

Tensor4 sigmoid(const Tensor4& x) {
    Tensor4 y = x;
    for (float& v : y.data) {
        // Split by sign so exp never overflows.
        if (v >= 0.0f) {
            v = 1.0f / (1.0f + std::exp(-v));
        } else {
            const float e = std::exp(v);
            v = e / (1.0f + e);
        }
    }
    return y;
}

Tensor4 relu(const Tensor4& x) {
    Tensor4 y = x;
    for (float& v : y.data) v = std::max(v, 0.0f);
    return y;
}

Tensor4 adaptive_avg_pool(const Tensor4& x, int out_h, int out_w) {
    if (out_h < 1 || out_h > x.h || out_w < 1 || out_w > x.w) {
        throw ConfigError("adaptive_avg_pool: target dims out of range");
    }
    Tensor4 y(x.b, x.c, out_h, out_w);
    for (int bi = 0; bi < x.b; ++bi) {
        for (int ci = 0; ci < x.c; ++ci) {
            for (int oh = 0; oh < out_h; ++oh) {
                const int h0 = pool_start(oh, x.h, out_h);
                const int h1 = pool_end(oh, x.h, out_h);
                for (int ow = 0; ow < out_w; ++ow) {
                    const int w0 = pool_start(ow, x.w, out_w);
                    const int w1 = pool_end(ow, x.w, out_w);
                    double acc = 0.0;
                    for (int ih = h0; ih < h1; ++ih) {
                        for (int iw = w0; iw < w1; ++iw) {
                            acc += x.at(bi, ci, ih, iw);
                        }
                    }
                    y.at(bi, ci, oh, ow) =
                        static_cast<float>(acc / ((h1 - h0) * (w1 - w0)));
                }
            }
        }
    }
    return y;
}

namespace {

// Source coordinate and blend weights for one output index under the
// align-corners=false convention.
struct LerpIndex {
    int lo, hi;
    float w_hi;  // weight of the hi sample; lo gets 1 - w_hi
};

LerpIndex lerp_index(int out_i, int in_n, int out_n) {
    const float src = (out_i + 0.5f) * static_cast<float>(in_n) / out_n - 0.5f;
    LerpIndex li;
    if (src <= 0.0f) {
        li.lo = li.hi = 0;
        li.w_hi = 0.0f;
    } else if (src >= in_n - 1) {
        li.lo = li.hi = in_n - 1;
        li.w_hi = 0.0f;
    } else {
        li.lo = static_cast<int>(src);
        li.hi = li.lo + 1;
        li.w_hi = src - li.lo;
    }
    return li;
}

}  // namespace

Tensor4 bilinear_upsample(const Tensor4& x, int out_h, int out_w) {
    if (out_h < x.h || out_w < x.w) {
        throw ConfigError("bilinear_upsample: shrinking target");
    }
    Tensor4 y(x.b, x.c, out_h, out_w);
    std::vector<LerpIndex> rows(out_h), cols(out_w);
    for (int i = 0; i < out_h; ++i) rows[i] = lerp_index(i, x.h, out_h);
    for (int j = 0; j < out_w; ++j) cols[j] = lerp_index(j, x.w, out_w);
    for (int bi = 0; bi < x.b; ++bi) {
        for (int ci = 0; ci < x.c; ++ci) {
            for (int oh = 0; oh < out_h; ++oh) {
                const LerpIndex& r = rows[oh];
                for (int ow = 0; ow < out_w; ++ow) {
                    const LerpIndex& c = cols[ow];
                    const float v00 = x.at(bi, ci, r.lo, c.lo);
                    const float v01 = x.at(bi, ci, r.lo, c.hi);
                    const float v10 = x.at(bi, ci, r.hi, c.lo);
                    const float v11 = x.at(bi, ci, r.hi, c.hi);
                    const float top = v00 + (v01 - v00) * c.w_hi;
                    const float bot = v10 + (v11 - v10) * c.w_hi;
                    y.at(bi, ci, oh, ow) = top + (bot - top) * r.w_hi;
                }
            }
        }
    }
    return y;
}

Tensor4 concat_channels(const Tensor4& a, const Tensor4& b) {
    if (a.b != b.b || a.h != b.h || a.w != b.w) {
        throw ShapeError("concat_channels: batch/spatial mismatch");
    }
    Tensor4 y(a.b, a.c + b.c, a.h, a.w);
    for (int bi = 0; bi < a.b; ++bi) {
        for (int ci = 0; ci < a.c; ++ci) {
            for (int hi = 0; hi < a.h; ++hi) {
                for (int wi = 0; wi < a.w; ++wi) {
                    y.at(bi, ci, hi, wi) = a.at(bi, ci, hi, wi);
                }
            }
        }
        for (int ci = 0; ci < b.c; ++ci) {
            for (int hi = 0; hi < b.h; ++hi) {
                for (int wi = 0; wi < b.w; ++wi) {
                    y.at(bi, a.c + ci, hi, wi) = b.at(bi, ci, hi, wi);
                }
            }
        }
    }
    return y;
}

Tensor4 slice_channels(const Tensor4& x, int c_begin, int c_end) {
    if (c_begin < 0 || c_end > x.c || c_begin >= c_end) {
        throw ShapeError("slice_channels: bad channel range");
    }
    Tensor4 y(x.b, c_end - c_begin, x.h, x.w);
    for (int bi = 0; bi < x.b; ++bi) {
        for (int ci = c_begin; ci < c_end; ++ci) {
            for (int hi = 0; hi < x.h; ++hi) {
                for (int wi = 0; wi < x.w; ++wi) {
                    y.at(bi, ci - c_begin, hi, wi) = x.at(bi, ci, hi, wi);
                }
            }
        }
    }
    return y;
}

namespace {

void check_broadcastable(const Tensor4& a, const Tensor4& b) {
    const bool ok = (b.b == a.b || b.b == 1) && (b.c == a.c || b.c == 1) &&
                    (b.h == a.h || b.h == 1) && (b.w == a.w || b.w == 1);
    if (!ok) throw ShapeError("hadamard: shapes not broadcastable");
}

inline float bcast_at(const Tensor4& b, int bi, int ci, int hi, int wi) {
    return b.at(b.b == 1 ? 0 : bi, b.c == 1 ? 0 : ci, b.h == 1 ? 0 : hi,
                b.w == 1 ? 0 : wi);
}

}  // namespace

Tensor4 hadamard(const Tensor4& a, const Tensor4& b) {
    check_broadcastable(a, b);
    Tensor4 y = a;
    for (int bi = 0; bi < a.b; ++bi) {
        for (int ci = 0; ci < a.c; ++ci) {
            for (int hi = 0; hi < a.h; ++hi) {
                for (int wi = 0; wi < a.w; ++wi) {
                    y.at(bi, ci, hi, wi) *= bcast_at(b, bi, ci, hi, wi);
                }
            }
        }
    }
    return y;
}

Tensor4 add(const Tensor4& a, const Tensor4& b) {
    if (!a.same_shape(b)) throw ShapeError("add: shape mismatch");
    Tensor4 y = a;
    for (std::size_t i = 0; i < y.data.size(); ++i) y.data[i] += b.data[i];
    return y;
}

Tensor4 scale(const Tensor4& a, float s) {
    Tensor4 y = a;
    for (float& v : y.data) v *= s;
    return y;
}

Tensor4 affine_norm(const Tensor4& x, const NormParams& p) {
    if (static_cast<int>(p.gamma.size()) != x.c) {
        throw ShapeError("affine_norm: channel count mismatch");
    }
    Tensor4 y = x;
    for (int bi = 0; bi < x.b; ++bi) {
        for (int ci = 0; ci < x.c; ++ci) {
            const float inv_std =
                1.0f / std::sqrt(p.running_var[ci] + p.eps);
            const float g = p.gamma[ci] * inv_std;
            const float off = p.beta[ci] - g * p.running_mean[ci];
            for (int hi = 0; hi < x.h; ++hi) {
                for (int wi = 0; wi < x.w; ++wi) {
                    y.at(bi, ci, hi, wi) = g * x.at(bi, ci, hi, wi) + off;
                }
            }
        }
    }
    return y;
}

Tensor4 softmax_channels(const Tensor4& x) {
    Tensor4 y = x;
    for (int bi = 0; bi < x.b; ++bi) {
        for (int hi = 0; hi < x.h; ++hi) {
            for (int wi = 0; wi < x.w; ++wi) {
                float m = -1e30f;
                for (int ci = 0; ci < x.c; ++ci) {
                    m = std::max(m, x.at(bi, ci, hi, wi));
                }
                double sum = 0.0;
                for (int ci = 0; ci < x.c; ++ci) {
                    const double e = std::exp(x.at(bi, ci, hi, wi) - m);
                    y.at(bi, ci, hi, wi) = static_cast<float>(e);
                    sum += e;
                }
                for (int ci = 0; ci < x.c; ++ci) {
                    y.at(bi, ci, hi, wi) =
                        static_cast<float>(y.at(bi, ci, hi, wi) / sum);
                }
            }
        }
    }
    return y;
}

// --- backward --------------------------------------------------------------

ConvGrads conv2d_backward(const Tensor4& x, const ConvParams& p,
                          const Tensor4& gy) {
    ConvGrads g;
    g.gx = Tensor4::zeros_like(x);
    g.g_kernel.assign(p.kernel.size(), 0.0f);
    g.g_bias.assign(p.bias.size(), 0.0f);
    const int out_h = gy.h, out_w = gy.w;
    ConvParams gk = p;  // reuse indexing helpers for the kernel gradient
    gk.kernel = g.g_kernel;
    for (int bi = 0; bi < x.b; ++bi) {
        for (int co = 0; co < p.c_out; ++co) {
            for (int oh = 0; oh < out_h; ++oh) {
                for (int ow = 0; ow < out_w; ++ow) {
                    const float gyv = gy.at(bi, co, oh, ow);
                    if (gyv == 0.0f) continue;
                    g.g_bias[co] += gyv;
                    const int h0 = oh * p.stride - p.padding;
                    const int w0 = ow * p.stride - p.padding;
                    for (int ci = 0; ci < p.c_in; ++ci) {
                        for (int kh = 0; kh < p.k_h; ++kh) {
                            const int ih = h0 + kh;
                            if (ih < 0 || ih >= x.h) continue;
                            for (int kw = 0; kw < p.k_w; ++kw) {
                                const int iw = w0 + kw;
                                if (iw < 0 || iw >= x.w) continue;
                                gk.k_at(co, ci, kh, kw) +=
                                    gyv * x.at(bi, ci, ih, iw);
                                g.gx.at(bi, ci, ih, iw) +=
                                    gyv * p.k_at(co, ci, kh, kw);
                            }
                        }
                    }
                }
            }
        }
    }
    g.g_kernel = gk.kernel;
    return g;
}

Tensor4 sigmoid_backward(const Tensor4& y, const Tensor4& gy) {
    if (!y.same_shape(gy)) throw ShapeError("sigmoid_backward: shape mismatch");
    Tensor4 gx = gy;
    for (std::size_t i = 0; i < gx.data.size(); ++i) {
        gx.data[i] *= y.data[i] * (1.0f - y.data[i]);
    }
    return gx;
}

Tensor4 relu_backward(const Tensor4& x, const Tensor4& gy) {
    if (!x.same_shape(gy)) throw ShapeError("relu_backward: shape mismatch");
    Tensor4 gx = gy;
    for (std::size_t i = 0; i < gx.data.size(); ++i) {
        if (x.data[i] <= 0.0f) gx.data[i] = 0.0f;
    }
    return gx;
}

Tensor4 adaptive_avg_pool_backward(const Tensor4& x, int out_h, int out_w,
                                   const Tensor4& gy) {
    Tensor4 gx = Tensor4::zeros_like(x);
    for (int bi = 0; bi < x.b; ++bi) {
        for (int ci = 0; ci < x.c; ++ci) {
            for (int oh = 0; oh < out_h; ++oh) {
                const int h0 = pool_start(oh, x.h, out_h);
                const int h1 = pool_end(oh, x.h, out_h);
                for (int ow = 0; ow < out_w; ++ow) {
                    const int w0 = pool_start(ow, x.w, out_w);
                    const int w1 = pool_end(ow, x.w, out_w);
                    const float share =
                        gy.at(bi, ci, oh, ow) / ((h1 - h0) * (w1 - w0));
                    for (int ih = h0; ih < h1; ++ih) {
                        for (int iw = w0; iw < w1; ++iw) {
                            gx.at(bi, ci, ih, iw) += share;
                        }
                    }
                }
            }
        }
    }
    return gx;
}

Tensor4 bilinear_upsample_backward(const Tensor4& x, int out_h, int out_w,
                                   const Tensor4& gy) {
    Tensor4 gx = Tensor4::zeros_like(x);
    std::vector<LerpIndex> rows(out_h), cols(out_w);
    for (int i = 0; i < out_h; ++i) rows[i] = lerp_index(i, x.h, out_h);
    for (int j = 0; j < out_w; ++j) cols[j] = lerp_index(j, x.w, out_w);
    for (int bi = 0; bi < x.b; ++bi) {
        for (int ci = 0; ci < x.c; ++ci) {
            for (int oh = 0; oh < out_h; ++oh) {
                const LerpIndex& r = rows[oh];
                for (int ow = 0; ow < out_w; ++ow) {
                    const LerpIndex& c = cols[ow];
                    const float gyv = gy.at(bi, ci, oh, ow);
                    gx.at(bi, ci, r.lo, c.lo) +=
                        gyv * (1.0f - r.w_hi) * (1.0f - c.w_hi);
                    gx.at(bi, ci, r.lo, c.hi) += gyv * (1.0f - r.w_hi) * c.w_hi;
                    gx.at(bi, ci, r.hi, c.lo) += gyv * r.w_hi * (1.0f - c.w_hi);
                    gx.at(bi, ci, r.hi, c.hi) += gyv * r.w_hi * c.w_hi;
                }
            }
        }
    }
    return gx;
}

Tensor4 hadamard_backward_a(const Tensor4& gy, const Tensor4& b) {
    return hadamard(gy, b);
}

Tensor4 hadamard_backward_b(const Tensor4& gy, const Tensor4& a,
                            const Tensor4& b_shape) {
    check_broadcastable(a, b_shape);
    Tensor4 gb = Tensor4::zeros_like(b_shape);
    for (int bi = 0; bi < a.b; ++bi) {
        for (int ci = 0; ci < a.c; ++ci) {
            for (int hi = 0; hi < a.h; ++hi) {
                for (int wi = 0; wi < a.w; ++wi) {
                    gb.at(gb.b == 1 ? 0 : bi, gb.c == 1 ? 0 : ci,
                          gb.h == 1 ? 0 : hi, gb.w == 1 ? 0 : wi) +=
                        gy.at(bi, ci, hi, wi) * a.at(bi, ci, hi, wi);
                }
            }
        }
    }
    return gb;
}

NormGrads affine_norm_backward(const Tensor4& x, const NormParams& p,
                               const Tensor4& gy) {
    NormGrads g;
    g.gx = Tensor4::zeros_like(x);
    g.g_gamma.assign(p.gamma.size(), 0.0f);
    g.g_beta.assign(p.beta.size(), 0.0f);
    for (int bi = 0; bi < x.b; ++bi) {
        for (int ci = 0; ci < x.c; ++ci) {
            const float inv_std = 1.0f / std::sqrt(p.running_var[ci] + p.eps);
            for (int hi = 0; hi < x.h; ++hi) {
                for (int wi = 0; wi < x.w; ++wi) {
                    const float gyv = gy.at(bi, ci, hi, wi);
                    const float xn =
                        (x.at(bi, ci, hi, wi) - p.running_mean[ci]) * inv_std;
                    g.g_gamma[ci] += gyv * xn;
                    g.g_beta[ci] += gyv;
                    g.gx.at(bi, ci, hi, wi) = gyv * p.gamma[ci] * inv_std;
                }
            }
        }
    }
    return g;
}

Tensor4 softmax_channels_backward(const Tensor4& y, const Tensor4& gy) {
    if (!y.same_shape(gy)) {
        throw ShapeError("softmax_channels_backward: shape mismatch");
    }
    Tensor4 gx = Tensor4::zeros_like(y);
    for (int bi = 0; bi < y.b; ++bi) {
        for (int hi = 0; hi < y.h; ++hi) {
            for (int wi = 0; wi < y.w; ++wi) {
                double dot = 0.0;
                for (int ci = 0; ci < y.c; ++ci) {
                    dot += static_cast<double>(gy.at(bi, ci, hi, wi)) *
                           y.at(bi, ci, hi, wi);
                }
                for (int ci = 0; ci < y.c; ++ci) {
                    gx.at(bi, ci, hi, wi) = static_cast<float>(
                        y.at(bi, ci, hi, wi) *
                        (gy.at(bi, ci, hi, wi) - dot));
                }
            }
        }
    }
    return gx;
}

Tensor4 finite_diff_grad(const std::function<double(const Tensor4&)>& f,
                         const Tensor4& x, double eps) {
    if (eps <= 0.0) throw DomainError("finite_diff_grad: eps must be > 0");
    Tensor4 g = Tensor4::zeros_like(x);
    Tensor4 probe = x;
    for (std::size_t i = 0; i < x.data.size(); ++i) {
        const float orig = probe.data[i];
        probe.data[i] = static_cast<float>(orig + eps);
        const double fp = f(probe);
        probe.data[i] = static_cast<float>(orig - eps);
        const double fm = f(probe);
        probe.data[i] = orig;
        g.data[i] = static_cast<float>((fp - fm) / (2.0 * eps));
    }
    return g;
}

}  // namespace hecofuse
