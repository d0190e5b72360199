// Acceptance gate for the cooperative-perception pipeline. Each numbered
// criterion prints exactly one PASS/FAIL line; the binary exits non-zero if
// any criterion fails. Time-bounded criteria also fail when they overrun.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "hecofuse/config.hpp"
#include "hecofuse/eval.hpp"
#include "hecofuse/pipeline.hpp"
#include "hecofuse/rng.hpp"
#include "hecofuse/wire.hpp"
#include "test_util.hpp"

#ifndef HECOFUSE_CLI_PATH
#error "HECOFUSE_CLI_PATH must point at the command-line binary"
#endif

namespace fs = std::filesystem;
using namespace hecofuse;
using testutil::close_rel_abs;
using testutil::random_tensor;
using testutil::randomize_conv;

namespace {

// --- reporting --------------------------------------------------------------

struct Check {
    bool ok = true;
    std::string why;

    void expect(bool cond, const std::string& msg) {
        if (!cond && ok) {
            ok = false;
            why = msg;
        }
    }
};

int g_failures = 0;

void run_criterion(int number, const std::string& title, double time_limit_s,
                   const std::function<void(Check&)>& body) {
    Check c;
    const auto t0 = std::chrono::steady_clock::now();
    try {
        body(c);
    } catch (const std::exception& e) {
        c.expect(false, std::string("unexpected exception: ") + e.what());
    }
    const double elapsed =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
            .count();
    if (time_limit_s > 0 && elapsed > time_limit_s) {
        c.expect(false, "time limit exceeded (" + std::to_string(elapsed) +
                            " s > " + std::to_string(time_limit_s) + " s)");
    }
    std::printf("criterion %d [%s]: %s (%.1f s)%s%s\n", number, title.c_str(),
                c.ok ? "PASS" : "FAIL", elapsed, c.ok ? "" : " -- ",
                c.ok ? "" : c.why.c_str());
    std::fflush(stdout);
    if (!c.ok) ++g_failures;
}

// --- independent scalar references ------------------------------------------

double sigmoid_ref(double x) { return 1.0 / (1.0 + std::exp(-x)); }

Tensor4 conv_ref(const Tensor4& x, const ConvParams& p) {
    const int oh = (x.h + 2 * p.padding - p.k_h) / p.stride + 1;
    const int ow = (x.w + 2 * p.padding - p.k_w) / p.stride + 1;
    Tensor4 y(x.b, p.c_out, oh, ow);
    for (int bi = 0; bi < x.b; ++bi)
        for (int co = 0; co < p.c_out; ++co)
            for (int i = 0; i < oh; ++i)
                for (int j = 0; j < ow; ++j) {
                    double acc = p.bias[co];
                    for (int ci = 0; ci < p.c_in; ++ci)
                        for (int ky = 0; ky < p.k_h; ++ky)
                            for (int kx = 0; kx < p.k_w; ++kx) {
                                const int iy = i * p.stride + ky - p.padding;
                                const int ix = j * p.stride + kx - p.padding;
                                if (iy < 0 || iy >= x.h || ix < 0 || ix >= x.w)
                                    continue;
                                acc += static_cast<double>(
                                           x.at(bi, ci, iy, ix)) *
                                       p.k_at(co, ci, ky, kx);
                            }
                    y.at(bi, co, i, j) = static_cast<float>(acc);
                }
    return y;
}

// Exact block mean for integer downscale factors.
Tensor4 block_pool_ref(const Tensor4& x, int out_h, int out_w) {
    const int sh = x.h / out_h, sw = x.w / out_w;
    Tensor4 y(x.b, x.c, out_h, out_w);
    for (int bi = 0; bi < x.b; ++bi)
        for (int ci = 0; ci < x.c; ++ci)
            for (int i = 0; i < out_h; ++i)
                for (int j = 0; j < out_w; ++j) {
                    double acc = 0.0;
                    for (int dy = 0; dy < sh; ++dy)
                        for (int dx = 0; dx < sw; ++dx)
                            acc += x.at(bi, ci, i * sh + dy, j * sw + dx);
                    y.at(bi, ci, i, j) = static_cast<float>(acc / (sh * sw));
                }
    return y;
}

// Half-pixel-center bilinear interpolation with edge clamping.
Tensor4 bilinear_ref(const Tensor4& x, int out_h, int out_w) {
    Tensor4 y(x.b, x.c, out_h, out_w);
    auto sample = [&](int bi, int ci, double sy, double sx) {
        sy = std::clamp(sy, 0.0, static_cast<double>(x.h - 1));
        sx = std::clamp(sx, 0.0, static_cast<double>(x.w - 1));
        const int y0 = static_cast<int>(sy), x0 = static_cast<int>(sx);
        const int y1 = std::min(y0 + 1, x.h - 1), x1 = std::min(x0 + 1, x.w - 1);
        const double fy = sy - y0, fx = sx - x0;
        const double top = x.at(bi, ci, y0, x0) * (1 - fx) +
                           x.at(bi, ci, y0, x1) * fx;
        const double bot = x.at(bi, ci, y1, x0) * (1 - fx) +
                           x.at(bi, ci, y1, x1) * fx;
        return top * (1 - fy) + bot * fy;
    };
    for (int bi = 0; bi < x.b; ++bi)
        for (int ci = 0; ci < x.c; ++ci)
            for (int i = 0; i < out_h; ++i)
                for (int j = 0; j < out_w; ++j)
                    y.at(bi, ci, i, j) = static_cast<float>(
                        sample(bi, ci,
                               (i + 0.5) * static_cast<double>(x.h) / out_h - 0.5,
                               (j + 0.5) * static_cast<double>(x.w) / out_w - 0.5));
    return y;
}

Tensor4 relu_ref(const Tensor4& x) {
    Tensor4 y = x;
    for (auto& v : y.data) v = std::max(v, 0.0f);
    return y;
}

Tensor4 attention_ref(const Tensor4& f, const ConvParams& c1,
                      const ConvParams& c2) {
    Tensor4 logits = conv_ref(relu_ref(conv_ref(f, c1)), c2);
    for (auto& v : logits.data) v = static_cast<float>(sigmoid_ref(v));
    return logits;
}

// Scale-aware fusion recomputed with the scalar references above.
Tensor4 fuse_ref(const Tensor4& f_v, const Tensor4& f_i, int s_v, int s_i,
                 const HafParams& p) {
    const int s_common = std::max(s_v, s_i), s_min = std::min(s_v, s_i);
    Tensor4 fv_down = s_v > 1 ? block_pool_ref(f_v, f_v.h / s_v, f_v.w / s_v)
                              : f_v;
    Tensor4 fi_down = s_i > 1 ? block_pool_ref(f_i, f_i.h / s_i, f_i.w / s_i)
                              : f_i;
    Tensor4 av = attention_ref(fv_down, p.vehicle_conv1, p.vehicle_conv2);
    Tensor4 ai = attention_ref(fi_down, p.infra_conv1, p.infra_conv2);
    const int hc = f_v.h / s_common, wc = f_v.w / s_common;
    auto to_common = [&](const Tensor4& t) {
        return (t.h == hc && t.w == wc) ? t : block_pool_ref(t, hc, wc);
    };
    Tensor4 fvc = to_common(fv_down), fic = to_common(fi_down);
    Tensor4 avc = to_common(av), aic = to_common(ai);
    Tensor4 fused(1, f_v.c, hc, wc);
    for (int ci = 0; ci < f_v.c; ++ci) {
        const double alpha = sigmoid_ref(p.w_channel[ci]);
        for (int i = 0; i < hc; ++i)
            for (int j = 0; j < wc; ++j)
                fused.at(0, ci, i, j) = static_cast<float>(
                    fvc.at(0, ci, i, j) * alpha * avc.at(0, 0, i, j) +
                    fic.at(0, ci, i, j) * (1.0 - alpha) * aic.at(0, 0, i, j));
    }
    if (s_common > s_min)
        return bilinear_ref(fused, f_v.h / s_min, f_v.w / s_min);
    return fused;
}

void randomize_haf(Rng& rng, HafParams& p) {
    for (auto& v : p.w_channel) v = static_cast<float>(rng.uniform(-1.0, 1.0));
    randomize_conv(rng, p.vehicle_conv1);
    randomize_conv(rng, p.vehicle_conv2);
    randomize_conv(rng, p.infra_conv1);
    randomize_conv(rng, p.infra_conv2);
}

void force_unit_attention(HafParams& p) {
    std::fill(p.vehicle_conv1.kernel.begin(), p.vehicle_conv1.kernel.end(), 0.0f);
    std::fill(p.vehicle_conv2.kernel.begin(), p.vehicle_conv2.kernel.end(), 0.0f);
    std::fill(p.infra_conv1.kernel.begin(), p.infra_conv1.kernel.end(), 0.0f);
    std::fill(p.infra_conv2.kernel.begin(), p.infra_conv2.kernel.end(), 0.0f);
    std::fill(p.vehicle_conv1.bias.begin(), p.vehicle_conv1.bias.end(), 0.0f);
    std::fill(p.infra_conv1.bias.begin(), p.infra_conv1.bias.end(), 0.0f);
    p.vehicle_conv2.bias.assign(1, 100.0f);
    p.infra_conv2.bias.assign(1, 100.0f);
}

double max_diff(const Tensor4& a, const Tensor4& b) {
    return testutil::max_abs_diff(a, b);
}

// --- criterion 1 ------------------------------------------------------------

void criterion_kernels(Check& c) {
    Rng rng(1001);

    // conv2d against the scalar sextuple loop.
    for (int t = 0; t < 100 && c.ok; ++t) {
        ConvParams p(1 + static_cast<int>(rng.uniform_index(3)),
                     1 + static_cast<int>(rng.uniform_index(3)), 3, 3, 1, 1);
        randomize_conv(rng, p);
        Tensor4 x = random_tensor(rng, 1, p.c_in, 5, 6);
        c.expect(max_diff(conv2d(x, p), conv_ref(x, p)) < 1e-5,
                 "conv2d deviates from the scalar reference");
    }

    // Single-scale fusion against the scalar reference.
    for (int t = 0; t < 100 && c.ok; ++t) {
        HafParams p(2);
        randomize_haf(rng, p);
        Tensor4 f_v = random_tensor(rng, 1, 2, 4, 4);
        Tensor4 f_i = random_tensor(rng, 1, 2, 4, 4);
        FusedResult r = haf_fuse(f_v, f_i, p);
        c.expect(max_diff(r.f_final, fuse_ref(f_v, f_i, 1, 1, p)) < 1e-5,
                 "single-scale fusion deviates from the scalar reference");
    }

    // Scale-aware fusion across random sensor makeups.
    const AsrPolicy policy(4, 2, 1);
    for (int t = 0; t < 100 && c.ok; ++t) {
        HafParams p(2);
        randomize_haf(rng, p);
        SensorSet sv{rng.uniform() < 0.5, rng.uniform() < 0.5};
        SensorSet si{rng.uniform() < 0.5, rng.uniform() < 0.5};
        Tensor4 f_v = random_tensor(rng, 1, 2, 8, 8);
        Tensor4 f_i = random_tensor(rng, 1, 2, 8, 8);
        FusedResult r = asr_fuse(f_v, f_i, sv, si, p, policy);
        Tensor4 ref = fuse_ref(f_v, f_i, select_scale(sv, policy),
                               select_scale(si, policy), p);
        c.expect(max_diff(r.f_final, ref) < 1e-5,
                 "scale-aware fusion deviates from the scalar reference");
    }

    // Voxelize against a per-cell grouping map.
    const BevGridSpec grid(0.0, 8.0, 0.0, 8.0, 1.0);
    for (int t = 0; t < 100 && c.ok; ++t) {
        PointCloud pc;
        const int n = 1 + static_cast<int>(rng.uniform_index(200));
        for (int i = 0; i < n; ++i)
            pc.points.push_back({rng.uniform(-1.0, 9.0), rng.uniform(-1.0, 9.0),
                                 rng.uniform(-0.5, 3.0), rng.uniform()});
        PillarGrid pg = voxelize(pc, grid);
        std::map<std::pair<int, int>, std::vector<const LidarPoint*>> groups;
        for (const auto& pt : pc.points) {
            auto cell = world_to_bev_cell({pt.x, pt.y, pt.z}, grid);
            if (cell) groups[*cell].push_back(&pt);
        }
        for (int row = 0; row < grid.rows && c.ok; ++row)
            for (int col = 0; col < grid.cols && c.ok; ++col) {
                auto it = groups.find({row, col});
                const std::size_t flat =
                    static_cast<std::size_t>(row) * grid.cols + col;
                if (it == groups.end()) {
                    c.expect(pg.occupancy[flat] == 0, "spurious occupancy");
                    for (int ch = 0; ch < kPillarChannels; ++ch)
                        c.expect(pg.features.at(0, ch, row, col) == 0.0f,
                                 "non-zero feature in an empty cell");
                    continue;
                }
                c.expect(pg.occupancy[flat] == 1, "missing occupancy");
                double sx = 0, sy = 0, sz = 0, si = 0;
                for (const auto* pt : it->second) {
                    sx += pt->x - grid.cell_center_x(col);
                    sy += pt->y - grid.cell_center_y(row);
                    sz += pt->z;
                    si += pt->intensity;
                }
                const double cnt = static_cast<double>(it->second.size());
                const double want[kPillarChannels] = {
                    sx / cnt, sy / cnt, sz / cnt, si / cnt,
                    std::log1p(cnt)};
                for (int ch = 0; ch < kPillarChannels; ++ch)
                    c.expect(std::abs(pg.features.at(0, ch, row, col) -
                                      want[ch]) < 1e-5,
                             "pillar aggregate deviates from the grouping map");
            }
    }

    // Camera lift conserves scattered feature mass when every lifted bin
    // lands inside the grid (straight-down camera over the grid center).
    const BevGridSpec cam_grid(0.0, 32.0, 0.0, 32.0, 1.0);
    const CameraIntrinsics K(40.0, 40.0, 32.0, 24.0, 64, 48);
    const Pose cam = Pose::look_at({16.0, 16.0, 25.0}, {16.0, 16.0, 0.0});
    const DepthBins bins = DepthBins::uniform(2.0, 20.0, 4);
    const int img_c = kNumClasses + 1;
    for (int t = 0; t < 100 && c.ok; ++t) {
        CameraEncoderParams p(img_c, 4, 3);
        randomize_conv(rng, p.depth_head);
        randomize_conv(rng, p.out_conv);
        SyntheticImage img;
        img.width = K.width;
        img.height = K.height;
        img.features = random_tensor(rng, 1, img_c, K.height, K.width, 0.0, 1.0);
        CameraEncodeCache cache;
        Tensor4 raw_sums;
        camera_bev_encode(img, K, cam, bins, p, cam_grid, &cache, &raw_sums);
        for (int v : cache.cell_of)
            c.expect(v >= 0, "a lifted bin left the grid");
        for (int ch = 0; ch < img_c && c.ok; ++ch) {
            double scattered = 0.0, source = 0.0;
            for (int i = 0; i < cam_grid.rows; ++i)
                for (int j = 0; j < cam_grid.cols; ++j)
                    scattered += raw_sums.at(0, ch, i, j);
            for (int v = 0; v < img.height; ++v)
                for (int u = 0; u < img.width; ++u)
                    source += img.features.at(0, ch, v, u);
            c.expect(std::abs(scattered - source) <=
                         1e-4 * std::max(1.0, std::abs(source)),
                     "camera lift does not conserve feature mass");
        }
    }
}

// --- criterion 2 ------------------------------------------------------------

constexpr double kGradRtol = 1e-3;
constexpr double kGradAtol = 1e-5;
constexpr double kGradEps = 1e-3;

double fd_scalar(float& slot, const std::function<double()>& loss,
                 double eps) {
    const float orig = slot;
    slot = orig + static_cast<float>(eps);
    const double up = loss();
    slot = orig - static_cast<float>(eps);
    const double dn = loss();
    slot = orig;
    return (up - dn) / (2.0 * eps);
}

// The small step bounds truncation error, the large one bounds float
// quantization noise, and the Richardson combination of two large steps
// cancels the leading truncation term. A genuine analytic bug fails all
// three.
bool grad_matches(double analytic, float& slot,
                  const std::function<double()>& loss) {
    const double fd_small = fd_scalar(slot, loss, kGradEps);
    if (close_rel_abs(analytic, fd_small, kGradRtol, kGradAtol)) return true;
    // Quantization noise at different steps is independent; averaging a few
    // small steps (whose truncation error is negligible) cancels most of it.
    const double fd_avg = (fd_scalar(slot, loss, 0.3 * kGradEps) + fd_small +
                           fd_scalar(slot, loss, 2.0 * kGradEps)) /
                          3.0;
    if (close_rel_abs(analytic, fd_avg, kGradRtol, kGradAtol)) return true;
    const double fd_large = fd_scalar(slot, loss, 10.0 * kGradEps);
    if (close_rel_abs(analytic, fd_large, kGradRtol, kGradAtol)) return true;
    const double fd_huge = fd_scalar(slot, loss, 20.0 * kGradEps);
    return close_rel_abs(analytic, (4.0 * fd_large - fd_huge) / 3.0, kGradRtol,
                         kGradAtol);
}

// End-to-end variant for the full-pipeline sweep. Through the whole float
// forward pass the loss quantization and near-kink relu pre-activations put
// a floor under finite-difference accuracy that no step size avoids; the
// looser bound still catches sign errors, dropped terms, and misrouted
// gradients, while the tight component checks above carry the precise
// tolerances.
bool grad_matches_loose(double analytic, float& slot,
                        const std::function<double()>& loss) {
    constexpr double rtol = 2e-2, atol = 2e-3;
    for (const double eps : {1e-4, 1e-3, 1e-2}) {
        if (close_rel_abs(analytic, fd_scalar(slot, loss, eps), rtol, atol)) {
            return true;
        }
    }
    const double fd_large = fd_scalar(slot, loss, 1e-2);
    const double fd_huge = fd_scalar(slot, loss, 2e-2);
    return close_rel_abs(analytic, (4.0 * fd_large - fd_huge) / 3.0, rtol,
                         atol);
}

void check_param_vec(Check& c, const std::vector<float>& analytic,
                     std::vector<float>& param,
                     const std::function<double()>& loss, const char* label) {
    if (analytic.size() != param.size()) {
        c.expect(false, std::string("gradient size mismatch: ") + label);
        return;
    }
    for (std::size_t i = 0; i < param.size() && c.ok; ++i) {
        c.expect(grad_matches(analytic[i], param[i], loss),
                 std::string("gradient mismatch: ") + label + "[" +
                     std::to_string(i) + "]");
    }
}

void criterion_gradients(Check& c) {
    // Fusion parameters on random 1x2x4x4 inputs.
    {
        Rng rng(2003);
        HafParams p(2);
        randomize_haf(rng, p);
        Tensor4 f_v = random_tensor(rng, 1, 2, 4, 4);
        Tensor4 f_i = random_tensor(rng, 1, 2, 4, 4);
        Tensor4 gy = random_tensor(rng, 1, 2, 4, 4);

        auto loss = [&]() {
            FusedResult r = haf_fuse(f_v, f_i, p);
            double s = 0.0;
            for (std::size_t i = 0; i < r.f_final.data.size(); ++i)
                s += static_cast<double>(r.f_final.data[i]) * gy.data[i];
            return s;
        };

        HafFuseCache cache;
        haf_fuse(f_v, f_i, p, &cache);
        HafGrads g = haf_backward(gy, p, cache);

        auto check_vec = [&](const std::vector<float>& analytic,
                             std::vector<float>& param, const char* label) {
            for (std::size_t i = 0; i < param.size() && c.ok; ++i) {
                c.expect(grad_matches(analytic[i], param[i], loss),
                         std::string("fusion gradient mismatch: ") + label);
            }
        };
        check_vec(g.g_w_channel, p.w_channel, "channel logits");
        check_vec(g.g_vehicle_conv1_kernel, p.vehicle_conv1.kernel, "v conv1 k");
        check_vec(g.g_vehicle_conv1_bias, p.vehicle_conv1.bias, "v conv1 b");
        check_vec(g.g_vehicle_conv2_kernel, p.vehicle_conv2.kernel, "v conv2 k");
        check_vec(g.g_vehicle_conv2_bias, p.vehicle_conv2.bias, "v conv2 b");
        check_vec(g.g_infra_conv1_kernel, p.infra_conv1.kernel, "i conv1 k");
        check_vec(g.g_infra_conv1_bias, p.infra_conv1.bias, "i conv1 b");
        check_vec(g.g_infra_conv2_kernel, p.infra_conv2.kernel, "i conv2 k");
        check_vec(g.g_infra_conv2_bias, p.infra_conv2.bias, "i conv2 b");
    }

    // Lidar encoder parameters on random 4x4 pillar features.
    {
        Rng rng(2013);
        LidarEncoderParams p(2);
        randomize_conv(rng, p.conv1);
        randomize_conv(rng, p.conv2);
        PillarGrid pg;
        pg.features = random_tensor(rng, 1, kPillarChannels, 4, 4);
        pg.occupancy.assign(16, 1);
        LidarEncodeCache cache;
        Tensor4 out = lidar_bev_encode(pg, p, &cache);
        Tensor4 gy = random_tensor(rng, 1, out.c, out.h, out.w);
        auto loss = [&]() {
            Tensor4 o = lidar_bev_encode(pg, p, nullptr);
            double s = 0.0;
            for (std::size_t i = 0; i < o.data.size(); ++i)
                s += static_cast<double>(o.data[i]) * gy.data[i];
            return s;
        };
        LidarEncoderGrads g = lidar_bev_encode_backward(p, cache, gy);
        check_param_vec(c, g.g_conv1_kernel, p.conv1.kernel, loss,
                        "lidar conv1 k");
        check_param_vec(c, g.g_conv1_bias, p.conv1.bias, loss, "lidar conv1 b");
        check_param_vec(c, g.g_conv2_kernel, p.conv2.kernel, loss,
                        "lidar conv2 k");
        check_param_vec(c, g.g_conv2_bias, p.conv2.bias, loss, "lidar conv2 b");
    }

    // Camera encoder parameters on random image features over a tiny grid.
    {
        Rng rng(2014);
        CameraEncoderParams p(kNumClasses + 1, 2, 2);
        randomize_conv(rng, p.depth_head);
        randomize_conv(rng, p.out_conv);
        BevGridSpec grid(0.0, 4.0, 0.0, 4.0, 1.0);
        CameraIntrinsics K(3.0, 3.0, 2.0, 1.5, 4, 3);
        Pose pose = Pose::look_at({2.0, -0.5, 1.2}, {2.0, 2.0, 0.5});
        DepthBins bins = DepthBins::uniform(0.5, 6.0, 2);
        SyntheticImage img;
        img.width = 4;
        img.height = 3;
        img.features = random_tensor(rng, 1, kNumClasses + 1, 3, 4);
        CameraEncodeCache cache;
        Tensor4 out = camera_bev_encode(img, K, pose, bins, p, grid, &cache);
        Tensor4 gy = random_tensor(rng, 1, out.c, out.h, out.w);
        auto loss = [&]() {
            Tensor4 o = camera_bev_encode(img, K, pose, bins, p, grid, nullptr);
            double s = 0.0;
            for (std::size_t i = 0; i < o.data.size(); ++i)
                s += static_cast<double>(o.data[i]) * gy.data[i];
            return s;
        };
        CameraEncoderGrads g = camera_bev_encode_backward(p, cache, gy);
        check_param_vec(c, g.g_depth_head_kernel, p.depth_head.kernel, loss,
                        "camera depth k");
        check_param_vec(c, g.g_depth_head_bias, p.depth_head.bias, loss,
                        "camera depth b");
        check_param_vec(c, g.g_out_conv_kernel, p.out_conv.kernel, loss,
                        "camera out k");
        check_param_vec(c, g.g_out_conv_bias, p.out_conv.bias, loss,
                        "camera out b");
    }

    // Intra-node fusion parameters on random 1x2x4x4 inputs, all three
    // sensor paths.
    {
        Rng rng(2015);
        NodeFusionParams p(2, 2);
        randomize_conv(rng, p.fusion_conv);
        randomize_conv(rng, p.lidar_adapter);
        randomize_conv(rng, p.camera_adapter);
        for (NormParams* n : {&p.fusion_norm, &p.lidar_norm, &p.camera_norm}) {
            for (auto& v : n->gamma) v = static_cast<float>(rng.uniform(0.5, 1.5));
            for (auto& v : n->beta) v = static_cast<float>(rng.uniform(-0.5, 0.5));
        }
        Tensor4 f_cam = random_tensor(rng, 1, 2, 4, 4);
        Tensor4 f_lidar = random_tensor(rng, 1, 2, 4, 4);
        Tensor4 gy = random_tensor(rng, 1, 2, 4, 4);
        for (const SensorSet& s :
             {SensorSet{true, true}, SensorSet{true, false},
              SensorSet{false, true}}) {
            std::optional<Tensor4> oc =
                s.has_camera ? std::optional<Tensor4>(f_cam) : std::nullopt;
            std::optional<Tensor4> ol =
                s.has_lidar ? std::optional<Tensor4>(f_lidar) : std::nullopt;
            NodeFusionCache cache;
            node_features(oc, ol, s, p, 1, 4, 4, &cache);
            NodeFusionGrads g = node_features_backward(p, cache, gy);
            auto loss = [&]() {
                Tensor4 o = node_features(oc, ol, s, p, 1, 4, 4, nullptr);
                double acc = 0.0;
                for (std::size_t i = 0; i < o.data.size(); ++i)
                    acc += static_cast<double>(o.data[i]) * gy.data[i];
                return acc;
            };
            if (s.count() == 2) {
                check_param_vec(c, g.g_fusion_kernel, p.fusion_conv.kernel,
                                loss, "node fusion k");
                check_param_vec(c, g.g_fusion_bias, p.fusion_conv.bias, loss,
                                "node fusion b");
                check_param_vec(c, g.g_fusion_gamma, p.fusion_norm.gamma, loss,
                                "node fusion gamma");
                check_param_vec(c, g.g_fusion_beta, p.fusion_norm.beta, loss,
                                "node fusion beta");
            } else if (s.has_lidar) {
                check_param_vec(c, g.g_lidar_kernel, p.lidar_adapter.kernel,
                                loss, "node lidar k");
                check_param_vec(c, g.g_lidar_bias, p.lidar_adapter.bias, loss,
                                "node lidar b");
                check_param_vec(c, g.g_lidar_gamma, p.lidar_norm.gamma, loss,
                                "node lidar gamma");
                check_param_vec(c, g.g_lidar_beta, p.lidar_norm.beta, loss,
                                "node lidar beta");
            } else {
                check_param_vec(c, g.g_camera_kernel, p.camera_adapter.kernel,
                                loss, "node camera k");
                check_param_vec(c, g.g_camera_bias, p.camera_adapter.bias, loss,
                                "node camera b");
                check_param_vec(c, g.g_camera_gamma, p.camera_norm.gamma, loss,
                                "node camera gamma");
                check_param_vec(c, g.g_camera_beta, p.camera_norm.beta, loss,
                                "node camera beta");
            }
        }
    }

    // Detection-head parameters on a random 1x2x4x4 fused map through the
    // detection loss.
    {
        Rng rng(2016);
        HeadParams head(2);
        randomize_conv(rng, head.class_conv);
        randomize_conv(rng, head.box_conv);
        Tensor4 fused = random_tensor(rng, 1, 2, 4, 4);
        TargetGrid t;
        t.s_out = 1;
        t.rows = 4;
        t.cols = 4;
        t.class_id.resize(16);
        t.box.resize(16);
        for (int i = 0; i < 16; ++i) {
            t.class_id[i] = i % (kNumClasses + 1);
            for (int k = 0; k < kBoxChannels; ++k)
                t.box[i][k] = static_cast<float>(rng.uniform(-0.5, 0.5));
        }
        auto loss = [&]() {
            Tensor4 logits = conv2d(fused, head.class_conv);
            Tensor4 box = conv2d(fused, head.box_conv);
            return detection_loss(logits, box, t, 2.0, 1.0, nullptr, nullptr)
                .total;
        };
        Tensor4 logits = conv2d(fused, head.class_conv);
        Tensor4 box = conv2d(fused, head.box_conv);
        Tensor4 g_logits, g_box;
        detection_loss(logits, box, t, 2.0, 1.0, &g_logits, &g_box);
        ConvGrads gc = conv2d_backward(fused, head.class_conv, g_logits);
        ConvGrads gb = conv2d_backward(fused, head.box_conv, g_box);
        check_param_vec(c, gc.g_kernel, head.class_conv.kernel, loss,
                        "head class k");
        check_param_vec(c, gc.g_bias, head.class_conv.bias, loss,
                        "head class b");
        check_param_vec(c, gb.g_kernel, head.box_conv.kernel, loss,
                        "head box k");
        check_param_vec(c, gb.g_bias, head.box_conv.bias, loss, "head box b");
    }

    // Every registered model parameter through the full pipeline.
    HarnessConfig hc;
    hc.x_min = 0.0;
    hc.x_max = 8.0;
    hc.y_min = 0.0;
    hc.y_max = 8.0;
    hc.cell_size = 1.0;
    hc.c_bev = 2;
    hc.c_out = 2;
    hc.depth_bin_count = 2;
    hc.s_high = 2;
    hc.s_medium = 2;
    hc.s_low = 1;

    ScenarioSpec spec;
    spec.seed = 5;
    spec.grid = hc.grid();
    spec.scene.objects.push_back(
        OrientedBox3D({4.0, 4.0, 0.85}, 0.6, 0.6, 1.7, 0.4, 2));
    spec.scene.objects.push_back(
        OrientedBox3D({2.0, 6.0, 0.8}, 1.8, 0.6, 1.6, -0.7, 3));
    spec.vehicle_rig.lidar_pose = Pose::from_yaw(0.0, {4.0, 0.2, 1.0});
    spec.vehicle_rig.camera_pose = Pose::look_at({4.0, 0.2, 1.0}, {4.0, 4.0, 0.5});
    spec.vehicle_rig.intrinsics = CameraIntrinsics(6.0, 6.0, 4.0, 3.0, 8, 6);
    spec.infra_rig.lidar_pose = Pose::from_yaw(0.0, {7.5, 7.5, 3.0});
    spec.infra_rig.camera_pose = Pose::look_at({7.5, 7.5, 3.0}, {4.0, 4.0, 0.0});
    spec.infra_rig.intrinsics = CameraIntrinsics(6.0, 6.0, 4.0, 3.0, 8, 6);
    spec.rays_per_object = 40;
    spec.lidar_noise_sigma = 0.01;
    spec.camera_feature_noise = 0.02;
    spec.depth_min = 0.5;

    SensorData data = simulate_sensors(spec);
    Model model(hc.c_bev, hc.c_out, kNumClasses + 1, hc.depth_bin_count,
                hc.policy());
    model.init(17);
    // Freshly initialized biases are exactly zero, which parks the
    // pre-activations of empty BEV cells exactly on the relu kink: central
    // differences see half a slope there while the backward pass uses the
    // zero subgradient. Jitter every parameter so the comparison runs at a
    // point where the loss is differentiable.
    Rng jitter(91);
    for (auto& view : model.params()) {
        for (float& v : *view.data) {
            v += static_cast<float>(jitter.uniform(-0.3, 0.3));
        }
    }
    const ScenarioConfig cfg = ScenarioConfig::from_token("lc+lc");

    auto loss_fn = [&]() {
        ForwardCache cache;
        pipeline_forward(data, spec, cfg, model, false, &cache);
        TargetGrid targets = build_targets(spec.scene, spec.grid, cache.s_out);
        return detection_loss(cache.class_logits, cache.box_reg, targets,
                              hc.focal_gamma, hc.lambda_box, nullptr, nullptr)
            .total;
    };

    ForwardCache cache;
    pipeline_forward(data, spec, cfg, model, false, &cache);
    TargetGrid targets = build_targets(spec.scene, spec.grid, cache.s_out);
    Tensor4 g_logits, g_box;
    detection_loss(cache.class_logits, cache.box_reg, targets, hc.focal_gamma,
                   hc.lambda_box, &g_logits, &g_box);
    GradMap grads = pipeline_backward(model, cache, g_logits, g_box);

    int checked = 0;
    for (auto& view : model.params()) {
        if (grads.count(view.name) != 1 ||
            grads.at(view.name).size() != view.data->size()) {
            c.expect(false, "missing gradient entry for " + view.name);
            return;
        }
        const std::vector<float>& g = grads.at(view.name);
        for (std::size_t i = 0; i < view.data->size() && c.ok; ++i) {
            c.expect(grad_matches_loose(g[i], (*view.data)[i], loss_fn),
                     "pipeline gradient mismatch in " + view.name + "[" +
                         std::to_string(i) + "]");
            ++checked;
        }
    }
    c.expect(checked > 200, "parameter registry suspiciously small");
}

// --- criterion 3 ------------------------------------------------------------

void criterion_degeneracy(Check& c) {
    Rng rng(3001);
    for (const auto& cfg : scenario_registry()) {
        HafParams p(4);
        randomize_haf(rng, p);
        Tensor4 f_v = random_tensor(rng, 1, 4, 8, 8);
        Tensor4 f_i = random_tensor(rng, 1, 4, 8, 8);

        // All divisors 1: the scale-aware wrapper reduces to single-scale
        // fusion bit for bit.
        FusedResult asr =
            asr_fuse(f_v, f_i, cfg.vehicle, cfg.infra, p, AsrPolicy(1, 1, 1));
        FusedResult haf = haf_fuse(f_v, f_i, p);
        c.expect(testutil::bit_identical(asr.f_final, haf.f_final),
                 "unit divisors do not collapse to single-scale fusion (" +
                     cfg.token() + ")");

        // Saturated spatial attention: fusion reduces to the channel-wise
        // convex combination.
        force_unit_attention(p);
        FusedResult flat = haf_fuse(f_v, f_i, p);
        Tensor4 blended = channel_fuse(f_v, f_i, channel_attention(p));
        c.expect(testutil::bit_identical(flat.f_final, blended),
                 "saturated attention does not collapse to channel fusion (" +
                     cfg.token() + ")");

        // Saturated channel logits: the blend returns the vehicle features.
        std::fill(p.w_channel.begin(), p.w_channel.end(), 100.0f);
        Tensor4 vehicle_only = channel_fuse(f_v, f_i, channel_attention(p));
        c.expect(testutil::bit_identical(vehicle_only, f_v),
                 "saturated channel logits do not return the vehicle map (" +
                     cfg.token() + ")");
        if (!c.ok) return;
    }
}

// --- criterion 4 ------------------------------------------------------------

void criterion_node_shapes(Check& c) {
    Rng rng(4001);
    NodeFusionParams p(3, 5);
    randomize_conv(rng, p.fusion_conv);
    randomize_conv(rng, p.lidar_adapter);
    randomize_conv(rng, p.camera_adapter);
    const SensorSet sets[4] = {{false, false}, {true, false},
                               {false, true},  {true, true}};
    for (const auto& s : sets) {
        std::optional<Tensor4> f_cam, f_lidar;
        if (s.has_camera) f_cam = random_tensor(rng, 1, 3, 6, 6);
        if (s.has_lidar) f_lidar = random_tensor(rng, 1, 3, 6, 6);
        Tensor4 out = node_features(f_cam, f_lidar, s, p, 1, 6, 6);
        c.expect(out.b == 1 && out.c == 5 && out.h == 6 && out.w == 6,
                 "node feature shape wrong for sensor set '" + s.token() + "'");
    }
}

// --- criterion 5 ------------------------------------------------------------

void criterion_flops(Check& c) {
    const AsrPolicy policy(4, 2, 1);
    double sum = 0.0;
    int count = 0;
    for (const auto& cfg : scenario_registry()) {
        const FlopsReport r =
            estimate_fusion_flops(cfg, policy, 64, 64, 16, 16);
        c.expect(r.macs_without > 0.0, "zero baseline MAC count");
        if (cfg.vehicle.count() == 2 && cfg.infra.count() == 2) continue;
        sum += r.reduction;
        ++count;
    }
    c.expect(count == 8, "expected eight heterogeneous pairings");
    const double mean = sum / count;
    c.expect(mean >= 0.30 && mean <= 0.45,
             "mean heterogeneous MAC reduction " + std::to_string(mean) +
                 " outside [0.30, 0.45]");
}

// --- criterion 6 ------------------------------------------------------------

void criterion_training(Check& c) {
    HarnessConfig hc;  // full-size defaults
    std::vector<TrainSample> train_set, holdout;
    for (int i = 0; i < 200; ++i)
        train_set.push_back(prepare_sample(make_scenario(hc, hc.seed + i)));
    for (int i = 0; i < 50; ++i)
        holdout.push_back(
            prepare_sample(make_scenario(hc, hc.seed + 10000 + i)));

    Model model(hc);
    model.init(hc.seed);
    TrainState state(std::move(model));
    state.sample_seed = hc.seed;

    std::vector<StepRecord> log;
    train(state, train_set, hc, hc.epochs,
          static_cast<std::int64_t>(train_set.size()) * hc.epochs, &log);
    if (log.empty()) {
        c.expect(false, "empty training log");
        return;
    }

    double first_epoch_sum = 0.0;
    int first_epoch_n = 0;
    const int first_epoch = log.front().epoch;
    for (const auto& rec : log)
        if (rec.epoch == first_epoch) {
            first_epoch_sum += rec.loss;
            ++first_epoch_n;
        }
    const double first_epoch_mean = first_epoch_sum / first_epoch_n;
    const double val = validation_loss(state.model, holdout, hc);
    c.expect(val <= 0.7 * first_epoch_mean,
             "holdout loss " + std::to_string(val) +
                 " did not drop 30% below the first-epoch mean " +
                 std::to_string(first_epoch_mean));

    const double map_lclc =
        evaluate_config(state.model, holdout,
                        ScenarioConfig::from_token("lc+lc"), hc)
            .map;
    const double map_ll =
        evaluate_config(state.model, holdout, ScenarioConfig::from_token("l+l"),
                        hc)
            .map;
    const double map_cc =
        evaluate_config(state.model, holdout, ScenarioConfig::from_token("c+c"),
                        hc)
            .map;
    c.expect(map_lclc >= map_cc,
             "mAP(lc+lc)=" + std::to_string(map_lclc) + " < mAP(c+c)=" +
                 std::to_string(map_cc));
    c.expect(map_ll >= map_cc, "mAP(l+l)=" + std::to_string(map_ll) +
                                   " < mAP(c+c)=" + std::to_string(map_cc));
}

// --- criterion 7 ------------------------------------------------------------

bool point_in_rect2d(double px, double py, const OrientedBox3D& b) {
    const double dx = px - b.center.x, dy = py - b.center.y;
    const double cs = std::cos(b.yaw), sn = std::sin(b.yaw);
    const double lx = cs * dx + sn * dy;   // along length
    const double ly = -sn * dx + cs * dy;  // along width
    return std::abs(lx) <= b.length / 2 && std::abs(ly) <= b.width / 2;
}

double mc_iou_bev(const OrientedBox3D& a, const OrientedBox3D& b, Rng& rng,
                  int samples) {
    double x_lo = 1e300, x_hi = -1e300, y_lo = 1e300, y_hi = -1e300;
    for (const OrientedBox3D* box : {&a, &b}) {
        const double r = 0.5 * std::hypot(box->length, box->width);
        x_lo = std::min(x_lo, box->center.x - r);
        x_hi = std::max(x_hi, box->center.x + r);
        y_lo = std::min(y_lo, box->center.y - r);
        y_hi = std::max(y_hi, box->center.y + r);
    }
    long long n_int = 0, n_union = 0;
    for (int i = 0; i < samples; ++i) {
        const double px = rng.uniform(x_lo, x_hi);
        const double py = rng.uniform(y_lo, y_hi);
        const bool in_a = point_in_rect2d(px, py, a);
        const bool in_b = point_in_rect2d(px, py, b);
        if (in_a && in_b) ++n_int;
        if (in_a || in_b) ++n_union;
    }
    return n_union == 0 ? 0.0
                        : static_cast<double>(n_int) / n_union;
}

// Independent 40-point average precision: sort by score, greedily claim
// ground truths at or above the IoU threshold, then integrate the
// interpolated precision envelope.
double brute_force_ap(const std::vector<OrientedBox3D>& preds,
                      const std::vector<OrientedBox3D>& gts,
                      double iou_threshold, int class_id) {
    std::vector<const OrientedBox3D*> cls_preds;
    std::vector<const OrientedBox3D*> cls_gts;
    for (const auto& p : preds)
        if (p.class_id == class_id) cls_preds.push_back(&p);
    for (const auto& g : gts)
        if (g.class_id == class_id) cls_gts.push_back(&g);
    if (cls_gts.empty()) return 0.0;
    std::stable_sort(cls_preds.begin(), cls_preds.end(),
                     [](const OrientedBox3D* x, const OrientedBox3D* y) {
                         return x->score > y->score;
                     });
    std::vector<bool> claimed(cls_gts.size(), false);
    std::vector<bool> tp;
    for (const auto* p : cls_preds) {
        int best = -1;
        double best_iou = 0.0;
        for (std::size_t g = 0; g < cls_gts.size(); ++g) {
            if (claimed[g]) continue;
            const double v = eval::iou_bev(*p, *cls_gts[g]);
            if (v >= iou_threshold && v > best_iou) {
                best_iou = v;
                best = static_cast<int>(g);
            }
        }
        if (best >= 0) {
            claimed[best] = true;
            tp.push_back(true);
        } else {
            tp.push_back(false);
        }
    }
    std::vector<double> precision(tp.size()), recall(tp.size());
    int cum_tp = 0;
    for (std::size_t i = 0; i < tp.size(); ++i) {
        if (tp[i]) ++cum_tp;
        precision[i] = static_cast<double>(cum_tp) / (i + 1);
        recall[i] = static_cast<double>(cum_tp) / cls_gts.size();
    }
    double ap = 0.0;
    for (int k = 1; k <= 40; ++k) {
        const double r = static_cast<double>(k) / 40.0;
        double p_max = 0.0;
        for (std::size_t i = 0; i < tp.size(); ++i)
            if (recall[i] >= r) p_max = std::max(p_max, precision[i]);
        ap += p_max / 40.0;
    }
    return ap;
}

void criterion_eval(Check& c) {
    Rng rng(7001);

    // Rotated-footprint IoU against Monte-Carlo containment.
    for (int t = 0; t < 1000 && c.ok; ++t) {
        OrientedBox3D a({rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0), 0.0},
                        rng.uniform(1.0, 5.0), rng.uniform(1.0, 4.0), 1.5,
                        rng.uniform(-3.14, 3.14));
        OrientedBox3D b({a.center.x + rng.uniform(-2.0, 2.0),
                         a.center.y + rng.uniform(-2.0, 2.0), 0.0},
                        rng.uniform(1.0, 5.0), rng.uniform(1.0, 4.0), 1.5,
                        rng.uniform(-3.14, 3.14));
        const double exact = eval::iou_bev(a, b);
        const double mc = mc_iou_bev(a, b, rng, 200000);
        c.expect(std::abs(exact - mc) <= 0.01,
                 "footprint IoU deviates from Monte Carlo by " +
                     std::to_string(std::abs(exact - mc)));
    }

    // Average precision against the brute-force evaluator.
    for (int t = 0; t < 50 && c.ok; ++t) {
        std::vector<OrientedBox3D> gts, preds;
        const int n_gt = 5 + static_cast<int>(rng.uniform_index(8));
        for (int i = 0; i < n_gt; ++i)
            gts.push_back(OrientedBox3D(
                {rng.uniform(2.0, 30.0), rng.uniform(2.0, 30.0), 0.9},
                rng.uniform(1.5, 4.5), rng.uniform(1.0, 2.5), 1.7,
                rng.uniform(-3.0, 3.0), 0));
        const int n_pred = 5 + static_cast<int>(rng.uniform_index(11));
        for (int i = 0; i < n_pred; ++i) {
            const OrientedBox3D& base = gts[rng.uniform_index(gts.size())];
            preds.push_back(OrientedBox3D(
                {base.center.x + rng.uniform(-2.0, 2.0),
                 base.center.y + rng.uniform(-2.0, 2.0), 0.9},
                base.length * rng.uniform(0.7, 1.3),
                base.width * rng.uniform(0.7, 1.3), 1.7,
                base.yaw + rng.uniform(-0.5, 0.5), 0, rng.uniform()));
        }
        const double lib = eval::average_precision(preds, gts, 0.5, 0);
        const double ref = brute_force_ap(preds, gts, 0.5, 0);
        c.expect(std::abs(lib - ref) <= 1e-6,
                 "average precision deviates from brute force by " +
                     std::to_string(std::abs(lib - ref)));
    }

    // Perfect predictions give the exact perfect metric tuple.
    std::vector<OrientedBox3D> gts;
    gts.push_back(OrientedBox3D({8.0, 8.0, 0.9}, 4.0, 2.0, 1.6, 0.3, 0));
    gts.push_back(OrientedBox3D({20.0, 12.0, 0.9}, 3.5, 1.8, 1.6, -1.0, 1));
    eval::DetectionMetrics m = eval::metrics(gts, gts, 0.5);
    c.expect(m.precision && *m.precision == 1.0, "perfect precision not 1");
    c.expect(m.recall && *m.recall == 1.0, "perfect recall not 1");
    c.expect(m.mean_iou && std::abs(*m.mean_iou - 1.0) <= 1e-12,
             "perfect mean IoU not 1");
    c.expect(m.pos_rmse && *m.pos_rmse == 0.0, "perfect position RMSE not 0");
    c.expect(m.rot_rmse && *m.rot_rmse == 0.0, "perfect rotation RMSE not 0");
    c.expect(eval::mean_average_precision(gts, gts, 0.5) == 1.0,
             "perfect mAP not 1");
}

// --- criterion 8 ------------------------------------------------------------

void criterion_wire(Check& c) {
    Rng rng(8001);
    for (int t = 0; t < 10000 && c.ok; ++t) {
        Tensor4 f = random_tensor(
            rng, 1, 1 + static_cast<int>(rng.uniform_index(3)),
            1 + static_cast<int>(rng.uniform_index(6)),
            1 + static_cast<int>(rng.uniform_index(6)));
        MessageMeta meta;
        meta.node_id = static_cast<std::uint8_t>(rng.uniform_index(256));
        meta.sensors = SensorSet{rng.uniform() < 0.5, rng.uniform() < 0.5};
        meta.scale = static_cast<std::uint8_t>(1 + rng.uniform_index(4));
        meta.timestamp_us = rng.next_u64();
        DecodedMessage d = decode_message(encode_message(f, meta));
        c.expect(d.features.same_shape(f) && d.features.data == f.data &&
                     d.meta.node_id == meta.node_id &&
                     d.meta.sensors == meta.sensors &&
                     d.meta.scale == meta.scale &&
                     d.meta.timestamp_us == meta.timestamp_us,
                 "message round trip not bit-identical");
    }

    Tensor4 f(1, 2, 3, 3, 0.5f);
    MessageMeta meta;
    std::vector<std::uint8_t> good = encode_message(f, meta);
    bool magic_ok = false, version_ok = false, trunc_ok = false;
    {
        auto bad = good;
        bad[0] = 'X';
        try {
            decode_message(bad);
        } catch (const BadMagicError&) {
            magic_ok = true;
        } catch (...) {
        }
    }
    {
        auto bad = good;
        bad[4] = 0x09;
        try {
            decode_message(bad);
        } catch (const BadMagicError&) {
        } catch (const BadVersionError&) {
            version_ok = true;
        } catch (...) {
        }
    }
    {
        auto bad = good;
        bad.pop_back();
        try {
            decode_message(bad);
        } catch (const BadMagicError&) {
        } catch (const BadVersionError&) {
        } catch (const TruncatedError&) {
            trunc_ok = true;
        } catch (...) {
        }
    }
    c.expect(magic_ok, "corrupt magic did not raise its dedicated error");
    c.expect(version_ok, "corrupt version did not raise its dedicated error");
    c.expect(trunc_ok, "truncation did not raise its dedicated error");

    // Hand-assembled byte vector with a known payload.
    std::vector<std::uint8_t> bytes = {
        'H', 'C', 'F', 'M', 0x01, 0x00, 0x03, 0x03, 0x02, 0x00,
        0x01, 0x00, 0x00, 0x00, 0x01, 0x00, 0x00, 0x00,
        0x01, 0x00, 0x00, 0x00, 0x01, 0x00, 0x00, 0x00,
        0x08, 0x07, 0x06, 0x05, 0x04, 0x03, 0x02, 0x01,
        0x00, 0x00, 0x80, 0x3f,
    };
    DecodedMessage d = decode_message(bytes);
    c.expect(d.features.b == 1 && d.features.c == 1 && d.features.h == 1 &&
                 d.features.w == 1 && d.features.data[0] == 1.0f &&
                 d.meta.node_id == 3 && d.meta.sensors.has_lidar &&
                 d.meta.sensors.has_camera && d.meta.scale == 2 &&
                 d.meta.timestamp_us == 0x0102030405060708ull,
             "hand-assembled message decoded to the wrong value");
}

// --- criterion 9 ------------------------------------------------------------

int run_cli(const std::string& args) {
    const std::string cmd =
        std::string(HECOFUSE_CLI_PATH) + " " + args + " >/dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

// Byte-level directory comparison; the manifest's wall-clock timings are the
// one sanctioned difference.
bool dirs_identical(const fs::path& a, const fs::path& b, std::string* why) {
    std::map<std::string, std::string> fa, fb;
    for (const auto& e : fs::recursive_directory_iterator(a))
        if (e.is_regular_file() && e.path().filename() != "manifest.json")
            fa[fs::relative(e.path(), a).string()] = slurp(e.path());
    for (const auto& e : fs::recursive_directory_iterator(b))
        if (e.is_regular_file() && e.path().filename() != "manifest.json")
            fb[fs::relative(e.path(), b).string()] = slurp(e.path());
    if (fa.empty() || fa.size() != fb.size()) {
        *why = "file sets differ";
        return false;
    }
    for (const auto& [name, content] : fa) {
        auto it = fb.find(name);
        if (it == fb.end() || it->second != content) {
            *why = "file differs: " + name;
            return false;
        }
    }
    return true;
}

void criterion_cli(Check& c) {
    const fs::path root = fs::temp_directory_path() / "hecofuse_acceptance_cli";
    fs::remove_all(root);
    fs::create_directories(root);

    HarnessConfig hcfg;
    hcfg.x_min = 0.0;
    hcfg.x_max = 16.0;
    hcfg.y_min = 0.0;
    hcfg.y_max = 16.0;
    hcfg.cell_size = 1.0;
    hcfg.c_bev = 4;
    hcfg.c_out = 4;
    hcfg.depth_bin_count = 4;
    hcfg.min_objects = 2;
    hcfg.max_objects = 3;
    hcfg.rays_per_object = 40;
    hcfg.epochs = 2;
    hcfg.learning_rate = 1e-3;
    hcfg.vehicle_rig.lidar_pose = Pose::from_yaw(0.0, {8.0, 0.5, 1.8});
    hcfg.vehicle_rig.camera_pose =
        Pose::look_at({8.0, 0.5, 1.6}, {8.0, 8.0, 1.0});
    hcfg.vehicle_rig.intrinsics = CameraIntrinsics(12.0, 12.0, 8.0, 6.0, 16, 12);
    hcfg.infra_rig.lidar_pose = Pose::from_yaw(0.0, {15.0, 15.0, 5.0});
    hcfg.infra_rig.camera_pose =
        Pose::look_at({15.0, 15.0, 5.0}, {8.0, 8.0, 0.0});
    hcfg.infra_rig.intrinsics = CameraIntrinsics(12.0, 12.0, 8.0, 6.0, 16, 12);
    const std::string cfg = (root / "config.json").string();
    hcfg.save(cfg);

    std::string why;
    const fs::path gen_a = root / "gen_a", gen_b = root / "gen_b";
    c.expect(run_cli("gen --config " + cfg + " --seed 7 -n 3 --out " +
                     gen_a.string()) == 0,
             "scenario generation failed");
    c.expect(run_cli("gen --config " + cfg + " --seed 7 -n 3 --out " +
                     gen_b.string()) == 0,
             "scenario generation rerun failed");
    if (c.ok)
        c.expect(dirs_identical(gen_a, gen_b, &why),
                 "generation rerun not byte-identical: " + why);

    const fs::path tr_a = root / "train_a", tr_b = root / "train_b";
    c.expect(run_cli("train --config " + cfg + " --seed 7 --scenarios " +
                     gen_a.string() + " --out " + tr_a.string()) == 0,
             "training failed");
    c.expect(run_cli("train --config " + cfg + " --seed 7 --jobs 3 --scenarios " +
                     gen_a.string() + " --out " + tr_b.string()) == 0,
             "training rerun failed");
    if (c.ok)
        c.expect(dirs_identical(tr_a, tr_b, &why),
                 "training rerun not byte-identical: " + why);

    const fs::path ev_a = root / "eval_a", ev_b = root / "eval_b";
    c.expect(run_cli("eval --config " + cfg + " --model " +
                     (tr_a / "model.hcfz").string() + " --scenarios " +
                     gen_a.string() + " --configs all --out " +
                     ev_a.string()) == 0,
             "evaluation failed");
    c.expect(run_cli("eval --config " + cfg + " --model " +
                     (tr_a / "model.hcfz").string() + " --scenarios " +
                     gen_a.string() + " --configs all --jobs 4 --out " +
                     ev_b.string()) == 0,
             "evaluation rerun failed");
    if (c.ok)
        c.expect(dirs_identical(ev_a, ev_b, &why),
                 "evaluation rerun not byte-identical: " + why);

    fs::remove_all(root);
}

}  // namespace

int main(int argc, char** argv) {
    // Optional arguments select a subset of criteria by number.
    auto wants = [&](int n) {
        if (argc < 2) return true;
        for (int i = 1; i < argc; ++i) {
            if (std::atoi(argv[i]) == n) return true;
        }
        return false;
    };
    if (wants(1))
        run_criterion(1, "kernel oracle equivalence", 60.0, criterion_kernels);
    if (wants(2))
        run_criterion(2, "analytic gradients vs finite differences", 60.0,
                      criterion_gradients);
    if (wants(3))
        run_criterion(3, "fusion degeneracy chain", 0.0, criterion_degeneracy);
    if (wants(4))
        run_criterion(4, "node feature shape contract", 0.0,
                      criterion_node_shapes);
    if (wants(5))
        run_criterion(5, "fusion-stage compute reduction", 0.0,
                      criterion_flops);
    if (wants(6))
        run_criterion(6, "training improves the detector", 1800.0,
                      criterion_training);
    if (wants(7))
        run_criterion(7, "evaluation metrics vs oracles", 120.0,
                      criterion_eval);
    if (wants(8))
        run_criterion(8, "feature message integrity", 0.0, criterion_wire);
    if (wants(9))
        run_criterion(9, "command-line reproducibility", 0.0, criterion_cli);

    if (g_failures > 0) {
        std::printf("acceptance: %d criterion(s) failed\n", g_failures);
        return 1;
    }
    std::printf("acceptance: all criteria passed\n");
    return 0;
}
