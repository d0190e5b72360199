#include "hecofuse/encoders.hpp"

#include <algorithm>
#include <cmath>

namespace hecofuse {

DepthBins DepthBins::uniform(double d_min, double d_max, int count) {
    if (count < 2 || d_min <= 0.0 || d_max <= d_min) {
        throw ConfigError("DepthBins: need count >= 2 and 0 < d_min < d_max");
    }
    DepthBins bins;
    bins.centers.resize(count);
    const double step = (d_max - d_min) / (count - 1);
    for (int i = 0; i < count; ++i) bins.centers[i] = d_min + i * step;
    return bins;
}

LidarEncoderParams::LidarEncoderParams(int c_bev)
    : conv1(c_bev, kPillarChannels, 3, 3, 1, 1), conv2(c_bev, c_bev, 3, 3, 1, 1) {}

CameraEncoderParams::CameraEncoderParams(int image_channels, int depth_bins,
                                         int c_bev)
    : depth_head(depth_bins, image_channels, 1, 1),
      out_conv(c_bev, image_channels, 1, 1) {}

PillarGrid voxelize(const PointCloud& pc, const BevGridSpec& grid) {
    PillarGrid pg;
    pg.features = Tensor4(1, kPillarChannels, grid.rows, grid.cols);
    pg.occupancy.assign(static_cast<std::size_t>(grid.rows) * grid.cols, 0);
    std::vector<int> counts(pg.occupancy.size(), 0);
    // First pass: sums.
    for (const auto& p : pc.points) {
        const auto cell = world_to_bev_cell({p.x, p.y, p.z}, grid);
        if (!cell) continue;
        const auto [row, col] = *cell;
        pg.features.at(0, 0, row, col) +=
            static_cast<float>(p.x - grid.cell_center_x(col));
        pg.features.at(0, 1, row, col) +=
            static_cast<float>(p.y - grid.cell_center_y(row));
        pg.features.at(0, 2, row, col) += static_cast<float>(p.z);
        pg.features.at(0, 3, row, col) += static_cast<float>(p.intensity);
        counts[static_cast<std::size_t>(row) * grid.cols + col] += 1;
    }
    for (int row = 0; row < grid.rows; ++row) {
        for (int col = 0; col < grid.cols; ++col) {
            const std::size_t idx =
                static_cast<std::size_t>(row) * grid.cols + col;
            const int n = counts[idx];
            if (n == 0) continue;
            pg.occupancy[idx] = 1;
            for (int c = 0; c < 4; ++c) {
                pg.features.at(0, c, row, col) /= static_cast<float>(n);
            }
            pg.features.at(0, 4, row, col) =
                static_cast<float>(std::log1p(static_cast<double>(n)));
        }
    }
    return pg;
}

Tensor4 lidar_bev_encode(const PillarGrid& pg, const LidarEncoderParams& p,
                         LidarEncodeCache* cache) {
    Tensor4 pre = conv2d(pg.features, p.conv1);
    Tensor4 hidden = relu(pre);
    Tensor4 out = conv2d(hidden, p.conv2);
    if (cache) {
        cache->input = pg.features;
        cache->pre_act = std::move(pre);
        cache->hidden = std::move(hidden);
    }
    return out;
}

LidarEncoderGrads lidar_bev_encode_backward(const LidarEncoderParams& p,
                                            const LidarEncodeCache& cache,
                                            const Tensor4& g_out) {
    LidarEncoderGrads g;
    ConvGrads g2 = conv2d_backward(cache.hidden, p.conv2, g_out);
    Tensor4 g_pre = relu_backward(cache.pre_act, g2.gx);
    ConvGrads g1 = conv2d_backward(cache.input, p.conv1, g_pre);
    g.g_conv1_kernel = std::move(g1.g_kernel);
    g.g_conv1_bias = std::move(g1.g_bias);
    g.g_conv2_kernel = std::move(g2.g_kernel);
    g.g_conv2_bias = std::move(g2.g_bias);
    return g;
}

int lift_cell_index(int u, int v, int bin, const CameraIntrinsics& K,
                    const Pose& cam_pose, const DepthBins& bins,
                    const BevGridSpec& grid) {
    const Vec3 world = pixel_depth_to_world(u + 0.5, v + 0.5,
                                            bins.centers[bin], K, cam_pose);
    const auto cell = world_to_bev_cell(world, grid);
    if (!cell) return -1;
    return cell->first * grid.cols + cell->second;
}

Tensor4 camera_bev_encode(const SyntheticImage& img, const CameraIntrinsics& K,
                          const Pose& cam_pose, const DepthBins& bins,
                          const CameraEncoderParams& p, const BevGridSpec& grid,
                          CameraEncodeCache* cache, Tensor4* raw_sums) {
    const int n_bins = static_cast<int>(bins.centers.size());
    const int c_img = img.features.c;
    Tensor4 logits = conv2d(img.features, p.depth_head);
    Tensor4 probs = softmax_channels(logits);

    // Geometry of the lift is parameter-independent; one lookup per
    // (pixel, bin).
    std::vector<int> cell_of(static_cast<std::size_t>(img.height) * img.width *
                             n_bins);
    Tensor4 sums(1, c_img, grid.rows, grid.cols);
    std::vector<int> counts(static_cast<std::size_t>(grid.rows) * grid.cols, 0);
    for (int v = 0; v < img.height; ++v) {
        for (int u = 0; u < img.width; ++u) {
            for (int k = 0; k < n_bins; ++k) {
                const int cell = lift_cell_index(u, v, k, K, cam_pose, bins, grid);
                cell_of[(static_cast<std::size_t>(v) * img.width + u) * n_bins +
                        k] = cell;
                if (cell < 0) continue;
                counts[cell] += 1;
                const int row = cell / grid.cols, col = cell % grid.cols;
                const float prob = probs.at(0, k, v, u);
                for (int c = 0; c < c_img; ++c) {
                    sums.at(0, c, row, col) += prob * img.features.at(0, c, v, u);
                }
            }
        }
    }
    if (raw_sums) *raw_sums = sums;

    Tensor4 normalized = sums;
    for (int row = 0; row < grid.rows; ++row) {
        for (int col = 0; col < grid.cols; ++col) {
            const int n = counts[static_cast<std::size_t>(row) * grid.cols + col];
            if (n <= 1) continue;
            for (int c = 0; c < c_img; ++c) {
                normalized.at(0, c, row, col) /= static_cast<float>(n);
            }
        }
    }
    Tensor4 out = conv2d(normalized, p.out_conv);
    if (cache) {
        cache->image_features = img.features;
        cache->depth_probs = std::move(probs);
        cache->normalized = std::move(normalized);
        cache->counts = std::move(counts);
        cache->cell_of = std::move(cell_of);
        cache->bins = n_bins;
    }
    return out;
}

CameraEncoderGrads camera_bev_encode_backward(const CameraEncoderParams& p,
                                              const CameraEncodeCache& cache,
                                              const Tensor4& g_out) {
    CameraEncoderGrads g;
    ConvGrads g_conv = conv2d_backward(cache.normalized, p.out_conv, g_out);
    g.g_out_conv_kernel = std::move(g_conv.g_kernel);
    g.g_out_conv_bias = std::move(g_conv.g_bias);

    // Undo the count normalization to get the gradient on the scatter sums.
    Tensor4 g_sums = g_conv.gx;
    const int cols = g_sums.w;
    for (int row = 0; row < g_sums.h; ++row) {
        for (int col = 0; col < cols; ++col) {
            const int n = cache.counts[static_cast<std::size_t>(row) * cols + col];
            if (n <= 1) continue;
            for (int c = 0; c < g_sums.c; ++c) {
                g_sums.at(0, c, row, col) /= static_cast<float>(n);
            }
        }
    }

    const Tensor4& feat = cache.image_features;
    const int img_h = feat.h, img_w = feat.w, c_img = feat.c;
    Tensor4 g_probs(1, cache.bins, img_h, img_w);
    for (int v = 0; v < img_h; ++v) {
        for (int u = 0; u < img_w; ++u) {
            for (int k = 0; k < cache.bins; ++k) {
                const int cell =
                    cache.cell_of[(static_cast<std::size_t>(v) * img_w + u) *
                                      cache.bins +
                                  k];
                if (cell < 0) continue;
                const int row = cell / cols, col = cell % cols;
                double acc = 0.0;
                for (int c = 0; c < c_img; ++c) {
                    acc += static_cast<double>(feat.at(0, c, v, u)) *
                           g_sums.at(0, c, row, col);
                }
                g_probs.at(0, k, v, u) = static_cast<float>(acc);
            }
        }
    }
    Tensor4 g_logits = softmax_channels_backward(cache.depth_probs, g_probs);
    ConvGrads g_head = conv2d_backward(feat, p.depth_head, g_logits);
    g.g_depth_head_kernel = std::move(g_head.g_kernel);
    g.g_depth_head_bias = std::move(g_head.g_bias);
    return g;
}

}  // namespace hecofuse
