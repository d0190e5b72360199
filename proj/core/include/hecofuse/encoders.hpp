#pragma once

#include <vector>

#include "hecofuse/geometry.hpp"
#include "hecofuse/scenegen.hpp"
#include "hecofuse/tensor.hpp"

namespace hecofuse {

// Per-cell pillar aggregate over the BEV grid.
// Channels: [mean x-offset from cell center, mean y-offset, mean z,
//            mean intensity, log(1 + point count)].
inline constexpr int kPillarChannels = 5;

struct PillarGrid {
    Tensor4 features;  // (1, kPillarChannels, rows, cols)
    std::vector<std::uint8_t> occupancy;  // rows * cols, 1 when any point fell in
};

// Strictly increasing depth-bin centers for the camera lift.
struct DepthBins {
    std::vector<double> centers;

    static DepthBins uniform(double d_min, double d_max, int count);
};

struct LidarEncoderParams {
    ConvParams conv1;  // c_bev x kPillarChannels x 3 x 3, padding 1
    ConvParams conv2;  // c_bev x c_bev x 3 x 3, padding 1

    explicit LidarEncoderParams(int c_bev);
};

struct CameraEncoderParams {
    ConvParams depth_head;  // bins x image channels x 1 x 1
    ConvParams out_conv;    // c_bev x image channels x 1 x 1

    CameraEncoderParams(int image_channels, int depth_bins, int c_bev);
};

// Input point cloud must already be in the grid (world) frame.
PillarGrid voxelize(const PointCloud& pc, const BevGridSpec& grid);

struct LidarEncodeCache {
    Tensor4 input;       // pillar features
    Tensor4 pre_act;     // conv1 output before relu
    Tensor4 hidden;      // relu(pre_act)
};

Tensor4 lidar_bev_encode(const PillarGrid& pg, const LidarEncoderParams& p,
                         LidarEncodeCache* cache = nullptr);

struct LidarEncoderGrads {
    std::vector<float> g_conv1_kernel, g_conv1_bias;
    std::vector<float> g_conv2_kernel, g_conv2_bias;
};

LidarEncoderGrads lidar_bev_encode_backward(const LidarEncoderParams& p,
                                            const LidarEncodeCache& cache,
                                            const Tensor4& g_out);

struct CameraEncodeCache {
    Tensor4 image_features;
    Tensor4 depth_probs;       // (1, bins, img_h, img_w)
    Tensor4 normalized;        // (1, image channels, rows, cols)
    std::vector<int> counts;   // rows * cols scatter contribution counts
    std::vector<int> cell_of;  // (pixel, bin) -> flat cell index or -1
    int bins = 0;
};

// BEV cell hit by pixel (u, v) lifted to depth bin k, or -1 when the lifted
// point falls outside the grid. Rays go through pixel centers.
int lift_cell_index(int u, int v, int bin, const CameraIntrinsics& K,
                    const Pose& cam_pose, const DepthBins& bins,
                    const BevGridSpec& grid);

// Depth-distribution lift: softmax depth head, probability-weighted scatter
// of pixel features into BEV cells, per-cell count normalization, 1x1 conv.
// If raw_sums is non-null it receives the pre-normalization scatter sums
// (used by the mass-conservation oracle).
Tensor4 camera_bev_encode(const SyntheticImage& img, const CameraIntrinsics& K,
                          const Pose& cam_pose, const DepthBins& bins,
                          const CameraEncoderParams& p, const BevGridSpec& grid,
                          CameraEncodeCache* cache = nullptr,
                          Tensor4* raw_sums = nullptr);

struct CameraEncoderGrads {
    std::vector<float> g_depth_head_kernel, g_depth_head_bias;
    std::vector<float> g_out_conv_kernel, g_out_conv_bias;
};

CameraEncoderGrads camera_bev_encode_backward(const CameraEncoderParams& p,
                                              const CameraEncodeCache& cache,
                                              const Tensor4& g_out);

}  // namespace hecofuse
