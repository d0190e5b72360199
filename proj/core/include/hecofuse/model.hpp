#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "hecofuse/config.hpp"
#include "hecofuse/coop_fusion.hpp"
#include "hecofuse/encoders.hpp"
#include "hecofuse/node_fusion.hpp"

namespace hecofuse {

// Dense per-cell detection head: class logits (object classes + background)
// and box regressors (dx, dy, log length, log width, sin yaw, cos yaw).
struct HeadParams {
    ConvParams class_conv;  // (classes + 1) x c_in x 1 x 1
    ConvParams box_conv;    // 6 x c_in x 1 x 1

    explicit HeadParams(int c_in);
};

inline constexpr int kBoxChannels = 6;

// Named mutable view over one parameter vector; the registry drives the
// optimizer, checkpointing, and the gradient-check suite uniformly.
struct ParamView {
    std::string name;
    std::vector<float>* data;
    std::vector<int> shape;
};

// All trainable parameters. Encoders and intra-node fusion are shared
// between the vehicle and infrastructure nodes; only the spatial-attention
// stacks are role-specific.
struct Model {
    int c_bev, c_out, image_channels, depth_bin_count;
    AsrPolicy policy;  // scale divisors baked into the trained network
    LidarEncoderParams lidar_enc;
    CameraEncoderParams camera_enc;
    NodeFusionParams node_fusion;
    HafParams haf;
    HeadParams head;

    Model(int c_bev_, int c_out_, int image_channels_, int depth_bin_count_,
          AsrPolicy policy_ = AsrPolicy{});
    explicit Model(const HarnessConfig& cfg);

    // Deterministic scaled-normal initialization.
    void init(std::uint64_t seed);

    std::vector<ParamView> params();
};

inline constexpr std::uint16_t kCheckpointVersion = 1;

// Model plus optimizer state; the unit of checkpointing.
struct TrainState {
    Model model;
    std::map<std::string, std::vector<float>> velocity;  // momentum buffers
    std::int64_t step = 0;
    // Configuration-sampling stream position, stored as (seed, draws) so a
    // resumed run continues the exact sequence.
    std::uint64_t sample_seed = 0;
    std::uint64_t sample_draws = 0;

    explicit TrainState(Model m);

    std::vector<std::uint8_t> serialize() const;
    static TrainState deserialize(const std::vector<std::uint8_t>& bytes);

    void save(const std::string& path) const;
    static TrainState load(const std::string& path);
};

}  // namespace hecofuse
