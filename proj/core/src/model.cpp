#include "hecofuse/model.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

#include "hecofuse/rng.hpp"
#include "hecofuse/scenegen.hpp"

namespace hecofuse {

HeadParams::HeadParams(int c_in)
    : class_conv(kNumClasses + 1, c_in, 1, 1),
      box_conv(kBoxChannels, c_in, 1, 1) {}

Model::Model(int c_bev_, int c_out_, int image_channels_, int depth_bin_count_,
             AsrPolicy policy_)
    : c_bev(c_bev_),
      c_out(c_out_),
      image_channels(image_channels_),
      depth_bin_count(depth_bin_count_),
      policy(policy_),
      lidar_enc(c_bev_),
      camera_enc(image_channels_, depth_bin_count_, c_bev_),
      node_fusion(c_bev_, c_out_),
      haf(c_out_),
      head(c_out_) {}

Model::Model(const HarnessConfig& cfg)
    : Model(cfg.c_bev, cfg.c_out, kNumClasses + 1, cfg.depth_bin_count,
            cfg.policy()) {}

namespace {

void init_conv(ConvParams& p, Rng& rng) {
    const double fan_in =
        static_cast<double>(p.c_in) * p.k_h * p.k_w;
    const double sigma = std::sqrt(2.0 / fan_in);
    for (auto& v : p.kernel) v = static_cast<float>(rng.normal(0.0, sigma));
    for (auto& v : p.bias) v = 0.0f;
}

}  // namespace

void Model::init(std::uint64_t seed) {
    Rng rng(seed ^ 0xa0761d6478bd642fULL);
    init_conv(lidar_enc.conv1, rng);
    init_conv(lidar_enc.conv2, rng);
    init_conv(camera_enc.depth_head, rng);
    init_conv(camera_enc.out_conv, rng);
    init_conv(node_fusion.fusion_conv, rng);
    init_conv(node_fusion.lidar_adapter, rng);
    init_conv(node_fusion.camera_adapter, rng);
    for (auto& v : haf.w_channel) v = 0.0f;  // alpha starts at 0.5
    init_conv(haf.vehicle_conv1, rng);
    init_conv(haf.vehicle_conv2, rng);
    init_conv(haf.infra_conv1, rng);
    init_conv(haf.infra_conv2, rng);
    init_conv(head.class_conv, rng);
    init_conv(head.box_conv, rng);
    // Bias the background logit up so the dense head starts near the true
    // class marginal (almost every cell is empty).
    head.class_conv.bias[kNumClasses] = 2.0f;
}

std::vector<ParamView> Model::params() {
    std::vector<ParamView> views;
    auto add_conv = [&](const std::string& name, ConvParams& p) {
        views.push_back({name + ".kernel", &p.kernel,
                         {p.c_out, p.c_in, p.k_h, p.k_w}});
        views.push_back({name + ".bias", &p.bias, {p.c_out}});
    };
    auto add_norm = [&](const std::string& name, NormParams& p) {
        const int c = static_cast<int>(p.gamma.size());
        views.push_back({name + ".gamma", &p.gamma, {c}});
        views.push_back({name + ".beta", &p.beta, {c}});
    };
    add_conv("lidar_enc.conv1", lidar_enc.conv1);
    add_conv("lidar_enc.conv2", lidar_enc.conv2);
    add_conv("camera_enc.depth_head", camera_enc.depth_head);
    add_conv("camera_enc.out_conv", camera_enc.out_conv);
    add_conv("node_fusion.fusion_conv", node_fusion.fusion_conv);
    add_norm("node_fusion.fusion_norm", node_fusion.fusion_norm);
    add_conv("node_fusion.lidar_adapter", node_fusion.lidar_adapter);
    add_norm("node_fusion.lidar_norm", node_fusion.lidar_norm);
    add_conv("node_fusion.camera_adapter", node_fusion.camera_adapter);
    add_norm("node_fusion.camera_norm", node_fusion.camera_norm);
    views.push_back(
        {"haf.w_channel", &haf.w_channel, {haf.channels()}});
    add_conv("haf.vehicle_conv1", haf.vehicle_conv1);
    add_conv("haf.vehicle_conv2", haf.vehicle_conv2);
    add_conv("haf.infra_conv1", haf.infra_conv1);
    add_conv("haf.infra_conv2", haf.infra_conv2);
    add_conv("head.class_conv", head.class_conv);
    add_conv("head.box_conv", head.box_conv);
    return views;
}

TrainState::TrainState(Model m) : model(std::move(m)) {
    for (const auto& view : model.params()) {
        velocity[view.name] = std::vector<float>(view.data->size(), 0.0f);
    }
}

namespace {

const std::uint8_t kCkptMagic[4] = {'H', 'C', 'F', 'Z'};

void put_u16(std::vector<std::uint8_t>& out, std::uint16_t v) {
    out.push_back(static_cast<std::uint8_t>(v & 0xff));
    out.push_back(static_cast<std::uint8_t>(v >> 8));
}

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) {
        out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    }
}

void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) {
        out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    }
}

void put_f32(std::vector<std::uint8_t>& out, float v) {
    std::uint32_t bits;
    std::memcpy(&bits, &v, 4);
    put_u32(out, bits);
}

// Cursor-style reader that throws TruncatedError past the end.
struct ByteReader {
    const std::vector<std::uint8_t>& bytes;
    std::size_t pos = 0;

    const std::uint8_t* take(std::size_t n) {
        if (pos + n > bytes.size()) {
            throw TruncatedError("checkpoint truncated at byte " +
                                 std::to_string(pos));
        }
        const std::uint8_t* p = bytes.data() + pos;
        pos += n;
        return p;
    }
    std::uint8_t u8() { return *take(1); }
    std::uint16_t u16() {
        const std::uint8_t* p = take(2);
        return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
    }
    std::uint32_t u32() {
        const std::uint8_t* p = take(4);
        return static_cast<std::uint32_t>(p[0]) |
               (static_cast<std::uint32_t>(p[1]) << 8) |
               (static_cast<std::uint32_t>(p[2]) << 16) |
               (static_cast<std::uint32_t>(p[3]) << 24);
    }
    std::uint64_t u64() {
        const std::uint8_t* p = take(8);
        std::uint64_t v = 0;
        for (int i = 7; i >= 0; --i) v = (v << 8) | p[i];
        return v;
    }
    float f32() {
        const std::uint32_t bits = u32();
        float v;
        std::memcpy(&v, &bits, 4);
        return v;
    }
};

}  // namespace

std::vector<std::uint8_t> TrainState::serialize() const {
    std::vector<std::uint8_t> out;
    out.insert(out.end(), kCkptMagic, kCkptMagic + 4);
    put_u16(out, kCheckpointVersion);
    put_u16(out, 0);  // reserved
    put_u32(out, static_cast<std::uint32_t>(model.c_bev));
    put_u32(out, static_cast<std::uint32_t>(model.c_out));
    put_u32(out, static_cast<std::uint32_t>(model.image_channels));
    put_u32(out, static_cast<std::uint32_t>(model.depth_bin_count));
    put_u32(out, static_cast<std::uint32_t>(model.policy.s_high));
    put_u32(out, static_cast<std::uint32_t>(model.policy.s_medium));
    put_u32(out, static_cast<std::uint32_t>(model.policy.s_low));
    put_u64(out, static_cast<std::uint64_t>(step));
    put_u64(out, sample_seed);
    put_u64(out, sample_draws);
    // params() is non-const only because it hands out mutable views.
    auto views = const_cast<Model&>(model).params();
    put_u32(out, static_cast<std::uint32_t>(views.size()));
    for (const auto& view : views) {
        put_u16(out, static_cast<std::uint16_t>(view.name.size()));
        out.insert(out.end(), view.name.begin(), view.name.end());
        out.push_back(static_cast<std::uint8_t>(view.shape.size()));
        std::size_t count = 1;
        for (int d : view.shape) {
            put_u32(out, static_cast<std::uint32_t>(d));
            count *= static_cast<std::size_t>(d);
        }
        if (count != view.data->size()) {
            throw ContractError("parameter " + view.name +
                                " shape/storage mismatch");
        }
        for (float v : *view.data) put_f32(out, v);
        const auto it = velocity.find(view.name);
        if (it == velocity.end() || it->second.size() != count) {
            throw ContractError("missing velocity buffer for " + view.name);
        }
        for (float v : it->second) put_f32(out, v);
    }
    return out;
}

TrainState TrainState::deserialize(const std::vector<std::uint8_t>& bytes) {
    ByteReader r{bytes};
    const std::uint8_t* magic = r.take(4);
    if (std::memcmp(magic, kCkptMagic, 4) != 0) {
        throw BadMagicError("checkpoint: bad magic");
    }
    const std::uint16_t version = r.u16();
    if (version != kCheckpointVersion) {
        throw BadVersionError("checkpoint: unsupported version " +
                              std::to_string(version));
    }
    r.u16();  // reserved
    const int c_bev = static_cast<int>(r.u32());
    const int c_out = static_cast<int>(r.u32());
    const int image_channels = static_cast<int>(r.u32());
    const int depth_bin_count = static_cast<int>(r.u32());
    const int s_high = static_cast<int>(r.u32());
    const int s_medium = static_cast<int>(r.u32());
    const int s_low = static_cast<int>(r.u32());
    TrainState state(Model(c_bev, c_out, image_channels, depth_bin_count,
                           AsrPolicy(s_high, s_medium, s_low)));
    state.step = static_cast<std::int64_t>(r.u64());
    state.sample_seed = r.u64();
    state.sample_draws = r.u64();
    const std::uint32_t block_count = r.u32();
    auto views = state.model.params();
    if (block_count != views.size()) {
        throw TruncatedError("checkpoint: expected " +
                             std::to_string(views.size()) + " blocks, found " +
                             std::to_string(block_count));
    }
    for (auto& view : views) {
        const std::uint16_t name_len = r.u16();
        const std::uint8_t* name_bytes = r.take(name_len);
        const std::string name(reinterpret_cast<const char*>(name_bytes),
                               name_len);
        if (name != view.name) {
            throw ConfigError("checkpoint: block '" + name +
                              "' does not match expected '" + view.name + "'");
        }
        const std::uint8_t ndim = r.u8();
        if (ndim != view.shape.size()) {
            throw ConfigError("checkpoint: block '" + name + "' rank mismatch");
        }
        std::size_t count = 1;
        for (std::size_t d = 0; d < ndim; ++d) {
            const std::uint32_t dim = r.u32();
            if (static_cast<int>(dim) != view.shape[d]) {
                throw ConfigError("checkpoint: block '" + name +
                                  "' shape mismatch");
            }
            count *= dim;
        }
        for (std::size_t i = 0; i < count; ++i) (*view.data)[i] = r.f32();
        auto& vel = state.velocity[view.name];
        for (std::size_t i = 0; i < count; ++i) vel[i] = r.f32();
    }
    if (r.pos != bytes.size()) {
        throw TruncatedError("checkpoint: " +
                             std::to_string(bytes.size() - r.pos) +
                             " trailing bytes");
    }
    return state;
}

void TrainState::save(const std::string& path) const {
    const auto bytes = serialize();
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write checkpoint: " + path);
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
}

TrainState TrainState::load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open checkpoint: " + path);
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                    std::istreambuf_iterator<char>());
    return deserialize(bytes);
}

}  // namespace hecofuse
