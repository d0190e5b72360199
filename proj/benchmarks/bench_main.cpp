// Microbenchmarks for the hot kernels: convolution, the two fusion paths,
// the camera lift, and the wire codec.

#include <benchmark/benchmark.h>

#include "hecofuse/coop_fusion.hpp"
#include "hecofuse/encoders.hpp"
#include "hecofuse/rng.hpp"
#include "hecofuse/wire.hpp"

using namespace hecofuse;

namespace {

Tensor4 random_tensor(Rng& rng, int b, int c, int h, int w) {
    Tensor4 t(b, c, h, w);
    for (auto& v : t.data) v = static_cast<float>(rng.uniform(-1.0, 1.0));
    return t;
}

void randomize_conv(Rng& rng, ConvParams& p) {
    for (auto& v : p.kernel) v = static_cast<float>(rng.uniform(-0.5, 0.5));
    for (auto& v : p.bias) v = static_cast<float>(rng.uniform(-0.5, 0.5));
}

void bm_conv2d(benchmark::State& state) {
    Rng rng(1);
    const int c = static_cast<int>(state.range(0));
    ConvParams p(c, c, 3, 3, 1, 1);
    randomize_conv(rng, p);
    Tensor4 x = random_tensor(rng, 1, c, 64, 64);
    for (auto _ : state) {
        benchmark::DoNotOptimize(conv2d(x, p));
    }
}
BENCHMARK(bm_conv2d)->Arg(8)->Arg(16);

void bm_single_scale_fuse(benchmark::State& state) {
    Rng rng(2);
    HafParams p(16);
    for (auto& v : p.w_channel) v = static_cast<float>(rng.uniform(-1.0, 1.0));
    randomize_conv(rng, p.vehicle_conv1);
    randomize_conv(rng, p.vehicle_conv2);
    randomize_conv(rng, p.infra_conv1);
    randomize_conv(rng, p.infra_conv2);
    Tensor4 f_v = random_tensor(rng, 1, 16, 64, 64);
    Tensor4 f_i = random_tensor(rng, 1, 16, 64, 64);
    for (auto _ : state) {
        benchmark::DoNotOptimize(haf_fuse(f_v, f_i, p));
    }
}
BENCHMARK(bm_single_scale_fuse);

void bm_scale_aware_fuse(benchmark::State& state) {
    Rng rng(3);
    HafParams p(16);
    for (auto& v : p.w_channel) v = static_cast<float>(rng.uniform(-1.0, 1.0));
    randomize_conv(rng, p.vehicle_conv1);
    randomize_conv(rng, p.vehicle_conv2);
    randomize_conv(rng, p.infra_conv1);
    randomize_conv(rng, p.infra_conv2);
    Tensor4 f_v = random_tensor(rng, 1, 16, 64, 64);
    Tensor4 f_i = random_tensor(rng, 1, 16, 64, 64);
    const SensorSet lidar_only{true, false};
    const SensorSet camera_only{false, true};
    const AsrPolicy policy(4, 2, 1);
    for (auto _ : state) {
        benchmark::DoNotOptimize(
            asr_fuse(f_v, f_i, lidar_only, camera_only, p, policy));
    }
}
BENCHMARK(bm_scale_aware_fuse);

void bm_wire_round_trip(benchmark::State& state) {
    Rng rng(4);
    Tensor4 f = random_tensor(rng, 1, 16, 64, 64);
    MessageMeta meta;
    meta.node_id = 1;
    meta.sensors = SensorSet{true, true};
    meta.scale = 2;
    for (auto _ : state) {
        benchmark::DoNotOptimize(decode_message(encode_message(f, meta)));
    }
}
BENCHMARK(bm_wire_round_trip);

}  // namespace

BENCHMARK_MAIN();
