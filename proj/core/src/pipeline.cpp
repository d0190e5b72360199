#include "hecofuse/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "hecofuse/eval.hpp"
#include "hecofuse/rng.hpp"
#include "hecofuse/wire.hpp"

namespace hecofuse {

namespace {

constexpr std::uint64_t kVehicleLidarSalt = 0x9b05688c2b3e6c1full;
constexpr std::uint64_t kInfraLidarSalt = 0x1f83d9abfb41bd6bull;
constexpr std::uint64_t kVehicleCameraSalt = 0x5be0cd19137e2179ull;
constexpr std::uint64_t kInfraCameraSalt = 0x6a09e667f3bcc908ull;

DepthBins bins_for(const ScenarioSpec& spec, int count) {
    const double diag = std::hypot(spec.grid.x_max - spec.grid.x_min,
                                   spec.grid.y_max - spec.grid.y_min);
    return DepthBins::uniform(spec.depth_min, diag, count);
}

}  // namespace

SensorData simulate_sensors(const ScenarioSpec& spec) {
    SensorData data;
    {
        const PointCloud local = simulate_lidar(
            spec.scene, spec.vehicle_rig.lidar_pose, spec.rays_per_object,
            spec.lidar_noise_sigma, spec.seed ^ kVehicleLidarSalt);
        data.vehicle_pillars = voxelize(
            transform_cloud(local, spec.vehicle_rig.lidar_pose), spec.grid);
    }
    {
        const PointCloud local = simulate_lidar(
            spec.scene, spec.infra_rig.lidar_pose, spec.rays_per_object,
            spec.lidar_noise_sigma, spec.seed ^ kInfraLidarSalt);
        data.infra_pillars = voxelize(
            transform_cloud(local, spec.infra_rig.lidar_pose), spec.grid);
    }
    data.vehicle_image = simulate_camera(
        spec.scene, spec.vehicle_rig.intrinsics, spec.vehicle_rig.camera_pose,
        spec.seed ^ kVehicleCameraSalt, spec.camera_feature_noise);
    data.infra_image = simulate_camera(
        spec.scene, spec.infra_rig.intrinsics, spec.infra_rig.camera_pose,
        spec.seed ^ kInfraCameraSalt, spec.camera_feature_noise);
    return data;
}

TrainSample prepare_sample(const ScenarioSpec& spec) {
    return TrainSample{spec, simulate_sensors(spec)};
}

TargetGrid build_targets(const Scene& scene, const BevGridSpec& grid,
                         int s_out) {
    if (s_out < 1 || grid.rows % s_out != 0 || grid.cols % s_out != 0) {
        throw ConfigError("build_targets: grid not divisible by output scale");
    }
    TargetGrid t;
    t.s_out = s_out;
    t.rows = grid.rows / s_out;
    t.cols = grid.cols / s_out;
    t.class_id.assign(static_cast<std::size_t>(t.rows) * t.cols, kNumClasses);
    t.box.assign(static_cast<std::size_t>(t.rows) * t.cols,
                 {0.f, 0.f, 0.f, 0.f, 0.f, 0.f});
    const double cell = grid.cell_size * s_out;
    for (const auto& obj : scene.objects) {
        const int col = static_cast<int>((obj.center.x - grid.x_min) / cell);
        const int row = static_cast<int>((obj.center.y - grid.y_min) / cell);
        if (row < 0 || row >= t.rows || col < 0 || col >= t.cols) continue;
        const std::size_t idx = static_cast<std::size_t>(row) * t.cols + col;
        const double ccx = grid.x_min + (col + 0.5) * cell;
        const double ccy = grid.y_min + (row + 0.5) * cell;
        t.class_id[idx] = obj.class_id;
        t.box[idx] = {static_cast<float>(obj.center.x - ccx),
                      static_cast<float>(obj.center.y - ccy),
                      static_cast<float>(std::log(obj.length)),
                      static_cast<float>(std::log(obj.width)),
                      static_cast<float>(std::sin(obj.yaw)),
                      static_cast<float>(std::cos(obj.yaw))};
    }
    return t;
}

namespace {

// Encodes one node's raw captures into the pair of per-sensor BEV maps the
// intra-node fusion expects.
struct NodeEncode {
    std::optional<Tensor4> f_lidar, f_cam;
};

NodeEncode encode_node(const SensorSet& sensors, const PillarGrid& pillars,
                       const SyntheticImage& image, const NodeRig& rig,
                       const ScenarioSpec& spec, const Model& model,
                       std::optional<LidarEncodeCache>* lidar_cache,
                       std::optional<CameraEncodeCache>* camera_cache) {
    NodeEncode out;
    if (sensors.has_lidar) {
        if (lidar_cache) lidar_cache->emplace();
        out.f_lidar = lidar_bev_encode(
            pillars, model.lidar_enc,
            lidar_cache ? &lidar_cache->value() : nullptr);
    }
    if (sensors.has_camera) {
        if (camera_cache) camera_cache->emplace();
        out.f_cam = camera_bev_encode(
            image, rig.intrinsics, rig.camera_pose,
            bins_for(spec, model.depth_bin_count), model.camera_enc, spec.grid,
            camera_cache ? &camera_cache->value() : nullptr);
    }
    return out;
}

}  // namespace

FusedResult pipeline_forward(const SensorData& data, const ScenarioSpec& spec,
                             const ScenarioConfig& cfg, const Model& model,
                             bool wire_hop, ForwardCache* cache) {
    ForwardCache local;
    ForwardCache& cc = cache ? *cache : local;
    cc = ForwardCache{};
    cc.sensors_vehicle = cfg.vehicle;
    cc.sensors_infra = cfg.infra;

    const int rows = spec.grid.rows, cols = spec.grid.cols;
    const NodeEncode enc_v =
        encode_node(cfg.vehicle, data.vehicle_pillars, data.vehicle_image,
                    spec.vehicle_rig, spec, model, &cc.lidar_vehicle,
                    &cc.camera_vehicle);
    const NodeEncode enc_i =
        encode_node(cfg.infra, data.infra_pillars, data.infra_image,
                    spec.infra_rig, spec, model, &cc.lidar_infra,
                    &cc.camera_infra);

    Tensor4 node_v = node_features(enc_v.f_cam, enc_v.f_lidar, cfg.vehicle,
                                   model.node_fusion, 1, rows, cols,
                                   &cc.node_vehicle);
    Tensor4 node_i = node_features(enc_i.f_cam, enc_i.f_lidar, cfg.infra,
                                   model.node_fusion, 1, rows, cols,
                                   &cc.node_infra);

    if (wire_hop) {
        // The infrastructure feature map crosses the simulated link; the hop
        // must be semantics-free (bit-exact), which the round trip guarantees.
        MessageMeta meta;
        meta.node_id = 1;
        meta.sensors = cfg.infra;
        meta.scale = static_cast<std::uint8_t>(
            select_scale(cfg.infra, model.policy));
        const auto bytes = encode_message(node_i, meta);
        node_i = decode_message(bytes).features;
    }

    const AsrPolicy& policy = model.policy;
    FusedResult fused = asr_fuse(node_v, node_i, cfg.vehicle, cfg.infra,
                                 model.haf, policy, &cc.haf);
    cc.s_out = std::min(select_scale(cfg.vehicle, policy),
                        select_scale(cfg.infra, policy));
    cc.fused = fused.f_final;
    cc.class_logits = conv2d(cc.fused, model.head.class_conv);
    cc.class_probs = softmax_channels(cc.class_logits);
    cc.box_reg = conv2d(cc.fused, model.head.box_conv);
    cc.valid = true;
    return fused;
}

LossResult detection_loss(const Tensor4& class_logits, const Tensor4& box_reg,
                          const TargetGrid& targets, double focal_gamma,
                          double lambda_box, Tensor4* g_class_logits,
                          Tensor4* g_box_reg) {
    if (class_logits.h != targets.rows || class_logits.w != targets.cols ||
        box_reg.h != targets.rows || box_reg.w != targets.cols) {
        throw ShapeError("detection_loss: head outputs do not match targets");
    }
    if (class_logits.c != kNumClasses + 1 || box_reg.c != kBoxChannels) {
        throw ShapeError("detection_loss: unexpected head channel counts");
    }
    const int rows = targets.rows, cols = targets.cols;
    const double n_cells = static_cast<double>(rows) * cols;
    if (g_class_logits) *g_class_logits = Tensor4::zeros_like(class_logits);
    if (g_box_reg) *g_box_reg = Tensor4::zeros_like(box_reg);

    LossResult result;
    int n_pos = 0;
    for (int r = 0; r < rows; ++r) {
        for (int c = 0; c < cols; ++c) {
            if (targets.class_id[static_cast<std::size_t>(r) * cols + c] !=
                kNumClasses) {
                ++n_pos;
            }
        }
    }
    result.positives = n_pos;
    const double pos_norm = std::max(1, n_pos);

    double cls_acc = 0.0, box_acc = 0.0;
    std::vector<double> p(kNumClasses + 1);
    for (int r = 0; r < rows; ++r) {
        for (int c = 0; c < cols; ++c) {
            const std::size_t idx = static_cast<std::size_t>(r) * cols + c;
            const int t = targets.class_id[idx];
            // Stable softmax in double for the focal term.
            double zmax = -std::numeric_limits<double>::infinity();
            for (int k = 0; k <= kNumClasses; ++k) {
                zmax = std::max(zmax,
                                static_cast<double>(class_logits.at(0, k, r, c)));
            }
            double denom = 0.0;
            for (int k = 0; k <= kNumClasses; ++k) {
                p[k] = std::exp(class_logits.at(0, k, r, c) - zmax);
                denom += p[k];
            }
            for (int k = 0; k <= kNumClasses; ++k) p[k] /= denom;
            const double pt = std::max(p[t], 1e-12);
            const double one_m = 1.0 - pt;
            const double focal = std::pow(one_m, focal_gamma);
            cls_acc += -focal * std::log(pt);
            if (g_class_logits) {
                // d/dz_j of -(1-pt)^g log(pt)
                //   = [g*pt*(1-pt)^(g-1)*log(pt) - (1-pt)^g] * (d_jt - p_j)
                const double outer =
                    focal_gamma * pt *
                        std::pow(one_m, std::max(focal_gamma - 1.0, 0.0)) *
                        std::log(pt) -
                    focal;
                for (int k = 0; k <= kNumClasses; ++k) {
                    const double djt = (k == t) ? 1.0 : 0.0;
                    g_class_logits->at(0, k, r, c) +=
                        static_cast<float>(outer * (djt - p[k]) / n_cells);
                }
            }
            if (t != kNumClasses) {
                for (int k = 0; k < kBoxChannels; ++k) {
                    const double d = static_cast<double>(box_reg.at(0, k, r, c)) -
                                     targets.box[idx][k];
                    const double ad = std::abs(d);
                    box_acc += (ad < 1.0) ? 0.5 * d * d : ad - 0.5;
                    if (g_box_reg) {
                        g_box_reg->at(0, k, r, c) += static_cast<float>(
                            lambda_box * std::clamp(d, -1.0, 1.0) / pos_norm);
                    }
                }
            }
        }
    }
    result.cls = cls_acc / n_cells;
    result.box = box_acc / pos_norm;
    result.total = result.cls + lambda_box * result.box;
    return result;
}

namespace {

void grad_add(GradMap& m, const std::string& name,
              const std::vector<float>& g) {
    if (g.empty()) return;
    auto& acc = m[name];
    if (acc.empty()) {
        acc = g;
        return;
    }
    if (acc.size() != g.size()) {
        throw ContractError("gradient size mismatch for " + name);
    }
    for (std::size_t i = 0; i < g.size(); ++i) acc[i] += g[i];
}

void add_node_grads(GradMap& m, const NodeFusionGrads& g) {
    grad_add(m, "node_fusion.fusion_conv.kernel", g.g_fusion_kernel);
    grad_add(m, "node_fusion.fusion_conv.bias", g.g_fusion_bias);
    grad_add(m, "node_fusion.fusion_norm.gamma", g.g_fusion_gamma);
    grad_add(m, "node_fusion.fusion_norm.beta", g.g_fusion_beta);
    grad_add(m, "node_fusion.lidar_adapter.kernel", g.g_lidar_kernel);
    grad_add(m, "node_fusion.lidar_adapter.bias", g.g_lidar_bias);
    grad_add(m, "node_fusion.lidar_norm.gamma", g.g_lidar_gamma);
    grad_add(m, "node_fusion.lidar_norm.beta", g.g_lidar_beta);
    grad_add(m, "node_fusion.camera_adapter.kernel", g.g_camera_kernel);
    grad_add(m, "node_fusion.camera_adapter.bias", g.g_camera_bias);
    grad_add(m, "node_fusion.camera_norm.gamma", g.g_camera_gamma);
    grad_add(m, "node_fusion.camera_norm.beta", g.g_camera_beta);
}

}  // namespace

GradMap pipeline_backward(const Model& model, const ForwardCache& cache,
                          const Tensor4& g_class_logits,
                          const Tensor4& g_box_reg) {
    if (!cache.valid) {
        throw ContractError("pipeline_backward: no cached forward state");
    }
    GradMap grads;

    ConvGrads g_cls =
        conv2d_backward(cache.fused, model.head.class_conv, g_class_logits);
    ConvGrads g_box =
        conv2d_backward(cache.fused, model.head.box_conv, g_box_reg);
    grad_add(grads, "head.class_conv.kernel", g_cls.g_kernel);
    grad_add(grads, "head.class_conv.bias", g_cls.g_bias);
    grad_add(grads, "head.box_conv.kernel", g_box.g_kernel);
    grad_add(grads, "head.box_conv.bias", g_box.g_bias);
    const Tensor4 g_fused = add(g_cls.gx, g_box.gx);

    HafGrads hg = haf_backward(g_fused, model.haf, cache.haf);
    grad_add(grads, "haf.w_channel", hg.g_w_channel);
    grad_add(grads, "haf.vehicle_conv1.kernel", hg.g_vehicle_conv1_kernel);
    grad_add(grads, "haf.vehicle_conv1.bias", hg.g_vehicle_conv1_bias);
    grad_add(grads, "haf.vehicle_conv2.kernel", hg.g_vehicle_conv2_kernel);
    grad_add(grads, "haf.vehicle_conv2.bias", hg.g_vehicle_conv2_bias);
    grad_add(grads, "haf.infra_conv1.kernel", hg.g_infra_conv1_kernel);
    grad_add(grads, "haf.infra_conv1.bias", hg.g_infra_conv1_bias);
    grad_add(grads, "haf.infra_conv2.kernel", hg.g_infra_conv2_kernel);
    grad_add(grads, "haf.infra_conv2.bias", hg.g_infra_conv2_bias);

    const NodeFusionGrads nv = node_features_backward(
        model.node_fusion, cache.node_vehicle, hg.g_f_vehicle);
    const NodeFusionGrads ni = node_features_backward(
        model.node_fusion, cache.node_infra, hg.g_f_infra);
    add_node_grads(grads, nv);
    add_node_grads(grads, ni);

    auto encoder_back = [&](const NodeFusionGrads& ng,
                            const std::optional<LidarEncodeCache>& lc,
                            const std::optional<CameraEncodeCache>& camc) {
        if (ng.g_f_lidar) {
            if (!lc) {
                throw ContractError(
                    "pipeline_backward: lidar gradient without encoder cache");
            }
            const LidarEncoderGrads lg =
                lidar_bev_encode_backward(model.lidar_enc, *lc, *ng.g_f_lidar);
            grad_add(grads, "lidar_enc.conv1.kernel", lg.g_conv1_kernel);
            grad_add(grads, "lidar_enc.conv1.bias", lg.g_conv1_bias);
            grad_add(grads, "lidar_enc.conv2.kernel", lg.g_conv2_kernel);
            grad_add(grads, "lidar_enc.conv2.bias", lg.g_conv2_bias);
        }
        if (ng.g_f_cam) {
            if (!camc) {
                throw ContractError(
                    "pipeline_backward: camera gradient without encoder cache");
            }
            const CameraEncoderGrads cg = camera_bev_encode_backward(
                model.camera_enc, *camc, *ng.g_f_cam);
            grad_add(grads, "camera_enc.depth_head.kernel",
                     cg.g_depth_head_kernel);
            grad_add(grads, "camera_enc.depth_head.bias", cg.g_depth_head_bias);
            grad_add(grads, "camera_enc.out_conv.kernel", cg.g_out_conv_kernel);
            grad_add(grads, "camera_enc.out_conv.bias", cg.g_out_conv_bias);
        }
    };
    encoder_back(nv, cache.lidar_vehicle, cache.camera_vehicle);
    encoder_back(ni, cache.lidar_infra, cache.camera_infra);

    // Parameters on paths this configuration never exercised have an exact
    // zero gradient; emit it explicitly so the map always covers the full
    // parameter registry.
    for (const auto& view : const_cast<Model&>(model).params()) {
        auto& g = grads[view.name];
        if (g.empty()) g.assign(view.data->size(), 0.0f);
    }
    return grads;
}

std::vector<OrientedBox3D> decode_detections(const Tensor4& class_probs,
                                             const Tensor4& box_reg,
                                             const BevGridSpec& grid,
                                             int s_out, double min_score) {
    if (!(
            class_probs.b == 1 && box_reg.b == 1 &&
            class_probs.h == box_reg.h && class_probs.w == box_reg.w)) {
        throw ShapeError("decode_detections: head output mismatch");
    }
    const int rows = class_probs.h, cols = class_probs.w;
    const double cell = grid.cell_size * s_out;
    // Objectness per cell: best non-background probability, used for the
    // 3x3 local-max suppression.
    std::vector<double> objectness(static_cast<std::size_t>(rows) * cols, 0.0);
    for (int r = 0; r < rows; ++r) {
        for (int c = 0; c < cols; ++c) {
            double best = 0.0;
            for (int k = 0; k < kNumClasses; ++k) {
                best = std::max(best,
                                static_cast<double>(class_probs.at(0, k, r, c)));
            }
            objectness[static_cast<std::size_t>(r) * cols + c] = best;
        }
    }
    std::vector<OrientedBox3D> detections;
    for (int r = 0; r < rows; ++r) {
        for (int c = 0; c < cols; ++c) {
            int best_k = 0;
            double best_p = class_probs.at(0, 0, r, c);
            for (int k = 1; k <= kNumClasses; ++k) {
                const double pk = class_probs.at(0, k, r, c);
                if (pk > best_p) {
                    best_p = pk;
                    best_k = k;
                }
            }
            if (best_k == kNumClasses || best_p < min_score) continue;
            const double own =
                objectness[static_cast<std::size_t>(r) * cols + c];
            bool is_peak = true;
            for (int dr = -1; dr <= 1 && is_peak; ++dr) {
                for (int dc = -1; dc <= 1 && is_peak; ++dc) {
                    if (dr == 0 && dc == 0) continue;
                    const int nr = r + dr, nc = c + dc;
                    if (nr < 0 || nr >= rows || nc < 0 || nc >= cols) continue;
                    if (objectness[static_cast<std::size_t>(nr) * cols + nc] >
                        own) {
                        is_peak = false;
                    }
                }
            }
            if (!is_peak) continue;
            const double ccx = grid.x_min + (c + 0.5) * cell;
            const double ccy = grid.y_min + (r + 0.5) * cell;
            const double dx = box_reg.at(0, 0, r, c);
            const double dy = box_reg.at(0, 1, r, c);
            const double log_l =
                std::clamp<double>(box_reg.at(0, 2, r, c), -4.0, 4.0);
            const double log_w =
                std::clamp<double>(box_reg.at(0, 3, r, c), -4.0, 4.0);
            const double sy = box_reg.at(0, 4, r, c);
            const double cy2 = box_reg.at(0, 5, r, c);
            const double yaw = (sy == 0.0 && cy2 == 0.0)
                                   ? 0.0
                                   : std::atan2(sy, cy2);
            const ClassPrior& prior = class_prior(best_k);
            detections.emplace_back(
                Vec3{ccx + dx, ccy + dy, 0.5 * prior.height}, std::exp(log_l),
                std::exp(log_w), prior.height, normalize_yaw(yaw), best_k,
                best_p);
        }
    }
    return detections;
}

ScenarioOutcome run_scenario(const ScenarioSpec& spec, const SensorData& data,
                             const ScenarioConfig& cfg, const Model& model,
                             double min_score) {
    ForwardCache cache;
    FusedResult fused =
        pipeline_forward(data, spec, cfg, model, /*wire_hop=*/true, &cache);
    ScenarioOutcome outcome;
    outcome.detections = decode_detections(cache.class_probs, cache.box_reg,
                                           spec.grid, cache.s_out, min_score);
    outcome.fused = std::move(fused);
    return outcome;
}

void train(TrainState& state, const std::vector<TrainSample>& samples,
           const HarnessConfig& cfg, int epochs,
           std::int64_t total_steps_for_decay, std::vector<StepRecord>* log) {
    if (samples.empty() || epochs <= 0) return;
    // Rebuild the configuration-sampling stream at its stored position.
    Rng sampler(state.sample_seed);
    for (std::uint64_t i = 0; i < state.sample_draws; ++i) sampler.next_u64();

    auto views = state.model.params();
    for (int epoch = 0; epoch < epochs; ++epoch) {
        for (const auto& sample : samples) {
            const ScenarioConfig scfg = sample_config(sampler);
            ++state.sample_draws;

            ForwardCache cache;
            pipeline_forward(sample.data, sample.spec, scfg, state.model,
                             /*wire_hop=*/true, &cache);
            const TargetGrid targets =
                build_targets(sample.spec.scene, sample.spec.grid, cache.s_out);
            Tensor4 g_cls, g_box;
            const LossResult loss = detection_loss(
                cache.class_logits, cache.box_reg, targets, cfg.focal_gamma,
                cfg.lambda_box, &g_cls, &g_box);
            if (!std::isfinite(loss.total)) {
                throw TrainingError("train: non-finite loss", state.step);
            }
            const GradMap grads =
                pipeline_backward(state.model, cache, g_cls, g_box);

            double lr = cfg.learning_rate;
            if (total_steps_for_decay > 0) {
                const double t =
                    std::min<double>(state.step,
                                     total_steps_for_decay) /
                    static_cast<double>(total_steps_for_decay);
                lr *= 0.5 * (1.0 + std::cos(M_PI * t));
            }
            for (auto& view : views) {
                auto& vel = state.velocity[view.name];
                const auto it = grads.find(view.name);
                const std::vector<float>* g =
                    it != grads.end() ? &it->second : nullptr;
                for (std::size_t i = 0; i < view.data->size(); ++i) {
                    const double gi = g ? (*g)[i] : 0.0;
                    const double v =
                        cfg.momentum * vel[i] - lr * gi;
                    vel[i] = static_cast<float>(v);
                    (*view.data)[i] = static_cast<float>((*view.data)[i] + v);
                }
            }
            if (log) {
                log->push_back(
                    {state.step, epoch, scfg.token(), loss.total});
            }
            ++state.step;
        }
    }
}

double validation_loss(const Model& model,
                       const std::vector<TrainSample>& samples,
                       const HarnessConfig& cfg) {
    if (samples.empty()) return 0.0;
    const auto& registry = scenario_registry();
    double acc = 0.0;
    for (std::size_t i = 0; i < samples.size(); ++i) {
        const ScenarioConfig scfg = registry[i % registry.size()];
        ForwardCache cache;
        pipeline_forward(samples[i].data, samples[i].spec, scfg, model,
                         /*wire_hop=*/true, &cache);
        const TargetGrid targets =
            build_targets(samples[i].spec.scene, samples[i].spec.grid,
                          cache.s_out);
        acc += detection_loss(cache.class_logits, cache.box_reg, targets,
                              cfg.focal_gamma, cfg.lambda_box, nullptr, nullptr)
                   .total;
    }
    return acc / static_cast<double>(samples.size());
}

ConfigEval pool_config_eval(
    const ScenarioConfig& cfg,
    const std::vector<std::vector<OrientedBox3D>>& detections,
    const std::vector<TrainSample>& samples, const HarnessConfig& harness) {
    if (detections.size() != samples.size()) {
        throw ContractError("pool_config_eval: detections/sample count mismatch");
    }
    ConfigEval out;
    out.config_token = cfg.token();
    out.scenes = static_cast<int>(samples.size());
    std::size_t total_tp = 0, total_preds = 0, total_gts = 0;
    double iou_sum = 0.0, pos_sq = 0.0, rot_sq = 0.0;
    std::array<eval::ApPool, kNumClasses> pools;
    for (std::size_t si = 0; si < samples.size(); ++si) {
        const auto& dets = detections[si];
        const auto& gts = samples[si].spec.scene.objects;
        const eval::MatchResult m =
            eval::match(dets, gts, harness.iou_threshold);
        total_tp += m.pairs.size();
        total_preds += dets.size();
        total_gts += gts.size();
        for (const auto& pair : m.pairs) {
            const OrientedBox3D& p = dets[pair.pred_index];
            const OrientedBox3D& g = gts[pair.gt_index];
            iou_sum += eval::iou_3d(p, g);
            const Vec3 d = p.center - g.center;
            pos_sq += d.dot(d);
            const double dyaw = std::abs(normalize_yaw(p.yaw - g.yaw));
            const double wrapped = std::min(dyaw, 2.0 * M_PI - dyaw);
            rot_sq += wrapped * wrapped;
        }
        for (int k = 0; k < kNumClasses; ++k) {
            pools[static_cast<std::size_t>(k)].add_scene(
                dets, gts, harness.iou_threshold, k);
        }
    }
    if (total_preds > 0) {
        out.precision = static_cast<double>(total_tp) / total_preds;
    }
    if (total_gts > 0) {
        out.recall = static_cast<double>(total_tp) / total_gts;
    }
    if (total_tp > 0) {
        out.mean_iou = iou_sum / total_tp;
        out.pos_rmse = std::sqrt(pos_sq / total_tp);
        out.rot_rmse = std::sqrt(rot_sq / total_tp);
    }
    double ap_acc = 0.0;
    int ap_classes = 0;
    for (const auto& pool : pools) {
        if (pool.has_ground_truth()) {
            ap_acc += pool.ap();
            ++ap_classes;
        }
    }
    out.map = ap_classes > 0 ? ap_acc / ap_classes : 0.0;
    return out;
}

ConfigEval evaluate_config(const Model& model,
                           const std::vector<TrainSample>& samples,
                           const ScenarioConfig& cfg,
                           const HarnessConfig& harness) {
    std::vector<std::vector<OrientedBox3D>> detections;
    detections.reserve(samples.size());
    for (const auto& sample : samples) {
        detections.push_back(
            run_scenario(sample.spec, sample.data, cfg, model,
                         harness.min_score)
                .detections);
    }
    return pool_config_eval(cfg, detections, samples, harness);
}

FlopsReport estimate_fusion_flops(const ScenarioConfig& cfg,
                                  const AsrPolicy& policy, int rows, int cols,
                                  int c_bev, int c_out) {
    if (rows % policy.s_high != 0 || cols % policy.s_high != 0) {
        throw ConfigError("estimate_fusion_flops: grid not divisible by s_high");
    }
    const double hw = static_cast<double>(rows) * cols;
    const int half = std::max(c_out / 2, 1);

    // Spatial attention stack (conv1 + conv2, 3x3) on an H/s x W/s map.
    auto attention_macs = [&](int s) {
        const double shw = hw / (static_cast<double>(s) * s);
        return shw * half * c_out * 9.0 + shw * half * 9.0;
    };
    auto sigmoid_cost = [&](int s) {
        return 4.0 * hw / (static_cast<double>(s) * s);
    };
    // Intra-node fusion work; independent of the ASR scale because it runs
    // on the full-resolution grid before pooling.
    auto intra = [&](const SensorSet& s) {
        if (s.count() == 2) {
            return hw * c_out * (2.0 * c_bev) + 3.0 * c_out * hw;
        }
        if (s.count() == 1) {
            return hw * c_out * c_bev + 3.0 * c_out * hw;
        }
        return 0.0;
    };

    const double intra_total = intra(cfg.vehicle) + intra(cfg.infra);

    // Baseline: both attention stacks and the elementwise aggregation at
    // full resolution, no pooling or upsampling.
    const double baseline_fusion =
        2.0 * attention_macs(1) + 2.0 * sigmoid_cost(1) + 5.0 * c_out * hw;

    const int s_v = select_scale(cfg.vehicle, policy);
    const int s_i = select_scale(cfg.infra, policy);
    const int s_c = std::max(s_v, s_i);
    const int s_min = std::min(s_v, s_i);

    double with_fusion = 0.0;
    auto node_cost = [&](int s_n) {
        double acc = 0.0;
        if (s_n > 1) acc += c_out * hw;  // pool reads from full resolution
        acc += attention_macs(s_n) + sigmoid_cost(s_n);
        if (s_n < s_c) {
            // Meet: pool the finer node's features and attention map down to
            // the common grid.
            const double shw = hw / (static_cast<double>(s_n) * s_n);
            acc += c_out * shw + shw;
        }
        return acc;
    };
    with_fusion += node_cost(s_v) + node_cost(s_i);
    with_fusion += 5.0 * c_out * hw / (static_cast<double>(s_c) * s_c);
    if (s_c > s_min) {
        with_fusion +=
            4.0 * c_out * hw / (static_cast<double>(s_min) * s_min);
    }

    FlopsReport report;
    report.macs_with = intra_total + with_fusion;
    report.macs_without = intra_total + baseline_fusion;
    report.reduction = 1.0 - report.macs_with / report.macs_without;
    return report;
}

}  // namespace hecofuse
