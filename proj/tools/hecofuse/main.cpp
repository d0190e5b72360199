#include <atomic>
#include <chrono>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "hecofuse/model.hpp"
#include "hecofuse/pipeline.hpp"
#include "hecofuse/rng.hpp"
#include "hecofuse/scenario.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace hecofuse;

namespace {

constexpr const char* kArtifactVersion = "1.0.0";

// Shortest round-trip decimal formatting keeps every emitted table
// reproducible across runs.
std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.9g", v);
    return buf;
}

std::string fmt_opt(const std::optional<double>& v) {
    return v ? fmt(*v) : std::string();
}

struct StageTimer {
    std::map<std::string, double> timings_ms;

    template <typename F>
    auto stage(const std::string& name, F&& f) {
        const auto start = std::chrono::steady_clock::now();
        if constexpr (std::is_void_v<decltype(f())>) {
            f();
            timings_ms[name] =
                std::chrono::duration<double, std::milli>(
                    std::chrono::steady_clock::now() - start)
                    .count();
        } else {
            auto result = f();
            timings_ms[name] =
                std::chrono::duration<double, std::milli>(
                    std::chrono::steady_clock::now() - start)
                    .count();
            return result;
        }
    }
};

void write_text_file(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path.string());
    out << text;
    if (!out) throw IoError("write failure on " + path.string());
}

// Written atomically (tmp + rename) at the end of every command. Timings
// vary run to run; all data outputs are byte-deterministic.
void write_manifest(const fs::path& out_dir, const std::string& command,
                    const std::string& config_path, std::uint64_t seed,
                    const StageTimer& timer) {
    json j;
    j["command"] = command;
    j["config_path"] = config_path;
    j["seed"] = seed;
    j["artifact_version"] = kArtifactVersion;
    j["output_dir"] = out_dir.string();
    j["timings_ms"] = timer.timings_ms;
    const fs::path tmp = out_dir / ".manifest.json.tmp";
    write_text_file(tmp, j.dump(2) + "\n");
    fs::rename(tmp, out_dir / "manifest.json");
}

HarnessConfig load_config_or_default(const std::string& path) {
    if (path.empty()) return HarnessConfig{};
    return HarnessConfig::load(path);
}

void ensure_out_dir(const fs::path& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec || !fs::is_directory(dir)) {
        throw IoError("cannot create output directory: " + dir.string());
    }
}

std::vector<ScenarioSpec> load_scenario_dir(const fs::path& dir) {
    const fs::path index_path = dir / "index.json";
    std::ifstream in(index_path, std::ios::binary);
    if (!in) throw IoError("cannot open scenario index: " + index_path.string());
    json index;
    try {
        in >> index;
    } catch (const json::parse_error& e) {
        throw ConfigError(std::string("scenario index parse failure: ") +
                          e.what());
    }
    std::vector<ScenarioSpec> specs;
    for (const auto& entry : index.at("files")) {
        specs.push_back(
            load_scenario((dir / entry.at("file").get<std::string>()).string()));
    }
    return specs;
}

std::vector<TrainSample> prepare_samples(const std::vector<ScenarioSpec>& specs,
                                         int jobs) {
    std::vector<TrainSample> samples(specs.size());
    const int workers =
        std::max(1, std::min<int>(jobs, static_cast<int>(specs.size())));
    std::atomic<std::size_t> next{0};
    auto work = [&] {
        for (std::size_t i = next.fetch_add(1); i < specs.size();
             i = next.fetch_add(1)) {
            samples[i] = prepare_sample(specs[i]);
        }
    };
    if (workers == 1) {
        work();
    } else {
        std::vector<std::thread> pool;
        for (int t = 0; t < workers; ++t) pool.emplace_back(work);
        for (auto& th : pool) th.join();
    }
    return samples;
}

std::vector<ScenarioConfig> parse_config_tokens(const std::string& list) {
    std::vector<ScenarioConfig> configs;
    if (list.empty() || list == "all") {
        for (const auto& cfg : scenario_registry()) configs.push_back(cfg);
        return configs;
    }
    std::string remaining = list;
    while (!remaining.empty()) {
        const auto comma = remaining.find(',');
        const std::string token = remaining.substr(0, comma);
        remaining =
            (comma == std::string::npos) ? "" : remaining.substr(comma + 1);
        if (token.empty()) continue;
        try {
            configs.push_back(ScenarioConfig::from_token(token));
        } catch (const ConfigError&) {
            std::string valid;
            for (const auto& cfg : scenario_registry()) {
                if (!valid.empty()) valid += ", ";
                valid += cfg.token();
            }
            throw ConfigError("unknown configuration token '" + token +
                              "'; valid tokens: " + valid);
        }
    }
    if (configs.empty()) throw ConfigError("empty configuration list");
    return configs;
}

int cmd_gen(const std::string& config_path, std::optional<std::uint64_t> seed,
            const std::string& out, int count) {
    StageTimer timer;
    HarnessConfig cfg = load_config_or_default(config_path);
    if (seed) cfg.seed = *seed;
    const fs::path out_dir(out);
    ensure_out_dir(out_dir);

    json index;
    index["format"] = "hecofuse-scenario-index";
    index["seed"] = cfg.seed;
    json files = json::array();
    std::size_t total_objects = 0;
    timer.stage("generate", [&] {
        for (int i = 0; i < count; ++i) {
            const ScenarioSpec spec =
                make_scenario(cfg, cfg.seed + static_cast<std::uint64_t>(i));
            char name[32];
            std::snprintf(name, sizeof(name), "scenario_%04d.json", i);
            save_scenario(spec, (out_dir / name).string());
            files.push_back(
                {{"file", name}, {"objects", spec.scene.objects.size()}});
            total_objects += spec.scene.objects.size();
        }
    });
    index["files"] = files;
    index["total_objects"] = total_objects;
    write_text_file(out_dir / "index.json", index.dump(2) + "\n");
    write_manifest(out_dir, "gen", config_path, cfg.seed, timer);
    std::cout << "wrote " << count << " scenarios (" << total_objects
              << " objects) to " << out_dir.string() << "\n";
    return 0;
}

std::string loss_log_csv(const std::vector<StepRecord>& log) {
    std::string csv = "step,epoch,config,loss\n";
    for (const auto& rec : log) {
        csv += std::to_string(rec.step) + "," + std::to_string(rec.epoch) +
               "," + rec.config_token + "," + fmt(rec.loss) + "\n";
    }
    return csv;
}

int cmd_train(const std::string& config_path,
              std::optional<std::uint64_t> seed, const std::string& scenarios,
              const std::string& out, const std::string& resume,
              int epochs_override, int jobs) {
    StageTimer timer;
    HarnessConfig cfg = load_config_or_default(config_path);
    if (seed) cfg.seed = *seed;
    const int epochs = epochs_override > 0 ? epochs_override : cfg.epochs;
    const fs::path out_dir(out);
    ensure_out_dir(out_dir);

    const auto specs =
        timer.stage("load_scenarios", [&] { return load_scenario_dir(scenarios); });
    if (specs.empty()) throw ConfigError("no scenarios to train on");
    const auto samples = timer.stage(
        "simulate_sensors", [&] { return prepare_samples(specs, jobs); });

    TrainState state = [&] {
        if (!resume.empty()) return TrainState::load(resume);
        Model model(cfg);
        model.init(cfg.seed);
        TrainState fresh(std::move(model));
        fresh.sample_seed = cfg.seed;
        return fresh;
    }();

    const std::int64_t steps_per_epoch =
        static_cast<std::int64_t>(samples.size());
    const std::int64_t total_steps = steps_per_epoch * epochs;
    const int done_epochs = static_cast<int>(state.step / steps_per_epoch);
    const int remaining = std::max(0, epochs - done_epochs);

    std::vector<StepRecord> log;
    try {
        timer.stage("train", [&] {
            train(state, samples, cfg, remaining, total_steps, &log);
        });
    } catch (const TrainingError& e) {
        std::string csv = loss_log_csv(log);
        csv += std::to_string(e.step_index) + ",-,-,nan\n";
        write_text_file(out_dir / "loss_log.csv", csv);
        std::cerr << "error: " << e.what() << " at step " << e.step_index
                  << "\n";
        return 4;
    }
    state.save((out_dir / "model.hcfz").string());
    write_text_file(out_dir / "loss_log.csv", loss_log_csv(log));
    write_manifest(out_dir, "train", config_path, cfg.seed, timer);
    std::cout << "trained " << remaining << " epoch(s), " << log.size()
              << " step(s); checkpoint at "
              << (out_dir / "model.hcfz").string() << "\n";
    return 0;
}

int cmd_eval(const std::string& config_path,
             std::optional<std::uint64_t> seed, const std::string& model_path,
             const std::string& scenarios, const std::string& configs_list,
             int jobs, std::optional<double> iou_threshold,
             const std::string& out) {
    StageTimer timer;
    HarnessConfig cfg = load_config_or_default(config_path);
    if (seed) cfg.seed = *seed;
    if (iou_threshold) cfg.iou_threshold = *iou_threshold;
    const std::vector<ScenarioConfig> configs =
        parse_config_tokens(configs_list);
    const fs::path out_dir(out);
    ensure_out_dir(out_dir);

    TrainState state = TrainState::load(model_path);
    const auto specs =
        timer.stage("load_scenarios", [&] { return load_scenario_dir(scenarios); });
    if (specs.empty()) throw ConfigError("no scenarios to evaluate");
    const auto samples = timer.stage(
        "simulate_sensors", [&] { return prepare_samples(specs, jobs); });

    std::vector<ConfigEval> rows;
    timer.stage("evaluate", [&] {
        for (const auto& scfg : configs) {
            // Scenes run in parallel; results land in sample order so the
            // pooled row is independent of the worker count.
            std::vector<std::vector<OrientedBox3D>> detections(samples.size());
            const int workers = std::max(
                1, std::min<int>(jobs, static_cast<int>(samples.size())));
            std::atomic<std::size_t> next{0};
            auto work = [&] {
                for (std::size_t i = next.fetch_add(1); i < samples.size();
                     i = next.fetch_add(1)) {
                    detections[i] =
                        run_scenario(samples[i].spec, samples[i].data, scfg,
                                     state.model, cfg.min_score)
                            .detections;
                }
            };
            if (workers == 1) {
                work();
            } else {
                std::vector<std::thread> pool;
                for (int t = 0; t < workers; ++t) pool.emplace_back(work);
                for (auto& th : pool) th.join();
            }
            rows.push_back(pool_config_eval(scfg, detections, samples, cfg));
        }
    });

    std::string csv =
        "config,precision,recall,mean_iou,pos_rmse,rot_rmse,map,scenes\n";
    std::string long_csv = "config,metric,value\n";
    json jrows = json::array();
    for (const auto& row : rows) {
        csv += row.config_token + "," + fmt_opt(row.precision) + "," +
               fmt_opt(row.recall) + "," + fmt_opt(row.mean_iou) + "," +
               fmt_opt(row.pos_rmse) + "," + fmt_opt(row.rot_rmse) + "," +
               fmt(row.map) + "," + std::to_string(row.scenes) + "\n";
        json jr;
        jr["config"] = row.config_token;
        auto set = [&jr](const char* key, const std::optional<double>& v) {
            if (v) {
                jr[key] = *v;
            } else {
                jr[key] = nullptr;
            }
        };
        set("precision", row.precision);
        set("recall", row.recall);
        set("mean_iou", row.mean_iou);
        set("pos_rmse", row.pos_rmse);
        set("rot_rmse", row.rot_rmse);
        jr["map"] = row.map;
        jr["scenes"] = row.scenes;
        jrows.push_back(jr);
        auto add_long = [&](const char* metric,
                            const std::optional<double>& v) {
            long_csv += row.config_token + "," + metric + "," +
                        (v ? fmt(*v) : "") + "\n";
        };
        add_long("precision", row.precision);
        add_long("recall", row.recall);
        add_long("mean_iou", row.mean_iou);
        add_long("pos_rmse", row.pos_rmse);
        add_long("rot_rmse", row.rot_rmse);
        add_long("map", row.map);
    }
    write_text_file(out_dir / "metrics.csv", csv);
    write_text_file(out_dir / "metrics_long.csv", long_csv);
    json jout;
    jout["iou_threshold"] = cfg.iou_threshold;
    jout["rows"] = jrows;
    write_text_file(out_dir / "metrics.json", jout.dump(2) + "\n");
    write_manifest(out_dir, "eval", config_path, cfg.seed, timer);
    std::cout << csv;
    return 0;
}

int cmd_flops(const std::string& config_path, const std::string& out) {
    StageTimer timer;
    HarnessConfig cfg = load_config_or_default(config_path);
    const BevGridSpec grid = cfg.grid();
    const AsrPolicy policy = cfg.policy();

    std::string csv = "config,macs_with,macs_without,reduction\n";
    json jrows = json::array();
    double hetero_sum = 0.0;
    int hetero_count = 0;
    for (const auto& scfg : scenario_registry()) {
        const FlopsReport report = estimate_fusion_flops(
            scfg, policy, grid.rows, grid.cols, cfg.c_bev, cfg.c_out);
        csv += scfg.token() + "," + fmt(report.macs_with) + "," +
               fmt(report.macs_without) + "," + fmt(report.reduction) + "\n";
        jrows.push_back({{"config", scfg.token()},
                         {"macs_with", report.macs_with},
                         {"macs_without", report.macs_without},
                         {"reduction", report.reduction}});
        // All entries except the fully equipped LC+LC pairing count toward
        // the heterogeneous summary.
        if (!(scfg.vehicle.count() == 2 && scfg.infra.count() == 2)) {
            hetero_sum += report.reduction;
            ++hetero_count;
        }
    }
    const double hetero_mean =
        hetero_count > 0 ? hetero_sum / hetero_count : 0.0;
    std::cout << csv << "heterogeneous mean reduction: " << fmt(hetero_mean)
              << "\n";
    if (!out.empty()) {
        const fs::path out_dir(out);
        ensure_out_dir(out_dir);
        write_text_file(out_dir / "flops.csv", csv);
        json jout;
        jout["rows"] = jrows;
        jout["heterogeneous_mean_reduction"] = hetero_mean;
        write_text_file(out_dir / "flops.json", jout.dump(2) + "\n");
        write_manifest(out_dir, "flops", config_path, cfg.seed, timer);
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{
        "Cooperative BEV perception harness: scenario generation, training, "
        "evaluation, and compute reporting"};
    app.require_subcommand(1);

    std::string config_path, out_dir, scenarios_dir, model_path, resume_path;
    std::string configs_list = "all";
    std::optional<std::uint64_t> seed;
    std::optional<double> iou_threshold;
    int count = 10, jobs = 1, epochs_override = 0;

    auto* gen = app.add_subcommand("gen", "Generate synthetic scenario files");
    gen->add_option("--config", config_path, "Config file (JSON)");
    gen->add_option("--seed", seed, "Seed override");
    gen->add_option("--out", out_dir, "Output directory")->required();
    gen->add_option("-n,--count", count, "Number of scenarios");

    auto* train_cmd = app.add_subcommand("train", "Train a model checkpoint");
    train_cmd->add_option("--config", config_path, "Config file (JSON)");
    train_cmd->add_option("--seed", seed, "Seed override");
    train_cmd->add_option("--scenarios", scenarios_dir, "Scenario directory")
        ->required();
    train_cmd->add_option("--out", out_dir, "Output directory")->required();
    train_cmd->add_option("--resume", resume_path, "Checkpoint to resume from");
    train_cmd->add_option("--epochs", epochs_override,
                          "Epoch count override (0 = config value)");
    train_cmd->add_option("--jobs", jobs, "Sensor-simulation worker threads");

    auto* eval_cmd =
        app.add_subcommand("eval", "Evaluate a checkpoint across configurations");
    eval_cmd->add_option("--config", config_path, "Config file (JSON)");
    eval_cmd->add_option("--seed", seed, "Seed override");
    eval_cmd->add_option("--model", model_path, "Checkpoint path")->required();
    eval_cmd->add_option("--scenarios", scenarios_dir, "Scenario directory")
        ->required();
    eval_cmd->add_option("--configs", configs_list,
                         "Comma-separated configuration tokens, or 'all'");
    eval_cmd->add_option("--jobs", jobs, "Worker threads");
    eval_cmd->add_option("--iou-threshold", iou_threshold,
                         "Matching IoU threshold override");
    eval_cmd->add_option("--out", out_dir, "Output directory")->required();

    auto* flops_cmd =
        app.add_subcommand("flops", "Report fusion-stage compute reductions");
    flops_cmd->add_option("--config", config_path, "Config file (JSON)");
    flops_cmd->add_option("--out", out_dir, "Output directory (optional)");

    CLI11_PARSE(app, argc, argv);

    try {
        if (gen->parsed()) {
            return cmd_gen(config_path, seed, out_dir, count);
        }
        if (train_cmd->parsed()) {
            return cmd_train(config_path, seed, scenarios_dir, out_dir,
                             resume_path, epochs_override, jobs);
        }
        if (eval_cmd->parsed()) {
            return cmd_eval(config_path, seed, model_path, scenarios_dir,
                            configs_list, jobs, iou_threshold, out_dir);
        }
        if (flops_cmd->parsed()) {
            return cmd_flops(config_path, out_dir);
        }
    } catch (const IoError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    } catch (const DecodeError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    } catch (const TrainingError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 4;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 4;
    }
    return 0;
}
