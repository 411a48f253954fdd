#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <json.hpp>
#include <string>
#include <vector>

#include "ban/checkpoint.hpp"
#include "ban/data.hpp"
#include "ban/model.hpp"
#include "ban/train.hpp"

// JSON run configuration and the end-to-end train/eval drivers.
namespace ban::run {

struct DataConfig {
    std::filesystem::path root;
    std::string layout = "standard";
    data::LabelMode label_mode = data::LabelMode::kIndex;
    data::AugmentConfig augment;
    double label_fraction = 1.0;
    int num_workers = 1;
};

struct RunConfig {
    ModelConfig model;
    std::filesystem::path encoder_checkpoint;  // empty: random frozen encoder
    DataConfig data;
    train::OptimConfig optim;
    train::ScheduleConfig schedule;
    int64_t batch_size = 8;
    int64_t eval_interval = 0;  // 0: evaluate once at the end
    int64_t log_interval = 10;
    train::InferConfig infer;
    uint64_t seed = 0;
    std::filesystem::path work_dir = "work";

    void validate() const;
};

// Missing keys keep their defaults; unknown keys raise ConfigError.
RunConfig parse_config(const nlohmann::json& j);
RunConfig load_config(const std::filesystem::path& path);
nlohmann::json to_json(const RunConfig& cfg);

using WarnFn = std::function<void(const std::string&)>;

// Builds the model; loads the encoder checkpoint when configured and reports
// keys it leaves unused through `warn`.
BanModel build_model(const RunConfig& cfg, const WarnFn& warn = {});

// Learnable weights only (the encoder comes from its own checkpoint).
void save_weights(const std::filesystem::path& path, const BanModel& model, const checkpoint::Metadata& meta = {});
void load_weights(const std::filesystem::path& path, const BanModel& model, const WarnFn& warn = {});

struct TrainSummary {
    std::vector<double> losses;
    std::string frozen_sha_before;
    std::string frozen_sha_after;
    int64_t best_iter = -1;
    double best_metric = -1.0;
    std::filesystem::path best_checkpoint;
    std::filesystem::path last_checkpoint;
};

struct TrainHooks {
    std::ostream* log = nullptr;
    bool trace_bridges = false;
    // Called after every optimizer step with (iter, loss).
    std::function<void(int64_t, double)> on_step;
};

// Full loop: seeded batch stream, poly schedule, AdamW with head group,
// periodic validation and best-checkpoint tracking (F1 of change for BCD,
// Score for SCD). Writes checkpoints under cfg.work_dir.
TrainSummary train_model(const RunConfig& cfg, BanModel& model, const TrainHooks& hooks = {});

// One line per bridge: attention entropy, max weight and injection norm.
std::string describe_bridges(const ForwardTrace& trace);

}  // namespace ban::run
