#include "ban/run.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <set>
#include <sstream>

#include "ban/error.hpp"

namespace ban::run {

using json = nlohmann::json;
namespace fs = std::filesystem;

namespace {

// Reads typed fields from one JSON object and rejects keys nobody asked for.
class Section {
public:
    Section(const json& j, std::string name) : name_(std::move(name)) {
        if (j.is_null()) return;
        if (!j.is_object()) throw ConfigError("config section '" + name_ + "' must be an object");
        j_ = &j;
    }

    template <typename T>
    void get(const char* key, T& out) {
        seen_.insert(key);
        if (!j_ || !j_->contains(key)) return;
        try {
            out = j_->at(key).get<T>();
        } catch (const json::exception&) {
            throw ConfigError(name_ + "." + key + " has the wrong type: " + j_->at(key).dump());
        }
    }

    const json& sub(const char* key) {
        static const json null;
        seen_.insert(key);
        if (!j_ || !j_->contains(key)) return null;
        return j_->at(key);
    }

    void finish() const {
        if (!j_) return;
        for (const auto& [key, _] : j_->items()) {
            if (!seen_.count(key)) throw ConfigError("unknown config key '" + name_ + "." + key + "'");
        }
    }

private:
    const json* j_ = nullptr;
    std::string name_;
    std::set<std::string> seen_;
};

std::string init_name(bridging::BridgeInit init) {
    return init == bridging::BridgeInit::kZero ? "zero" : "small_uniform";
}

bridging::BridgeInit parse_init(const std::string& name) {
    if (name == "zero") return bridging::BridgeInit::kZero;
    if (name == "small_uniform") return bridging::BridgeInit::kSmallUniform;
    throw ConfigError("unknown bridging.init '" + name + "' (expected small_uniform or zero)");
}

std::string label_mode_name(data::LabelMode m) { return m == data::LabelMode::kBinary255 ? "binary255" : "index"; }

fs::path resolve(const fs::path& base, const fs::path& p) {
    if (p.empty() || p.is_absolute()) return p;
    return base / p;
}

}  // namespace

void RunConfig::validate() const {
    model.vit.validate();
    model.bitab.validate();
    optim.validate();
    schedule.validate();
    data.augment.validate();
    if (batch_size < 1) throw ConfigError("optim.batch_size must be >= 1");
    if (eval_interval < 0) throw ConfigError("schedule.eval_interval must be >= 0");
    if (log_interval < 1) throw ConfigError("schedule.log_interval must be >= 1");
    if (!(data.label_fraction > 0.0 && data.label_fraction <= 1.0)) {
        throw ConfigError("data.label_fraction must lie in (0, 1]");
    }
    if (data.num_workers < 1) throw ConfigError("data.num_workers must be >= 1");
    if (model.aris_target < 0) throw ConfigError("aris.target must be >= 0");
    if (infer.window < 0 || infer.stride < 0) throw ConfigError("infer.window and infer.stride must be >= 0");
    if (infer.window > 0 && infer.stride > infer.window) throw ConfigError("infer.stride must not exceed infer.window");
}

RunConfig parse_config(const json& j) {
    if (!j.is_object()) throw ConfigError("config root must be an object");
    RunConfig cfg;
    Section root(j, "config");
    root.get("seed", cfg.seed);
    std::string work_dir = cfg.work_dir.string();
    root.get("work_dir", work_dir);
    cfg.work_dir = work_dir;

    auto& vit = cfg.model.vit;
    Section enc(root.sub("encoder"), "encoder");
    enc.get("patch_size", vit.patch_size);
    enc.get("embed_dim", vit.embed_dim);
    enc.get("depth", vit.depth);
    enc.get("num_heads", vit.num_heads);
    enc.get("ffn_ratio", vit.ffn_ratio);
    enc.get("pretrain_resolution", vit.pretrain_resolution);
    enc.get("use_class_token", vit.use_class_token);
    enc.get("in_channels", vit.in_channels);
    enc.get("ln_eps", vit.ln_eps);
    enc.get("seed", cfg.model.encoder_seed);
    std::string ckpt;
    enc.get("checkpoint", ckpt);
    cfg.encoder_checkpoint = ckpt;
    enc.finish();

    root.get("taps", cfg.model.taps);

    auto& bt = cfg.model.bitab;
    Section bitab(root.sub("bitab"), "bitab");
    bitab.get("stage_channels", bt.stage_channels);
    bitab.get("stage_strides", bt.stage_strides);
    std::string head = bitab::to_string(bt.head_kind);
    bitab.get("head", head);
    bt.head_kind = bitab::parse_head_kind(head);
    bitab.get("num_semantic_classes", bt.num_semantic_classes);
    bitab.get("head_channels", bt.head_channels);
    bitab.get("max_norm_groups", bt.max_norm_groups);
    bitab.finish();
    bt.in_channels = vit.in_channels;

    Section br(root.sub("bridging"), "bridging");
    br.get("enabled", cfg.model.bridging_enabled);
    std::string init = init_name(cfg.model.bridge_init);
    br.get("init", init);
    cfg.model.bridge_init = parse_init(init);
    std::string affinity = bridging::to_string(cfg.model.bridge_options.affinity);
    br.get("affinity", affinity);
    cfg.model.bridge_options.affinity = bridging::parse_affinity(affinity);
    br.get("ln_eps", cfg.model.bridge_options.ln_eps);
    br.finish();

    Section aris(root.sub("aris"), "aris");
    aris.get("enabled", cfg.model.aris_enabled);
    aris.get("target", cfg.model.aris_target);
    aris.finish();

    Section data(root.sub("data"), "data");
    std::string data_root;
    data.get("root", data_root);
    cfg.data.root = data_root;
    data.get("layout", cfg.data.layout);
    data::Layout::named(cfg.data.layout);
    std::string mode = label_mode_name(cfg.data.label_mode);
    data.get("label_mode", mode);
    cfg.data.label_mode = data::parse_label_mode(mode);
    data.get("crop_size", cfg.data.augment.crop_size);
    data.get("flip_prob", cfg.data.augment.flip_prob);
    auto& ph = cfg.data.augment.photometric;
    const json& pj = data.sub("photometric");
    if (pj.is_boolean()) {
        ph.enabled = pj.get<bool>();
    } else {
        Section p(pj, "data.photometric");
        p.get("enabled", ph.enabled);
        p.get("brightness_delta", ph.brightness_delta);
        p.get("contrast_low", ph.contrast_low);
        p.get("contrast_high", ph.contrast_high);
        p.get("saturation_low", ph.saturation_low);
        p.get("saturation_high", ph.saturation_high);
        p.get("hue_delta_degrees", ph.hue_delta_degrees);
        p.get("apply_prob", ph.apply_prob);
        p.finish();
    }
    data.get("label_fraction", cfg.data.label_fraction);
    data.get("num_workers", cfg.data.num_workers);
    data.finish();

    Section optim(root.sub("optim"), "optim");
    optim.get("base_lr", cfg.optim.base_lr);
    optim.get("head_lr_mult", cfg.optim.head_lr_mult);
    optim.get("beta1", cfg.optim.beta1);
    optim.get("beta2", cfg.optim.beta2);
    optim.get("eps", cfg.optim.eps);
    optim.get("weight_decay", cfg.optim.weight_decay);
    optim.get("batch_size", cfg.batch_size);
    optim.finish();

    Section sched(root.sub("schedule"), "schedule");
    sched.get("max_iters", cfg.schedule.max_iters);
    sched.get("power", cfg.schedule.power);
    sched.get("min_lr", cfg.schedule.min_lr);
    sched.get("eval_interval", cfg.eval_interval);
    sched.get("log_interval", cfg.log_interval);
    sched.finish();

    Section infer(root.sub("infer"), "infer");
    infer.get("window", cfg.infer.window);
    infer.get("stride", cfg.infer.stride);
    infer.finish();

    root.finish();
    cfg.validate();
    return cfg;
}

RunConfig load_config(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read config " + path.string());
    json j;
    try {
        j = json::parse(in, nullptr, true, true);
    } catch (const json::exception& e) {
        throw ConfigError(path.string() + ": " + e.what());
    }
    RunConfig cfg = parse_config(j);
    const fs::path base = path.parent_path();
    cfg.data.root = resolve(base, cfg.data.root);
    cfg.encoder_checkpoint = resolve(base, cfg.encoder_checkpoint);
    cfg.work_dir = resolve(base, cfg.work_dir);
    return cfg;
}

json to_json(const RunConfig& cfg) {
    const auto& vit = cfg.model.vit;
    const auto& bt = cfg.model.bitab;
    const auto& ph = cfg.data.augment.photometric;
    return {
        {"seed", cfg.seed},
        {"work_dir", cfg.work_dir.string()},
        {"encoder",
         {{"patch_size", vit.patch_size},
          {"embed_dim", vit.embed_dim},
          {"depth", vit.depth},
          {"num_heads", vit.num_heads},
          {"ffn_ratio", vit.ffn_ratio},
          {"pretrain_resolution", vit.pretrain_resolution},
          {"use_class_token", vit.use_class_token},
          {"in_channels", vit.in_channels},
          {"ln_eps", vit.ln_eps},
          {"seed", cfg.model.encoder_seed},
          {"checkpoint", cfg.encoder_checkpoint.string()}}},
        {"taps", cfg.model.taps},
        {"bitab",
         {{"stage_channels", bt.stage_channels},
          {"stage_strides", bt.stage_strides},
          {"head", bitab::to_string(bt.head_kind)},
          {"num_semantic_classes", bt.num_semantic_classes},
          {"head_channels", bt.head_channels},
          {"max_norm_groups", bt.max_norm_groups}}},
        {"bridging",
         {{"enabled", cfg.model.bridging_enabled},
          {"init", init_name(cfg.model.bridge_init)},
          {"affinity", bridging::to_string(cfg.model.bridge_options.affinity)},
          {"ln_eps", cfg.model.bridge_options.ln_eps}}},
        {"aris", {{"enabled", cfg.model.aris_enabled}, {"target", cfg.model.aris_target}}},
        {"data",
         {{"root", cfg.data.root.string()},
          {"layout", cfg.data.layout},
          {"label_mode", label_mode_name(cfg.data.label_mode)},
          {"crop_size", cfg.data.augment.crop_size},
          {"flip_prob", cfg.data.augment.flip_prob},
          {"photometric",
           {{"enabled", ph.enabled},
            {"brightness_delta", ph.brightness_delta},
            {"contrast_low", ph.contrast_low},
            {"contrast_high", ph.contrast_high},
            {"saturation_low", ph.saturation_low},
            {"saturation_high", ph.saturation_high},
            {"hue_delta_degrees", ph.hue_delta_degrees},
            {"apply_prob", ph.apply_prob}}},
          {"label_fraction", cfg.data.label_fraction},
          {"num_workers", cfg.data.num_workers}}},
        {"optim",
         {{"base_lr", cfg.optim.base_lr},
          {"head_lr_mult", cfg.optim.head_lr_mult},
          {"beta1", cfg.optim.beta1},
          {"beta2", cfg.optim.beta2},
          {"eps", cfg.optim.eps},
          {"weight_decay", cfg.optim.weight_decay},
          {"batch_size", cfg.batch_size}}},
        {"schedule",
         {{"max_iters", cfg.schedule.max_iters},
          {"power", cfg.schedule.power},
          {"min_lr", cfg.schedule.min_lr},
          {"eval_interval", cfg.eval_interval},
          {"log_interval", cfg.log_interval}}},
        {"infer", {{"window", cfg.infer.window}, {"stride", cfg.infer.stride}}},
    };
}

BanModel build_model(const RunConfig& cfg, const WarnFn& warn) {
    BanModel model = BanModel::create(cfg.model, cfg.seed);
    if (!cfg.encoder_checkpoint.empty()) {
        const auto tensors = checkpoint::load(cfg.encoder_checkpoint);
        const auto result = checkpoint::assign(tensors, model.frozen());
        if (warn) {
            for (const auto& key : result.unused_keys) warn("encoder checkpoint key '" + key + "' is not used");
        }
    }
    return model;
}

void save_weights(const fs::path& path, const BanModel& model, const checkpoint::Metadata& meta) {
    checkpoint::save(path, checkpoint::collect(model.learnable()), meta);
}

void load_weights(const fs::path& path, const BanModel& model, const WarnFn& warn) {
    const auto result = checkpoint::assign(checkpoint::load(path), model.learnable());
    if (warn) {
        for (const auto& key : result.unused_keys) warn("checkpoint key '" + key + "' is not used");
    }
}

std::string describe_bridges(const ForwardTrace& trace) {
    std::ostringstream os;
    os << std::setprecision(4);
    for (int phase = 0; phase < 2; ++phase) {
        for (size_t j = 0; j < trace.phase[phase].size(); ++j) {
            const auto& t = trace.phase[phase][j];
            const int64_t rows = t.attention.dim(0), cols = t.attention.dim(1);
            double entropy = 0.0, peak = 0.0;
            for (int64_t r = 0; r < rows; ++r) {
                for (int64_t c = 0; c < cols; ++c) {
                    const double a = t.attention[r * cols + c];
                    if (a > 0.0) entropy -= a * std::log(a);
                    peak = std::max(peak, a);
                }
            }
            double inj = 0.0;
            for (float v : t.x_cf.values()) inj += static_cast<double>(v) * v;
            os << "bridge t" << phase + 1 << "." << j + 1 << " fm " << t.fm_grid.height << "x" << t.fm_grid.width
               << " -> cm " << t.cm_grid.height << "x" << t.cm_grid.width << " entropy "
               << entropy / static_cast<double>(rows) << " max_attn " << peak << " |x_cf| " << std::sqrt(inj)
               << "\n";
        }
    }
    return os.str();
}

TrainSummary train_model(const RunConfig& cfg, BanModel& model, const TrainHooks& hooks) {
    cfg.validate();
    std::ostream* log = hooks.log;
    const auto layout = data::Layout::named(cfg.data.layout);
    const auto records = data::scan_dataset(cfg.data.root, layout);
    auto train_set = data::filter_split(records, data::Split::kTrain);
    const auto val_set = data::filter_split(records, data::Split::kVal);
    if (cfg.data.label_fraction < 1.0) {
        const size_t total = train_set.size();
        train_set = data::label_fraction_split(train_set, cfg.data.label_fraction, cfg.seed).first;
        if (log) *log << "label fraction " << cfg.data.label_fraction << ": " << train_set.size() << "/" << total
                      << " training pairs\n";
    }
    data::BatchStream stream(train_set, cfg.data.augment, cfg.data.label_mode, cfg.batch_size, cfg.seed,
                             cfg.data.num_workers);
    train::AdamW opt(train::make_param_groups(model, cfg.optim.head_lr_mult), cfg.optim);

    fs::create_directories(cfg.work_dir);
    TrainSummary summary;
    summary.frozen_sha_before = checkpoint::sha256_hex(model.frozen());
    summary.best_checkpoint = cfg.work_dir / "best.safetensors";
    summary.last_checkpoint = cfg.work_dir / "last.safetensors";
    const bool scd = model.bitab_spec.head_kind == bitab::HeadKind::kSemantic;

    auto validate_now = [&](int64_t iter) {
        const auto& set = val_set.empty() ? train_set : val_set;
        const auto report = metrics::make_report(train::evaluate(model, set, cfg.data.label_mode, cfg.infer), scd);
        const double metric = scd ? report.scd.score : report.bcd.f1_c;
        if (log) {
            *log << "eval iter " << iter << (val_set.empty() ? " (train split)" : " (val split)") << " "
                 << (scd ? "score " : "f1_c ") << std::fixed << std::setprecision(4) << metric
                 << std::defaultfloat << "\n";
        }
        if (metric > summary.best_metric) {
            summary.best_metric = metric;
            summary.best_iter = iter;
            save_weights(summary.best_checkpoint, model, {{"iter", std::to_string(iter)}});
        }
    };

    const auto start = std::chrono::steady_clock::now();
    for (int64_t iter = 0; iter < cfg.schedule.max_iters; ++iter) {
        const double lr =
            train::poly_lr(iter, cfg.schedule.max_iters, cfg.optim.base_lr, cfg.schedule.power, cfg.schedule.min_lr);
        const auto batch = stream.next();
        train::StepStats stats;
        try {
            stats = train::train_step(model, batch, opt, lr);
        } catch (const NumericError& e) {
            std::ofstream dump(cfg.work_dir / "diagnostics.txt");
            dump << "iter " << iter << "\nlr " << lr << "\n" << e.what() << "\n";
            throw NumericError("iter " + std::to_string(iter) + ": " + e.what() + " (dump in " +
                               (cfg.work_dir / "diagnostics.txt").string() + ")");
        }
        summary.losses.push_back(stats.loss);
        if (hooks.on_step) hooks.on_step(iter, stats.loss);
        const int64_t done = iter + 1;
        if (log && (done % cfg.log_interval == 0 || done == cfg.schedule.max_iters)) {
            const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
            *log << "iter " << done << "/" << cfg.schedule.max_iters << " loss " << std::setprecision(6)
                 << stats.loss << " lr " << lr << " elapsed " << std::setprecision(3) << secs << "s\n";
            if (hooks.trace_bridges && !model.bridges.empty()) {
                ForwardTrace trace;
                ban_forward(model, train::model_input(batch[0].t1), train::model_input(batch[0].t2), &trace);
                *log << describe_bridges(trace);
            }
        }
        if (cfg.eval_interval > 0 && done % cfg.eval_interval == 0 && done != cfg.schedule.max_iters) {
            validate_now(done);
        }
    }
    validate_now(cfg.schedule.max_iters);
    save_weights(summary.last_checkpoint, model, {{"iter", std::to_string(cfg.schedule.max_iters)}});
    summary.frozen_sha_after = checkpoint::sha256_hex(model.frozen());
    if (summary.frozen_sha_after != summary.frozen_sha_before) {
        throw Error("frozen encoder parameters changed during training");
    }
    return summary;
}

}  // namespace ban::run
