#include "ban/cli.hpp"

#include <CLI11.hpp>
#include <algorithm>
#include <fstream>
#include <iomanip>
#include <optional>
#include <ostream>

#include "ban/error.hpp"
#include "ban/image_io.hpp"
#include "ban/run.hpp"

namespace fs = std::filesystem;

namespace ban::cli {

namespace {

struct Globals {
    std::optional<uint64_t> seed;
    bool trace_bridges = false;
};

run::RunConfig config_with(const std::string& path, const Globals& g) {
    run::RunConfig cfg = run::load_config(path);
    if (g.seed) cfg.seed = *g.seed;
    return cfg;
}

void write_report(const metrics::MetricReport& report, std::ostream& out, const std::string& path) {
    out << report.to_key_values() << "\n" << report.to_table();
    if (!path.empty()) {
        std::ofstream f(path);
        if (!f) throw DataError("cannot write report " + path);
        f << report.to_key_values();
    }
}

std::vector<std::string> mask_names(const fs::path& dir) {
    if (!fs::is_directory(dir)) throw DataError("not a directory: " + dir.string());
    std::vector<std::string> names;
    for (const auto& e : fs::directory_iterator(dir)) {
        if (e.is_regular_file()) names.push_back(e.path().filename().string());
    }
    std::sort(names.begin(), names.end());
    if (names.empty()) throw DataError("no masks in " + dir.string());
    return names;
}

metrics::LabelMap read_label(const fs::path& p, data::LabelMode mode) {
    auto m = io::load_mask(p);
    if (mode == data::LabelMode::kBinary255) {
        for (auto& v : m.values) v = v != 0 ? 1 : 0;
    }
    return m;
}

metrics::MetricReport score_dirs(const fs::path& pred_dir, const fs::path& label_dir, bool scd, int classes,
                                 data::LabelMode mode) {
    if (!scd) {
        metrics::ConfusionCounts counts;
        for (const auto& name : mask_names(pred_dir)) {
            metrics::confusion_update(counts, read_label(pred_dir / name, mode), read_label(label_dir / name, mode));
        }
        return metrics::make_report(counts, false);
    }
    if (classes < 1) throw ConfigError("--scd needs --classes K");
    metrics::ConfusionCounts counts(classes);
    for (const auto& name : mask_names(pred_dir / "change")) {
        metrics::confusion_update(counts, read_label(pred_dir / "change" / name, mode),
                                  read_label(label_dir / "change" / name, mode));
        for (const char* phase : {"sem_t1", "sem_t2"}) {
            metrics::seg_confusion_update(counts, io::load_mask(pred_dir / phase / name),
                                          io::load_mask(label_dir / phase / name));
        }
    }
    return metrics::make_report(counts, true);
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Bi-temporal adapter network for change detection", "ban"};
    app.require_subcommand(1);
    Globals g;
    uint64_t seed_value = 0;
    auto* seed_opt = app.add_option("--seed", seed_value, "Override the run seed");
    app.add_flag("--trace-bridges", g.trace_bridges, "Log per-bridge attention statistics");

    auto warn = [&err](const std::string& msg) { err << "warning: " << msg << "\n"; };

    std::string config;
    std::string checkpoint;
    std::string report_path;
    int64_t max_iters = 0;
    auto* train = app.add_subcommand("train", "Train the adapter branch");
    train->add_option("config", config, "Run config (JSON)")->required()->check(CLI::ExistingFile);
    train->add_option("--max-iters", max_iters, "Override schedule.max_iters");

    std::string split = "test";
    auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint on a dataset split");
    eval->add_option("config", config)->required()->check(CLI::ExistingFile);
    eval->add_option("--checkpoint", checkpoint, "Learnable weights")->required()->check(CLI::ExistingFile);
    eval->add_option("--split", split, "train, val or test")->check(CLI::IsMember({"train", "val", "test"}));
    eval->add_option("--out", report_path, "Also write key=value report here");

    std::vector<std::string> pair;
    std::string mask_out;
    bool as_255 = false;
    auto* infer = app.add_subcommand("infer", "Predict the change mask of one pair");
    infer->add_option("config", config)->required()->check(CLI::ExistingFile);
    infer->add_option("--pair", pair, "T1 and T2 images")->required()->expected(2)->check(CLI::ExistingFile);
    infer->add_option("--out", mask_out, "Output mask path")->required();
    infer->add_option("--checkpoint", checkpoint, "Learnable weights")->check(CLI::ExistingFile);
    infer->add_flag("--binary255", as_255, "Write change as 255 instead of 1");

    auto* params = app.add_subcommand("params", "Print learnable and frozen parameter counts");
    params->add_option("config", config)->required()->check(CLI::ExistingFile);

    std::string pred_dir, label_dir;
    bool scd = false;
    int classes = 0;
    std::string label_mode = "index";
    auto* metrics_cmd = app.add_subcommand("metrics", "Score predicted masks against labels");
    metrics_cmd->add_option("--pred-dir", pred_dir)->required()->check(CLI::ExistingDirectory);
    metrics_cmd->add_option("--label-dir", label_dir)->required()->check(CLI::ExistingDirectory);
    metrics_cmd->add_flag("--scd", scd, "Directories hold change/, sem_t1/, sem_t2/");
    metrics_cmd->add_option("--classes", classes, "Semantic class count for --scd");
    metrics_cmd->add_option("--label-mode", label_mode)->check(CLI::IsMember({"index", "binary255"}));
    metrics_cmd->add_option("--out", report_path, "Also write key=value report here");

    int64_t resolution = 256, images = 3, warmup = 1;
    auto* bench = app.add_subcommand("bench", "Sliding-window throughput in images per second");
    bench->add_option("config", config)->required()->check(CLI::ExistingFile);
    bench->add_option("--resolution", resolution, "Square input side");
    bench->add_option("--images", images, "Timed images");
    bench->add_option("--warmup", warmup, "Untimed warmup images");

    std::string synth_root;
    int synth_train = 8, synth_val = 4;
    int64_t synth_size = 64;
    auto* synth = app.add_subcommand("synth", "Write a synthetic inserted-square dataset");
    synth->add_option("root", synth_root, "Output dataset root")->required();
    synth->add_option("--train", synth_train, "Training pairs");
    synth->add_option("--val", synth_val, "Validation pairs");
    synth->add_option("--size", synth_size, "Image side");

    for (auto* sub : app.get_subcommands({})) sub->fallthrough();

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return 0;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return 0;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << "\n";
        const auto* sub = app.get_subcommands().empty() ? &app : app.get_subcommands().front();
        err << sub->help();
        return 2;
    }
    if (*seed_opt) g.seed = seed_value;

    try {
        if (train->parsed()) {
            auto cfg = config_with(config, g);
            if (max_iters > 0) cfg.schedule.max_iters = max_iters;
            auto model = run::build_model(cfg, warn);
            run::TrainHooks hooks;
            hooks.log = &out;
            hooks.trace_bridges = g.trace_bridges;
            const auto summary = run::train_model(cfg, model, hooks);
            out << "best iter " << summary.best_iter << " metric " << std::fixed << std::setprecision(4)
                << summary.best_metric << "\n";
            out << "frozen sha256 " << summary.frozen_sha_after << " (unchanged)\n";
            out << "checkpoints " << summary.best_checkpoint.string() << " " << summary.last_checkpoint.string()
                << "\n";
        } else if (eval->parsed()) {
            const auto cfg = config_with(config, g);
            const auto model = run::build_model(cfg, warn);
            run::load_weights(checkpoint, model, warn);
            const auto records = data::filter_split(
                data::scan_dataset(cfg.data.root, data::Layout::named(cfg.data.layout)), data::parse_split(split));
            if (records.empty()) throw DataError("split '" + split + "' has no samples under " + cfg.data.root.string());
            const auto counts = train::evaluate(model, records, cfg.data.label_mode, cfg.infer);
            write_report(metrics::make_report(counts, counts.num_classes > 0), out, report_path);
        } else if (infer->parsed()) {
            const auto cfg = config_with(config, g);
            const auto model = run::build_model(cfg, warn);
            if (checkpoint.empty()) {
                warn("no --checkpoint given; predicting with freshly initialized weights");
            } else {
                run::load_weights(checkpoint, model, warn);
            }
            const Tensor t1 = io::load_image(pair[0]);
            const Tensor t2 = io::load_image(pair[1]);
            if (t1.shape() != t2.shape()) {
                throw ShapeError("pair sizes differ: " + shape_str(t1.shape()) + " vs " + shape_str(t2.shape()));
            }
            auto mask = train::predict_change(model, t1, t2, cfg.infer);
            if (g.trace_bridges && !model.bridges.empty()) {
                ForwardTrace trace;
                ban_forward(model, train::model_input(t1), train::model_input(t2), &trace);
                out << run::describe_bridges(trace);
            }
            int64_t changed = 0;
            for (auto& v : mask.values) {
                changed += v != 0;
                if (as_255 && v != 0) v = 255;
            }
            io::save_mask(mask_out, mask);
            out << "wrote " << mask_out << " (" << changed << " changed pixels of " << mask.values.size() << ")\n";
        } else if (params->parsed()) {
            const auto cfg = config_with(config, g);
            const auto report = count_params(run::build_model(cfg, warn));
            out << "learnable " << report.learnable << "\n";
            out << "frozen " << report.frozen << "\n";
            for (const auto& [name, n] : report.breakdown) out << "  " << name << " " << n << "\n";
        } else if (metrics_cmd->parsed()) {
            write_report(score_dirs(pred_dir, label_dir, scd, classes, data::parse_label_mode(label_mode)), out,
                         report_path);
        } else if (synth->parsed()) {
            data::write_synthetic_dataset(synth_root, synth_train, synth_val, synth_size, g.seed.value_or(0));
            out << "wrote " << synth_train << " train and " << synth_val << " val pairs under " << synth_root << "\n";
        } else if (bench->parsed()) {
            const auto cfg = config_with(config, g);
            const auto model = run::build_model(cfg, warn);
            const auto res = train::fps_benchmark(
                [&](const Tensor& a, const Tensor& b) { train::predict_change(model, a, b, cfg.infer); }, resolution,
                images, warmup, cfg.seed);
            out << "resolution " << resolution << " images " << res.images << " seconds " << std::setprecision(4)
                << res.seconds << " fps " << res.images_per_second << "\n";
        }
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}

}  // namespace ban::cli
