#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <optional>
#include <sstream>

#include "ban/checkpoint.hpp"
#include "ban/cli.hpp"
#include "ban/error.hpp"
#include "ban/ops.hpp"
#include "ban/run.hpp"
#include "ban/train.hpp"

namespace py = pybind11;
using namespace ban;

namespace {

using FloatArray = py::array_t<float, py::array::c_style | py::array::forcecast>;
using IntArray = py::array_t<int32_t, py::array::c_style | py::array::forcecast>;

Tensor to_tensor(const FloatArray& a) {
    Shape shape(a.shape(), a.shape() + a.ndim());
    return Tensor(shape, std::vector<float>(a.data(), a.data() + a.size()));
}

FloatArray from_tensor(const Tensor& t) {
    FloatArray out(std::vector<py::ssize_t>(t.shape().begin(), t.shape().end()));
    std::copy(t.values().begin(), t.values().end(), out.mutable_data());
    return out;
}

metrics::LabelMap to_mask(const IntArray& a) {
    if (a.ndim() != 2) throw ShapeError("masks must be 2-D");
    metrics::LabelMap m(a.shape(0), a.shape(1));
    std::copy(a.data(), a.data() + a.size(), m.values.begin());
    return m;
}

IntArray from_mask(const metrics::LabelMap& m) {
    IntArray out({m.height, m.width});
    std::copy(m.values.begin(), m.values.end(), out.mutable_data());
    return out;
}

Tensor image(const FloatArray& a) {
    if (a.ndim() != 3) throw ShapeError("images must be H x W x C");
    return to_tensor(a);
}

class PyModel {
public:
    PyModel(const std::filesystem::path& config, const std::optional<std::filesystem::path>& checkpoint)
        : cfg_(run::load_config(config)), model_(run::build_model(cfg_)) {
        if (checkpoint) run::load_weights(*checkpoint, model_);
    }

    FloatArray logits(const FloatArray& t1, const FloatArray& t2) const {
        return from_tensor(train::model_logits(model_)(image(t1), image(t2)));
    }

    IntArray predict(const FloatArray& t1, const FloatArray& t2) const {
        return from_mask(train::predict_change(model_, image(t1), image(t2), cfg_.infer));
    }

    py::dict param_counts() const {
        const ParamReport r = count_params(model_);
        py::dict d;
        d["learnable"] = r.learnable;
        d["frozen"] = r.frozen;
        for (const auto& [name, n] : r.breakdown) d[py::str(name)] = n;
        return d;
    }

    std::string frozen_sha256() const { return checkpoint::sha256_hex(model_.frozen()); }

    py::dict train(std::optional<int64_t> max_iters) {
        run::RunConfig cfg = cfg_;
        if (max_iters) cfg.schedule.max_iters = *max_iters;
        const run::TrainSummary s = run::train_model(cfg, model_);
        py::dict d;
        d["losses"] = s.losses;
        d["best_iter"] = s.best_iter;
        d["best_metric"] = s.best_metric;
        d["frozen_sha_before"] = s.frozen_sha_before;
        d["frozen_sha_after"] = s.frozen_sha_after;
        d["best_checkpoint"] = s.best_checkpoint.string();
        return d;
    }

private:
    run::RunConfig cfg_;
    BanModel model_;
};

py::dict report_dict(const metrics::MetricReport& r) {
    py::dict d;
    for (const auto& [k, v] : r.as_map()) d[py::str(k)] = v;
    d["images"] = r.images;
    d["images_without_change"] = r.images_without_change;
    return d;
}

}  // namespace

PYBIND11_MODULE(_ban, m) {
    m.doc() = "Bi-temporal adapter network for change detection";

    py::register_exception<ShapeError>(m, "ShapeError", PyExc_ValueError);
    py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
    py::register_exception<DataError>(m, "DataError", PyExc_ValueError);
    py::register_exception<CheckpointError>(m, "CheckpointError", PyExc_IOError);
    py::register_exception<NumericError>(m, "NumericError", PyExc_ArithmeticError);

    py::class_<PyModel>(m, "Model")
        .def(py::init<const std::filesystem::path&, const std::optional<std::filesystem::path>&>(), py::arg("config"),
             py::arg("checkpoint") = py::none())
        .def("logits", &PyModel::logits, py::arg("t1"), py::arg("t2"), "H x W x 2 change logits for 0..255 images")
        .def("predict", &PyModel::predict, py::arg("t1"), py::arg("t2"), "Binary change mask")
        .def("param_counts", &PyModel::param_counts)
        .def("frozen_sha256", &PyModel::frozen_sha256)
        .def("train", &PyModel::train, py::arg("max_iters") = py::none(), py::call_guard<py::gil_scoped_release>());

    m.def(
        "bcd_metrics",
        [](const std::vector<IntArray>& preds, const std::vector<IntArray>& labels) {
            if (preds.size() != labels.size()) throw ShapeError("prediction and label counts differ");
            metrics::ConfusionCounts c;
            for (size_t i = 0; i < preds.size(); ++i) metrics::confusion_update(c, to_mask(preds[i]), to_mask(labels[i]));
            return report_dict(metrics::make_report(c, false));
        },
        py::arg("preds"), py::arg("labels"));

    m.def(
        "scd_metrics",
        [](const IntArray& change_pred, const IntArray& change_label, const std::vector<IntArray>& sem_preds,
           const std::vector<IntArray>& sem_labels, int classes, bool exclude_no_change) {
            if (sem_preds.size() != sem_labels.size()) throw ShapeError("semantic prediction and label counts differ");
            metrics::ConfusionCounts c(classes);
            metrics::confusion_update(c, to_mask(change_pred), to_mask(change_label));
            for (size_t i = 0; i < sem_preds.size(); ++i) {
                metrics::seg_confusion_update(c, to_mask(sem_preds[i]), to_mask(sem_labels[i]));
            }
            return report_dict(metrics::make_report(c, true, {exclude_no_change}));
        },
        py::arg("change_pred"), py::arg("change_label"), py::arg("sem_preds"), py::arg("sem_labels"),
        py::arg("classes"), py::arg("exclude_no_change") = false);

    m.def("f1_from_precision_recall", &metrics::f1_from_precision_recall);
    m.def("iou_from_f1", &metrics::iou_from_f1);
    m.def("weighted_score", &metrics::weighted_score, py::arg("sek"), py::arg("miou"));
    m.def("bridge_param_count", &bridging::bridge_param_count, py::arg("c_f"), py::arg("c_c"));
    m.def("poly_lr", &train::poly_lr, py::arg("iter"), py::arg("max_iters"), py::arg("base_lr"),
          py::arg("power") = 1.0, py::arg("min_lr") = 0.0);
    m.def(
        "resize_bilinear", [](const FloatArray& x, int64_t h, int64_t w) {
            return from_tensor(ops::resize_bilinear(image(x), h, w));
        },
        py::arg("x"), py::arg("height"), py::arg("width"));
    m.def(
        "synthetic_pair",
        [](int64_t size, uint64_t seed) {
            const data::Sample s = data::synthetic_square_pair(size, seed);
            return py::make_tuple(from_tensor(s.t1), from_tensor(s.t2), from_mask(s.label));
        },
        py::arg("size"), py::arg("seed"));
    m.def(
        "cli",
        [](const std::vector<std::string>& args) {
            std::ostringstream out, err;
            int code;
            {
                py::gil_scoped_release release;
                code = cli::run(args, out, err);
            }
            return py::make_tuple(code, out.str(), err.str());
        },
        py::arg("args"), "Runs the command-line tool in-process; returns (exit code, stdout, stderr).");
}
