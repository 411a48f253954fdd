#include "ban/metrics.hpp"

#include <cmath>
#include <cstdio>
#include <iostream>
#include <sstream>

#include "ban/error.hpp"
#include "ban/ops.hpp"

namespace ban::metrics {

Var cross_entropy_loss(const Var& logits, const LabelMap& labels) {
    const Shape& s = logits.shape();
    if (s.size() != 3 || s[0] != labels.height || s[1] != labels.width) {
        throw ShapeError("loss: logits " + shape_str(s) + " vs labels " + std::to_string(labels.height) + "x" +
                         std::to_string(labels.width));
    }
    return ops::cross_entropy(logits, labels.values, kIgnoreIndex);
}

Var total_loss(const bitab::ChangeLogits& logits, const LabelMap& change, const LabelMap* sem1, const LabelMap* sem2) {
    Var loss = cross_entropy_loss(logits.change, change);
    if (logits.semantic()) {
        if (!sem1 || !sem2) throw DataError("SCD training needs semantic labels for both phases");
        loss = ops::add(loss, cross_entropy_loss(logits.seg1, *sem1));
        loss = ops::add(loss, cross_entropy_loss(logits.seg2, *sem2));
    }
    return loss;
}

int64_t ConfusionCounts::seg_total() const {
    int64_t n = 0;
    for (auto v : seg_confusion) n += v;
    return n;
}

namespace {

void require_same(const LabelMap& pred, const LabelMap& label) {
    if (pred.height != label.height || pred.width != label.width) {
        throw ShapeError("prediction " + std::to_string(pred.height) + "x" + std::to_string(pred.width) +
                         " vs label " + std::to_string(label.height) + "x" + std::to_string(label.width));
    }
}

std::string pixel(int64_t i, int64_t width) {
    return "(" + std::to_string(i / width) + ", " + std::to_string(i % width) + ")";
}

double ratio_or(int64_t num, int64_t den, double fallback) {
    return den == 0 ? fallback : static_cast<double>(num) / static_cast<double>(den);
}

}  // namespace

void confusion_update(ConfusionCounts& counts, const LabelMap& pred, const LabelMap& label) {
    require_same(pred, label);
    int64_t tp = 0, fp = 0, fn = 0, tn = 0;
    for (size_t i = 0; i < label.values.size(); ++i) {
        const int32_t y = label.values[i];
        if (y == kIgnoreIndex) continue;
        const int32_t p = pred.values[i];
        if ((y != 0 && y != 1) || (p != 0 && p != 1)) {
            throw DataError("binary change maps must hold 0/1, found label " + std::to_string(y) + " prediction " +
                            std::to_string(p) + " at pixel " + pixel(static_cast<int64_t>(i), label.width));
        }
        if (p == 1) {
            (y == 1 ? tp : fp) += 1;
        } else {
            (y == 1 ? fn : tn) += 1;
        }
    }
    counts.tp += tp;
    counts.fp += fp;
    counts.fn += fn;
    counts.tn += tn;
    counts.pixel_total += tp + fp + fn + tn;
    counts.images += 1;
    if (tp + fp + fn == 0) counts.images_without_change += 1;
}

void seg_confusion_update(ConfusionCounts& counts, const LabelMap& pred, const LabelMap& label) {
    require_same(pred, label);
    const int k = counts.num_classes;
    if (k < 1) throw ConfigError("semantic confusion needs num_classes >= 1");
    for (size_t i = 0; i < label.values.size(); ++i) {
        const int32_t y = label.values[i];
        if (y == kIgnoreIndex) continue;
        const int32_t p = pred.values[i];
        if (y < 0 || y >= k || p < 0 || p >= k) {
            throw DataError("semantic class out of range [0, " + std::to_string(k) + ") at pixel " +
                            pixel(static_cast<int64_t>(i), label.width));
        }
        counts.seg_confusion[static_cast<size_t>(y * k + p)] += 1;
    }
}

ConfusionCounts merge_counts(const ConfusionCounts& a, const ConfusionCounts& b) {
    // An accumulator that never saw semantic data adopts the other's K.
    if (a.num_classes != b.num_classes && a.num_classes != 0 && b.num_classes != 0) {
        throw ConfigError("cannot merge confusion counts with K=" + std::to_string(a.num_classes) + " and K=" +
                          std::to_string(b.num_classes));
    }
    ConfusionCounts out(std::max(a.num_classes, b.num_classes));
    out.tp = a.tp + b.tp;
    out.fp = a.fp + b.fp;
    out.fn = a.fn + b.fn;
    out.tn = a.tn + b.tn;
    out.pixel_total = a.pixel_total + b.pixel_total;
    out.images = a.images + b.images;
    out.images_without_change = a.images_without_change + b.images_without_change;
    for (const ConfusionCounts* src : {&a, &b}) {
        if (src->num_classes == 0) continue;
        for (size_t i = 0; i < out.seg_confusion.size(); ++i) out.seg_confusion[i] += src->seg_confusion[i];
    }
    return out;
}

BcdMetrics bcd_metrics(const ConfusionCounts& c) {
    if (c.pixel_total <= 0) throw DataError("cannot compute metrics from empty confusion counts");
    BcdMetrics m;
    m.iou_c = ratio_or(c.tp, c.tp + c.fp + c.fn, 1.0);
    m.f1_c = ratio_or(2 * c.tp, 2 * c.tp + c.fp + c.fn, 1.0);
    m.precision_c = ratio_or(c.tp, c.tp + c.fp, c.fn == 0 ? 1.0 : 0.0);
    m.recall_c = ratio_or(c.tp, c.tp + c.fn, c.fp == 0 ? 1.0 : 0.0);
    m.oa = ratio_or(c.tp + c.tn, c.pixel_total, 0.0);
    m.iou_u = ratio_or(c.tn, c.tn + c.fp + c.fn, 1.0);
    return m;
}

ScdMetrics scd_metrics(const ConfusionCounts& c, const ScdOptions& options) {
    const BcdMetrics b = bcd_metrics(c);
    const int k = c.num_classes;
    if (k < 1) throw ConfigError("SCD metrics need a semantic confusion matrix");
    std::vector<int64_t> conf = c.seg_confusion;
    if (options.exclude_no_change) conf[0] = 0;
    int64_t total = 0, diag = 0;
    std::vector<int64_t> rows(static_cast<size_t>(k), 0), cols(static_cast<size_t>(k), 0);
    for (int y = 0; y < k; ++y) {
        for (int p = 0; p < k; ++p) {
            const int64_t v = conf[static_cast<size_t>(y * k + p)];
            total += v;
            rows[static_cast<size_t>(y)] += v;
            cols[static_cast<size_t>(p)] += v;
            if (y == p) diag += v;
        }
    }
    if (total == 0) throw DataError("semantic confusion matrix is empty");
    ScdMetrics m;
    const double n = static_cast<double>(total);
    m.p_o = static_cast<double>(diag) / n;
    double pe = 0.0;
    for (int i = 0; i < k; ++i) pe += static_cast<double>(rows[i]) * static_cast<double>(cols[i]);
    m.p_e = pe / (n * n);
    if (m.p_e >= 1.0) {
        m.kappa_degenerate = true;
        m.kappa = 0.0;
        std::cerr << "warning: kappa undefined (p_e = 1, single-class data); reporting 0\n";
    } else {
        m.kappa = (m.p_o - m.p_e) / (1.0 - m.p_e);
    }
    m.miou = 0.5 * (b.iou_u + b.iou_c);
    m.sek = std::exp(b.iou_c - 1.0) * m.kappa;
    m.score = weighted_score(m.sek, m.miou);
    return m;
}

double f1_from_precision_recall(double precision, double recall) {
    if (precision + recall == 0.0) return 0.0;
    return 2.0 * precision * recall / (precision + recall);
}

double iou_from_f1(double f1) { return f1 / (2.0 - f1); }

double weighted_score(double sek, double miou) { return 0.7 * sek + 0.3 * miou; }

std::map<std::string, double> MetricReport::as_map() const {
    std::map<std::string, double> m{{"iou_c", bcd.iou_c},
                                    {"iou_u", bcd.iou_u},
                                    {"f1_c", bcd.f1_c},
                                    {"precision_c", bcd.precision_c},
                                    {"recall_c", bcd.recall_c},
                                    {"oa", bcd.oa},
                                    {"miou", 0.5 * (bcd.iou_c + bcd.iou_u)}};
    if (has_scd) {
        m["kappa"] = scd.kappa;
        m["sek"] = scd.sek;
        m["score"] = scd.score;
    }
    return m;
}

std::string MetricReport::to_key_values() const {
    std::ostringstream os;
    char buf[64];
    for (const auto& [key, value] : as_map()) {
        std::snprintf(buf, sizeof(buf), "%.10f", value);
        os << key << '=' << buf << '\n';
    }
    os << "images=" << images << '\n';
    os << "images_without_change=" << images_without_change << '\n';
    return os.str();
}

std::string MetricReport::to_table() const {
    std::ostringstream os;
    char buf[96];
    os << "metric         value(%)\n";
    os << "-------------- --------\n";
    for (const auto& [key, value] : as_map()) {
        std::snprintf(buf, sizeof(buf), "%-14s %8.2f\n", key.c_str(), 100.0 * value);
        os << buf;
    }
    if (images_without_change > 0) {
        os << "note: " << images_without_change << " of " << images
           << " images contain no change in label or prediction (IoU/F1 counted as 1)\n";
    }
    return os.str();
}

MetricReport make_report(const ConfusionCounts& counts, bool scd, const ScdOptions& options) {
    MetricReport r;
    r.bcd = bcd_metrics(counts);
    r.has_scd = scd;
    if (scd) r.scd = scd_metrics(counts, options);
    r.images = counts.images;
    r.images_without_change = counts.images_without_change;
    return r;
}

LabelMap argmax(const Tensor& logits) {
    if (logits.rank() != 3) throw ShapeError("argmax expects [H,W,K] logits, got " + shape_str(logits.shape()));
    const int64_t h = logits.dim(0), w = logits.dim(1), k = logits.dim(2);
    LabelMap out(h, w);
    for (int64_t p = 0; p < h * w; ++p) {
        const float* row = logits.data() + p * k;
        int32_t best = 0;
        for (int64_t c = 1; c < k; ++c) {
            if (row[c] > row[best]) best = static_cast<int32_t>(c);
        }
        out.values[static_cast<size_t>(p)] = best;
    }
    return out;
}

}  // namespace ban::metrics
