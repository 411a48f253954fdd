#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "ban/autograd.hpp"
#include "ban/bitab.hpp"

namespace ban::metrics {

// Per-pixel class indices, row-major.
struct LabelMap {
    int64_t height = 0;
    int64_t width = 0;
    std::vector<int32_t> values;

    LabelMap() = default;
    LabelMap(int64_t h, int64_t w, int32_t fill = 0)
        : height(h), width(w), values(static_cast<size_t>(h * w), fill) {}

    int32_t& at(int64_t y, int64_t x) { return values[static_cast<size_t>(y * width + x)]; }
    int32_t at(int64_t y, int64_t x) const { return values[static_cast<size_t>(y * width + x)]; }
    friend bool operator==(const LabelMap&, const LabelMap&) = default;
};

inline constexpr int32_t kIgnoreIndex = 255;

// Mean pixel-wise cross-entropy of [H,W,K] logits.
Var cross_entropy_loss(const Var& logits, const LabelMap& labels);

// Change loss plus, for SCD logits, the two segmentation losses (unit weights).
Var total_loss(const bitab::ChangeLogits& logits, const LabelMap& change, const LabelMap* sem1 = nullptr,
               const LabelMap* sem2 = nullptr);

// Integer accumulator for every BCD/SCD metric. Mergeable: workers tally
// privately and merge.
struct ConfusionCounts {
    int64_t tp = 0, fp = 0, fn = 0, tn = 0;
    int64_t pixel_total = 0;
    int64_t images = 0;
    // Images whose label and prediction contain no change at all.
    int64_t images_without_change = 0;
    int num_classes = 0;                // K for SCD, 0 when unused
    std::vector<int64_t> seg_confusion;  // K*K, rows = label, cols = prediction

    explicit ConfusionCounts(int k = 0) : num_classes(k), seg_confusion(static_cast<size_t>(k) * k, 0) {}

    int64_t seg(int label, int pred) const { return seg_confusion[static_cast<size_t>(label * num_classes + pred)]; }
    int64_t seg_total() const;
    friend bool operator==(const ConfusionCounts&, const ConfusionCounts&) = default;
};

// Binary change tally (class 1 = change). Ignored pixels are skipped.
void confusion_update(ConfusionCounts& counts, const LabelMap& pred, const LabelMap& label);
// K-class tally into seg_confusion (call once per temporal phase).
void seg_confusion_update(ConfusionCounts& counts, const LabelMap& pred, const LabelMap& label);
ConfusionCounts merge_counts(const ConfusionCounts& a, const ConfusionCounts& b);

struct BcdMetrics {
    double iou_c = 0, f1_c = 0, precision_c = 0, recall_c = 0, oa = 0, iou_u = 0;
};

// Degenerate denominators (no change in label nor prediction) count as perfect.
BcdMetrics bcd_metrics(const ConfusionCounts& counts);

struct ScdMetrics {
    double miou = 0, kappa = 0, sek = 0, score = 0, p_o = 0, p_e = 0;
    bool kappa_degenerate = false;  // p_e == 1; kappa reported as 0
};

struct ScdOptions {
    // Zero the (no-change, no-change) confusion cell before kappa, as some SCD
    // benchmarks do. Off by default: kappa uses the raw confusion.
    bool exclude_no_change = false;
};

ScdMetrics scd_metrics(const ConfusionCounts& counts, const ScdOptions& options = {});

// Converts P and R (fractions) into F1 and IoU.
double f1_from_precision_recall(double precision, double recall);
double iou_from_f1(double f1);
double weighted_score(double sek, double miou);

struct MetricReport {
    BcdMetrics bcd;
    bool has_scd = false;
    ScdMetrics scd;
    int64_t images = 0;
    int64_t images_without_change = 0;

    std::map<std::string, double> as_map() const;
    // key=value lines, fractions with 6 decimals.
    std::string to_key_values() const;
    // Human table with percentages at two decimals.
    std::string to_table() const;
};

MetricReport make_report(const ConfusionCounts& counts, bool scd, const ScdOptions& options = {});

// Per-pixel argmax of [H,W,K] logits, lowest index on ties.
LabelMap argmax(const Tensor& logits);

}  // namespace ban::metrics
