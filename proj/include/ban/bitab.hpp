#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "ban/features.hpp"
#include "ban/params.hpp"

// Bi-temporal adapter branch (Bi-TAB): the trainable change-detection model.
//
// The stage interface (pre / stage j / head) is what the assembly drives;
// `stacked-blocks` below is the one concrete implementation:
//
//   pre      conv k=s0 stride s0 -> GN -> ReLU            (C_in -> C_1)
//   stage j  a = ReLU(GN(conv3x3 stride s_j (x)))         (C_{j-1} -> C_j, s_1 = 1)
//            out = a + ReLU(GN(conv3x3(a)))
//   head     per stage |f1 - f2| -> 1x1 conv to E -> resize to stage-1 grid
//            -> concat -> 1x1 conv -> GN -> ReLU -> 1x1 conv to 2 -> resize to label size
namespace ban::bitab {

enum class HeadKind { kBinaryChange, kSemantic };

HeadKind parse_head_kind(const std::string& name);
std::string to_string(HeadKind kind);

struct BiTabSpec {
    std::vector<int64_t> stage_channels{32, 64, 128, 256};
    // stage_strides[0] is the stem stride; stage_strides[j] (j >= 1) is applied
    // by the first conv of stage j+1. Stage 1 itself never downsamples.
    std::vector<int64_t> stage_strides{4, 2, 2, 2};
    HeadKind head_kind = HeadKind::kBinaryChange;
    int num_semantic_classes = 0;
    int64_t head_channels = 64;
    int64_t in_channels = 3;
    int max_norm_groups = 8;

    int num_stages() const { return static_cast<int>(stage_channels.size()); }
    void validate() const;
    // Spatial size of stage j's output (1-based) for an input side.
    int64_t stage_side(int64_t input_side, int j) const;
};

// Largest group count <= max_groups that divides channels.
int norm_groups_for(int64_t channels, int max_groups);

struct ConvNorm {
    Var weight;  // [k, k, C_in, C_out]
    Var bias;    // [C_out]
    Var gamma;   // [C_out]
    Var beta;    // [C_out]
    int stride = 1;
    int pad = 0;
    int groups = 1;

    void append_to(ParamList& out, const std::string& prefix) const;
};

struct Conv {
    Var weight;
    Var bias;
    void append_to(ParamList& out, const std::string& prefix) const;
};

struct StageParams {
    ConvNorm first;
    ConvNorm second;
};

struct HeadParams {
    std::vector<Conv> lateral;  // one 1x1 per stage
    ConvNorm fuse;
    Conv classifier;

    void append_to(ParamList& out, const std::string& prefix) const;
};

struct BiTabParams {
    ConvNorm stem;
    std::vector<StageParams> stages;
    HeadParams change_head;
    std::vector<HeadParams> seg_heads;  // empty, or one per temporal phase (SCD)

    static BiTabParams create(const BiTabSpec& spec, std::mt19937_64& rng);

    // Backbone (stem + stages): shared by both phases, counted once.
    ParamList backbone() const;
    // Prediction heads; this group receives the head learning-rate multiplier.
    ParamList heads() const;
    ParamList named() const;
};

struct ChangeLogits {
    Var change;  // [H, W, 2]
    Var seg1;    // [H, W, K] (SCD only)
    Var seg2;    // [H, W, K] (SCD only)

    bool semantic() const { return seg1.defined(); }
};

StageFeature bitab_pre(const Var& image, const BiTabSpec& spec, const BiTabParams& params);
// j is 1-based; x must be the output of stage j-1 (stage 0 = pre).
StageFeature bitab_stage(const StageFeature& x, int j, const BiTabSpec& spec, const BiTabParams& params);

// Binary change logits at out_h x out_w.
ChangeLogits change_head(const std::vector<StageFeature>& f1, const std::vector<StageFeature>& f2,
                         const BiTabSpec& spec, const BiTabParams& params, int64_t out_h, int64_t out_w);
// Change logits plus one semantic segmentation map per phase.
ChangeLogits scd_heads(const std::vector<StageFeature>& f1, const std::vector<StageFeature>& f2,
                       const BiTabSpec& spec, const BiTabParams& params, int64_t out_h, int64_t out_w);

// Backbone of one phase without any injection: pre followed by every stage.
std::vector<StageFeature> backbone_forward(const Var& image, const BiTabSpec& spec, const BiTabParams& params);

}  // namespace ban::bitab
