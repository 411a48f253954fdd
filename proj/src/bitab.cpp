#include "ban/bitab.hpp"

#include <string>

#include "ban/error.hpp"
#include "ban/ops.hpp"

namespace ban::bitab {

HeadKind parse_head_kind(const std::string& name) {
    if (name == "binary_change" || name == "bcd") return HeadKind::kBinaryChange;
    if (name == "scd") return HeadKind::kSemantic;
    throw ConfigError("unknown head_kind '" + name + "' (expected binary_change or scd)");
}

std::string to_string(HeadKind kind) { return kind == HeadKind::kBinaryChange ? "binary_change" : "scd"; }

void BiTabSpec::validate() const {
    if (stage_channels.empty()) throw ConfigError("Bi-TAB needs at least one stage");
    if (stage_strides.size() != stage_channels.size()) {
        throw ConfigError("Bi-TAB stage_strides has " + std::to_string(stage_strides.size()) +
                          " entries for " + std::to_string(stage_channels.size()) + " stages");
    }
    for (auto c : stage_channels) {
        if (c < 1) throw ConfigError("Bi-TAB stage channels must be positive");
    }
    for (auto s : stage_strides) {
        if (s < 1) throw ConfigError("Bi-TAB strides must be >= 1");
    }
    if (head_channels < 1 || in_channels < 1) throw ConfigError("Bi-TAB head/input channels must be positive");
    if (head_kind == HeadKind::kSemantic && num_semantic_classes < 2) {
        throw ConfigError("SCD head needs num_semantic_classes >= 2, got " + std::to_string(num_semantic_classes));
    }
    if (max_norm_groups < 1) throw ConfigError("max_norm_groups must be >= 1");
}

int64_t BiTabSpec::stage_side(int64_t input_side, int j) const {
    if (j < 1 || j > num_stages()) throw ConfigError("stage index " + std::to_string(j) + " out of range");
    const int64_t s0 = stage_strides[0];
    int64_t side = s0 > 1 ? (input_side - s0) / s0 + 1 : input_side;
    for (int i = 2; i <= j; ++i) side = (side - 1) / stage_strides[static_cast<size_t>(i - 1)] + 1;
    return side;
}

int norm_groups_for(int64_t channels, int max_groups) {
    for (int g = max_groups; g > 1; --g) {
        if (channels % g == 0) return g;
    }
    return 1;
}

void ConvNorm::append_to(ParamList& out, const std::string& prefix) const {
    out.push_back({prefix + "conv.weight", weight});
    out.push_back({prefix + "conv.bias", bias});
    out.push_back({prefix + "norm.weight", gamma});
    out.push_back({prefix + "norm.bias", beta});
}

void Conv::append_to(ParamList& out, const std::string& prefix) const {
    out.push_back({prefix + "weight", weight});
    out.push_back({prefix + "bias", bias});
}

void HeadParams::append_to(ParamList& out, const std::string& prefix) const {
    for (size_t j = 0; j < lateral.size(); ++j) lateral[j].append_to(out, prefix + "lateral." + std::to_string(j) + ".");
    fuse.append_to(out, prefix + "fuse.");
    classifier.append_to(out, prefix + "classifier.");
}

namespace {

ConvNorm make_conv_norm(int k, int64_t cin, int64_t cout, int stride, int pad, const BiTabSpec& spec,
                        std::mt19937_64& rng) {
    ConvNorm c;
    c.weight = Var(init_fan_in({k, k, cin, cout}, static_cast<int64_t>(k) * k * cin, rng), true);
    c.bias = Var(Tensor({cout}), true);
    c.gamma = Var(Tensor({cout}, 1.0f), true);
    c.beta = Var(Tensor({cout}), true);
    c.stride = stride;
    c.pad = pad;
    c.groups = norm_groups_for(cout, spec.max_norm_groups);
    return c;
}

Conv make_conv1x1(int64_t cin, int64_t cout, std::mt19937_64& rng, float gain = 1.0f) {
    Conv c;
    c.weight = Var(init_fan_in({1, 1, cin, cout}, cin, rng, gain), true);
    c.bias = Var(Tensor({cout}), true);
    return c;
}

HeadParams make_head(const BiTabSpec& spec, int64_t num_outputs, std::mt19937_64& rng) {
    HeadParams h;
    for (auto c : spec.stage_channels) h.lateral.push_back(make_conv1x1(c, spec.head_channels, rng));
    h.fuse = make_conv_norm(1, spec.head_channels * spec.num_stages(), spec.head_channels, 1, 0, spec, rng);
    h.classifier = make_conv1x1(spec.head_channels, num_outputs, rng, 0.1f);
    return h;
}

Var apply(const ConvNorm& c, const Var& x) {
    Var y = ops::conv2d(x, c.weight, c.bias, c.stride, c.pad);
    return ops::relu(ops::group_norm(y, c.groups, c.gamma, c.beta, 1e-5f));
}

Var apply(const Conv& c, const Var& x) { return ops::conv2d(x, c.weight, c.bias, 1, 0); }

// Multi-level feature aggregation shared by the change and segmentation heads.
Var head_forward(const HeadParams& h, const std::vector<Var>& levels, int64_t out_h, int64_t out_w) {
    const int64_t gh = levels[0].shape()[0], gw = levels[0].shape()[1];
    std::vector<Var> parts;
    parts.reserve(levels.size());
    for (size_t j = 0; j < levels.size(); ++j) {
        parts.push_back(ops::resize_bilinear(apply(h.lateral[j], levels[j]), gh, gw));
    }
    Var fused = apply(h.fuse, ops::concat_last(parts));
    return ops::resize_bilinear(apply(h.classifier, fused), out_h, out_w);
}

void check_pair(const std::vector<StageFeature>& f1, const std::vector<StageFeature>& f2, const BiTabSpec& spec) {
    if (f1.size() != f2.size()) {
        throw ShapeError("head received " + std::to_string(f1.size()) + " and " + std::to_string(f2.size()) +
                         " stage features");
    }
    if (static_cast<int>(f1.size()) != spec.num_stages()) {
        throw ShapeError("head expects " + std::to_string(spec.num_stages()) + " stage features, got " +
                         std::to_string(f1.size()));
    }
    for (size_t j = 0; j < f1.size(); ++j) {
        if (f1[j].map.shape() != f2[j].map.shape()) {
            throw ShapeError("stage " + std::to_string(j + 1) + " features differ between phases: " +
                             shape_str(f1[j].map.shape()) + " vs " + shape_str(f2[j].map.shape()));
        }
    }
}

}  // namespace

BiTabParams BiTabParams::create(const BiTabSpec& spec, std::mt19937_64& rng) {
    spec.validate();
    BiTabParams p;
    const int s0 = static_cast<int>(spec.stage_strides[0]);
    const int stem_k = s0 > 1 ? s0 : 3;
    const int stem_pad = s0 > 1 ? 0 : 1;
    p.stem = make_conv_norm(stem_k, spec.in_channels, spec.stage_channels[0], s0, stem_pad, spec, rng);
    for (int j = 1; j <= spec.num_stages(); ++j) {
        const int64_t cin = spec.stage_channels[static_cast<size_t>(j > 1 ? j - 2 : 0)];
        const int64_t cout = spec.stage_channels[static_cast<size_t>(j - 1)];
        const int stride = j == 1 ? 1 : static_cast<int>(spec.stage_strides[static_cast<size_t>(j - 1)]);
        StageParams st;
        st.first = make_conv_norm(3, cin, cout, stride, 1, spec, rng);
        st.second = make_conv_norm(3, cout, cout, 1, 1, spec, rng);
        p.stages.push_back(std::move(st));
    }
    p.change_head = make_head(spec, 2, rng);
    if (spec.head_kind == HeadKind::kSemantic) {
        for (int phase = 0; phase < 2; ++phase) p.seg_heads.push_back(make_head(spec, spec.num_semantic_classes, rng));
    }
    return p;
}

ParamList BiTabParams::backbone() const {
    ParamList out;
    stem.append_to(out, "bitab.stem.");
    for (size_t j = 0; j < stages.size(); ++j) {
        const std::string prefix = "bitab.stages." + std::to_string(j) + ".";
        stages[j].first.append_to(out, prefix + "first.");
        stages[j].second.append_to(out, prefix + "second.");
    }
    return out;
}

ParamList BiTabParams::heads() const {
    ParamList out;
    change_head.append_to(out, "bitab.change_head.");
    for (size_t i = 0; i < seg_heads.size(); ++i) {
        seg_heads[i].append_to(out, "bitab.seg_heads." + std::to_string(i) + ".");
    }
    return out;
}

ParamList BiTabParams::named() const {
    ParamList out = backbone();
    ParamList h = heads();
    out.insert(out.end(), h.begin(), h.end());
    return out;
}

StageFeature bitab_pre(const Var& image, const BiTabSpec& spec, const BiTabParams& params) {
    const Shape& s = image.shape();
    if (s.size() != 3 || s[2] != spec.in_channels) {
        throw ShapeError("Bi-TAB expects an HxWx" + std::to_string(spec.in_channels) + " image, got " + shape_str(s));
    }
    return {apply(params.stem, image), 0};
}

StageFeature bitab_stage(const StageFeature& x, int j, const BiTabSpec& spec, const BiTabParams& params) {
    if (j < 1 || j > spec.num_stages()) {
        throw ConfigError("Bi-TAB stage index " + std::to_string(j) + " outside [1, " +
                          std::to_string(spec.num_stages()) + "]");
    }
    if (x.stage_index != j - 1) {
        throw ConfigError("Bi-TAB stage " + std::to_string(j) + " fed the output of stage " +
                          std::to_string(x.stage_index));
    }
    const StageParams& st = params.stages[static_cast<size_t>(j - 1)];
    Var a = apply(st.first, x.map);
    Var out = ops::add(a, apply(st.second, a));
    return {out, j};
}

ChangeLogits change_head(const std::vector<StageFeature>& f1, const std::vector<StageFeature>& f2,
                         const BiTabSpec& spec, const BiTabParams& params, int64_t out_h, int64_t out_w) {
    check_pair(f1, f2, spec);
    std::vector<Var> diffs;
    diffs.reserve(f1.size());
    for (size_t j = 0; j < f1.size(); ++j) diffs.push_back(ops::abs_diff(f1[j].map, f2[j].map));
    ChangeLogits out;
    out.change = head_forward(params.change_head, diffs, out_h, out_w);
    return out;
}

ChangeLogits scd_heads(const std::vector<StageFeature>& f1, const std::vector<StageFeature>& f2,
                       const BiTabSpec& spec, const BiTabParams& params, int64_t out_h, int64_t out_w) {
    if (spec.head_kind != HeadKind::kSemantic || params.seg_heads.size() != 2) {
        throw ConfigError("scd_heads requires head_kind = scd");
    }
    ChangeLogits out = change_head(f1, f2, spec, params, out_h, out_w);
    std::vector<Var> l1, l2;
    for (const auto& f : f1) l1.push_back(f.map);
    for (const auto& f : f2) l2.push_back(f.map);
    out.seg1 = head_forward(params.seg_heads[0], l1, out_h, out_w);
    out.seg2 = head_forward(params.seg_heads[1], l2, out_h, out_w);
    return out;
}

std::vector<StageFeature> backbone_forward(const Var& image, const BiTabSpec& spec, const BiTabParams& params) {
    std::vector<StageFeature> feats;
    StageFeature x = bitab_pre(image, spec, params);
    for (int j = 1; j <= spec.num_stages(); ++j) {
        x = bitab_stage(x, j, spec, params);
        feats.push_back(x);
    }
    return feats;
}

}  // namespace ban::bitab
