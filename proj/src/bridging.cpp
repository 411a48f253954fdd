#include "ban/bridging.hpp"

#include <cmath>

#include "ban/error.hpp"
#include "ban/ops.hpp"

namespace ban::bridging {

Affinity parse_affinity(const std::string& name) {
    if (name == "dot") return Affinity::kDot;
    if (name == "cosine") return Affinity::kCosine;
    throw ConfigError("unknown bridging affinity '" + name + "' (expected dot or cosine)");
}

std::string to_string(Affinity affinity) { return affinity == Affinity::kDot ? "dot" : "cosine"; }

BridgeParams BridgeParams::create(int64_t in_channels, int64_t out_channels, BridgeInit init,
                                  std::mt19937_64& rng) {
    if (in_channels < 1 || out_channels < 1) throw ConfigError("bridge channel widths must be positive");
    BridgeParams p;
    p.ln_gain = Var(Tensor({in_channels}, 1.0f), true);
    p.ln_bias = Var(Tensor({in_channels}), true);
    Tensor w = init == BridgeInit::kZero
                   ? Tensor({in_channels, out_channels})
                   : init_uniform({in_channels, out_channels}, 1.0f / std::sqrt(static_cast<float>(in_channels)), rng);
    p.proj_weight = Var(std::move(w), true);
    p.proj_bias = Var(Tensor({out_channels}), true);
    return p;
}

void BridgeParams::append_to(ParamList& out, const std::string& prefix) const {
    out.push_back({prefix + "ln.weight", ln_gain});
    out.push_back({prefix + "ln.bias", ln_bias});
    out.push_back({prefix + "proj.weight", proj_weight});
    out.push_back({prefix + "proj.bias", proj_bias});
}

int64_t bridge_param_count(int64_t in_channels, int64_t out_channels) {
    return 2 * in_channels + in_channels * out_channels + out_channels;
}

Var project_and_normalize(const PatchTokens& x_fm, const BridgeParams& params, const BridgeOptions& options) {
    if (x_fm.dim() != params.in_channels()) {
        throw ShapeError("bridge expects " + std::to_string(params.in_channels()) + "-channel encoder tokens, got " +
                         std::to_string(x_fm.dim()));
    }
    Var normed = ops::layer_norm(x_fm.tokens, params.ln_gain, params.ln_bias, options.ln_eps);
    return ops::linear(normed, params.proj_weight, params.proj_bias);
}

Var cross_resample(const Var& x_cm_tokens, const Var& x_tilde_fm, const BridgeOptions& options, BridgeTrace* trace) {
    const Shape& qs = x_cm_tokens.shape();
    const Shape& ks = x_tilde_fm.shape();
    if (qs.size() != 2 || ks.size() != 2) throw ShapeError("cross_resample expects token matrices");
    if (ks[0] == 0) throw ConfigError("cross_resample: encoder feature has no tokens");
    if (qs[1] != ks[1]) {
        throw ShapeError("cross_resample: Bi-TAB width " + std::to_string(qs[1]) + " vs projected width " +
                         std::to_string(ks[1]));
    }
    Var query = x_cm_tokens;
    Var key = x_tilde_fm;
    if (options.affinity == Affinity::kCosine) {
        query = ops::l2_normalize_rows(query);
        key = ops::l2_normalize_rows(key);
    }
    Var logits = ops::scale(ops::matmul_nt(query, key), 1.0f / std::sqrt(static_cast<float>(qs[1])));
    Var attention = ops::softmax_rows(logits);
    Var x_cf = ops::matmul(attention, x_tilde_fm);
    if (trace) {
        trace->affinity = logits.value();
        trace->attention = attention.value();
        trace->x_cf = x_cf.value();
    }
    return x_cf;
}

Var fuse(const Var& x_cf, const Var& x_tilde_fm, GridSize fm_grid, const Var& x_cm_map) {
    const Shape& cm = x_cm_map.shape();
    if (cm.size() != 3) throw ShapeError("fuse expects an HxWxC Bi-TAB map, got " + shape_str(cm));
    const int64_t c = cm[2];
    if (x_tilde_fm.shape()[0] != fm_grid.count()) {
        throw ShapeError("fuse: " + std::to_string(x_tilde_fm.shape()[0]) + " encoder tokens do not form a " +
                         std::to_string(fm_grid.height) + "x" + std::to_string(fm_grid.width) + " grid");
    }
    if (x_tilde_fm.shape()[1] != c || x_cf.shape()[1] != c) {
        throw ShapeError("fuse: channel widths differ from Bi-TAB width " + std::to_string(c));
    }
    if (x_cf.shape()[0] != cm[0] * cm[1]) throw ShapeError("fuse: resampled feature does not cover the Bi-TAB grid");
    Var fm_map = ops::reshape(x_tilde_fm, {fm_grid.height, fm_grid.width, c});
    Var resized = ops::resize_bilinear(fm_map, cm[0], cm[1]);
    Var cf_map = ops::reshape(x_cf, cm);
    return ops::add(ops::add(cf_map, resized), x_cm_map);
}

StageFeature bridge_forward(const PatchTokens& x_fm, const StageFeature& x_cm, const BridgeParams& params,
                            const BridgeOptions& options, BridgeTrace* trace) {
    if (x_cm.channels() != params.out_channels()) {
        throw ShapeError("bridge projects to " + std::to_string(params.out_channels()) + " channels but stage " +
                         std::to_string(x_cm.stage_index) + " has " + std::to_string(x_cm.channels()));
    }
    Var x_tilde = project_and_normalize(x_fm, params, options);
    Var queries = ops::reshape(x_cm.map, {x_cm.height() * x_cm.width(), x_cm.channels()});
    Var x_cf = cross_resample(queries, x_tilde, options, trace);
    StageFeature out;
    out.stage_index = x_cm.stage_index;
    out.map = fuse(x_cf, x_tilde, x_fm.grid, x_cm.map);
    if (trace) {
        trace->x_fm = x_fm.tokens.value();
        trace->x_tilde_fm = x_tilde.value();
        trace->x_bm = out.map.value();
        trace->fm_grid = x_fm.grid;
        trace->cm_grid = x_cm.grid();
    }
    return out;
}

}  // namespace ban::bridging
