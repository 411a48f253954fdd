#include "ban/encoder.hpp"

#include <cmath>
#include <string>

#include "ban/error.hpp"
#include "ban/ops.hpp"

namespace ban::encoder {

void ViTConfig::validate() const {
    if (patch_size < 1) throw ConfigError("encoder patch_size must be >= 1, got " + std::to_string(patch_size));
    if (embed_dim < 1 || num_heads < 1) throw ConfigError("encoder embed_dim and num_heads must be >= 1");
    if (embed_dim % num_heads != 0) {
        throw ConfigError("encoder embed_dim " + std::to_string(embed_dim) + " not divisible by num_heads " +
                          std::to_string(num_heads));
    }
    if (depth < 1) throw ConfigError("encoder depth must be >= 1");
    if (ffn_ratio <= 0.0 || hidden_dim() < 1) throw ConfigError("encoder ffn_ratio must be positive");
    if (pretrain_resolution < 1 || pretrain_resolution % patch_size != 0) {
        throw ConfigError("encoder pretrain_resolution " + std::to_string(pretrain_resolution) +
                          " not divisible by patch_size " + std::to_string(patch_size));
    }
    if (in_channels < 1) throw ConfigError("encoder in_channels must be >= 1");
}

void TapSet::validate(int64_t depth) const {
    for (size_t i = 0; i < indices.size(); ++i) {
        if (indices[i] < 1 || indices[i] > depth) {
            throw ConfigError("tap index " + std::to_string(indices[i]) + " outside [1, " + std::to_string(depth) +
                              "]");
        }
        if (i > 0 && indices[i] <= indices[i - 1]) throw ConfigError("tap indices must be strictly increasing");
    }
}

TapSet TapSet::evenly_spaced(int64_t depth, int64_t count) {
    if (count < 0 || count > depth) {
        throw ConfigError("cannot place " + std::to_string(count) + " taps in " + std::to_string(depth) + " blocks");
    }
    TapSet taps;
    for (int64_t j = 1; j <= count; ++j) {
        taps.indices.push_back(static_cast<int>((j * depth) / count));
    }
    return taps;
}

void BlockParams::append_to(ParamList& out, const std::string& prefix) const {
    out.push_back({prefix + "ln1.weight", ln1_gain});
    out.push_back({prefix + "ln1.bias", ln1_bias});
    out.push_back({prefix + "attn.q.weight", q_weight});
    out.push_back({prefix + "attn.q.bias", q_bias});
    out.push_back({prefix + "attn.k.weight", k_weight});
    out.push_back({prefix + "attn.k.bias", k_bias});
    out.push_back({prefix + "attn.v.weight", v_weight});
    out.push_back({prefix + "attn.v.bias", v_bias});
    out.push_back({prefix + "attn.out.weight", out_weight});
    out.push_back({prefix + "attn.out.bias", out_bias});
    out.push_back({prefix + "ln2.weight", ln2_gain});
    out.push_back({prefix + "ln2.bias", ln2_bias});
    out.push_back({prefix + "ffn.fc1.weight", fc1_weight});
    out.push_back({prefix + "ffn.fc1.bias", fc1_bias});
    out.push_back({prefix + "ffn.fc2.weight", fc2_weight});
    out.push_back({prefix + "ffn.fc2.bias", fc2_bias});
}

ParamList EncoderParams::named() const {
    ParamList out;
    out.push_back({"encoder.patch_embed.weight", patch_weight});
    out.push_back({"encoder.patch_embed.bias", patch_bias});
    if (class_token.defined()) out.push_back({"encoder.class_token", class_token});
    out.push_back({"encoder.pos_embed", pos_embed});
    for (size_t l = 0; l < blocks.size(); ++l) {
        blocks[l].append_to(out, "encoder.blocks." + std::to_string(l) + ".");
    }
    return out;
}

EncoderParams EncoderParams::random(const ViTConfig& cfg, uint64_t seed) {
    cfg.validate();
    std::mt19937_64 rng(seed);
    const int64_t d = cfg.embed_dim, hid = cfg.hidden_dim(), p = cfg.patch_size;
    const auto frozen = [](Tensor t) { return Var(std::move(t), false); };
    EncoderParams e;
    e.patch_weight = frozen(init_fan_in({p, p, cfg.in_channels, d}, p * p * cfg.in_channels, rng));
    e.patch_bias = frozen(Tensor({d}));
    if (cfg.use_class_token) e.class_token = frozen(init_normal({1, d}, 0.02f, rng));
    const int64_t rows = cfg.native_grid().count() + (cfg.use_class_token ? 1 : 0);
    e.pos_embed = frozen(init_normal({rows, d}, 0.02f, rng));
    const float std_attn = 1.0f / std::sqrt(static_cast<float>(d));
    for (int64_t l = 0; l < cfg.depth; ++l) {
        BlockParams b;
        b.ln1_gain = frozen(Tensor({d}, 1.0f));
        b.ln1_bias = frozen(Tensor({d}));
        b.q_weight = frozen(init_normal({d, d}, std_attn, rng));
        b.q_bias = frozen(Tensor({d}));
        b.k_weight = frozen(init_normal({d, d}, std_attn, rng));
        b.k_bias = frozen(Tensor({d}));
        b.v_weight = frozen(init_normal({d, d}, std_attn, rng));
        b.v_bias = frozen(Tensor({d}));
        b.out_weight = frozen(init_normal({d, d}, 0.5f * std_attn, rng));
        b.out_bias = frozen(Tensor({d}));
        b.ln2_gain = frozen(Tensor({d}, 1.0f));
        b.ln2_bias = frozen(Tensor({d}));
        b.fc1_weight = frozen(init_normal({d, hid}, std_attn, rng));
        b.fc1_bias = frozen(Tensor({hid}));
        b.fc2_weight = frozen(init_normal({hid, d}, 0.5f / std::sqrt(static_cast<float>(hid)), rng));
        b.fc2_bias = frozen(Tensor({d}));
        e.blocks.push_back(std::move(b));
    }
    return e;
}

Tensor aris_resize(const Tensor& image, int64_t target) {
    if (target < 1) throw ConfigError("ARIS target must be positive, got " + std::to_string(target));
    if (image.rank() != 3 || image.dim(0) < 1 || image.dim(1) < 1) {
        throw ShapeError("ARIS expects a non-empty HxWxC raster, got " + shape_str(image.shape()));
    }
    return ops::resize_bilinear(image, target, target);
}

PatchTokens patchify(const Tensor& image, const ViTConfig& cfg, const EncoderParams& params) {
    if (image.rank() != 3) throw ShapeError("patchify expects HxWxC, got " + shape_str(image.shape()));
    const int64_t p = cfg.patch_size;
    for (int axis = 0; axis < 2; ++axis) {
        if (image.dim(axis) % p != 0 || image.dim(axis) == 0) {
            throw ShapeError("image side " + std::to_string(image.dim(axis)) + " not divisible by patch size " +
                             std::to_string(p));
        }
    }
    if (image.dim(2) != cfg.in_channels) {
        throw ShapeError("patchify: image has " + std::to_string(image.dim(2)) + " channels, encoder expects " +
                         std::to_string(cfg.in_channels));
    }
    Var emb = ops::conv2d(Var(image), params.patch_weight, params.patch_bias, static_cast<int>(p), 0);
    PatchTokens out;
    out.grid = {image.dim(0) / p, image.dim(1) / p};
    out.tokens = ops::reshape(emb, {out.grid.count(), cfg.embed_dim});
    return out;
}

Tensor interpolate_pos_embed(const Tensor& pos, GridSize from, GridSize to, bool has_class_token) {
    if (pos.rank() != 2) throw ShapeError("position table must be [T, D], got " + shape_str(pos.shape()));
    const int64_t extra = has_class_token ? 1 : 0;
    if (pos.dim(0) != from.count() + extra) {
        throw ShapeError("position table has " + std::to_string(pos.dim(0)) + " rows but grid " +
                         std::to_string(from.height) + "x" + std::to_string(from.width) +
                         (has_class_token ? " plus class token" : "") + " needs " +
                         std::to_string(from.count() + extra));
    }
    if (to.height < 1 || to.width < 1) throw ConfigError("target position grid must be non-empty");
    if (from == to) return pos;
    const int64_t d = pos.dim(1);
    Tensor grid({from.height, from.width, d});
    std::copy_n(pos.data() + extra * d, from.count() * d, grid.data());
    Tensor resized = ops::resize_bilinear(grid, to.height, to.width);
    Tensor out({to.count() + extra, d});
    std::copy_n(pos.data(), extra * d, out.data());
    std::copy_n(resized.data(), resized.numel(), out.data() + extra * d);
    return out;
}

PatchTokens transformer_block(const PatchTokens& x, const BlockParams& params, const ViTConfig& cfg,
                              int block_index, AttentionTrace* trace) {
    if (x.dim() != cfg.embed_dim) {
        throw ShapeError("block " + std::to_string(block_index) + ": token width " + std::to_string(x.dim()) +
                         " does not match embed_dim " + std::to_string(cfg.embed_dim));
    }
    const int64_t heads = cfg.num_heads, dh = cfg.head_dim();
    Var seq = x.has_class_token() ? ops::concat_rows(x.class_token, x.tokens) : x.tokens;

    Var h = ops::layer_norm(seq, params.ln1_gain, params.ln1_bias, cfg.ln_eps);
    Var q = ops::linear(h, params.q_weight, params.q_bias);
    Var k = ops::linear(h, params.k_weight, params.k_bias);
    Var v = ops::linear(h, params.v_weight, params.v_bias);
    const float inv_scale = 1.0f / std::sqrt(static_cast<float>(dh));
    std::vector<Var> head_out;
    head_out.reserve(static_cast<size_t>(heads));
    for (int64_t i = 0; i < heads; ++i) {
        Var qi = ops::slice_last(q, i * dh, dh);
        Var ki = ops::slice_last(k, i * dh, dh);
        Var vi = ops::slice_last(v, i * dh, dh);
        Var probs = ops::softmax_rows(ops::scale(ops::matmul_nt(qi, ki), inv_scale));
        if (trace) trace->probabilities.push_back(probs.value());
        head_out.push_back(ops::matmul(probs, vi));
    }
    Var attn = ops::linear(ops::concat_last(head_out), params.out_weight, params.out_bias);
    Var mid = ops::add(seq, attn);

    Var h2 = ops::layer_norm(mid, params.ln2_gain, params.ln2_bias, cfg.ln_eps);
    Var ffn = ops::linear(ops::gelu(ops::linear(h2, params.fc1_weight, params.fc1_bias)), params.fc2_weight,
                          params.fc2_bias);
    Var out = ops::add(mid, ffn);
    if (!out.value().all_finite()) {
        throw NumericError("non-finite activation in encoder block " + std::to_string(block_index));
    }

    PatchTokens result;
    result.grid = x.grid;
    if (x.has_class_token()) {
        result.class_token = ops::slice_rows(out, 0, 1);
        result.tokens = ops::slice_rows(out, 1, x.count());
    } else {
        result.tokens = out;
    }
    return result;
}

EncoderRun::EncoderRun(const ViTConfig& cfg, const EncoderParams& params, const Tensor& image)
    : cfg_(cfg), params_(params) {
    if (static_cast<int64_t>(params.blocks.size()) != cfg.depth) {
        throw ConfigError("encoder has " + std::to_string(params.blocks.size()) + " blocks, config depth " +
                          std::to_string(cfg.depth));
    }
    state_ = patchify(image, cfg, params);
    const GridSize native = cfg.native_grid();
    Tensor pos = interpolate_pos_embed(params.pos_embed.value(), native, state_.grid, cfg.use_class_token);
    const int64_t d = cfg.embed_dim;
    if (cfg.use_class_token) {
        Tensor cls_pos({1, d});
        std::copy_n(pos.data(), d, cls_pos.data());
        Tensor grid_pos({state_.grid.count(), d});
        std::copy_n(pos.data() + d, grid_pos.numel(), grid_pos.data());
        state_.class_token = ops::add(params.class_token, Var(std::move(cls_pos)));
        state_.tokens = ops::add(state_.tokens, Var(std::move(grid_pos)));
    } else {
        state_.tokens = ops::add(state_.tokens, Var(std::move(pos)));
    }
}

PatchTokens EncoderRun::advance_to(int block_index) {
    if (block_index < done_ || block_index > cfg_.depth) {
        throw ConfigError("tap index " + std::to_string(block_index) + " outside [" + std::to_string(done_) + ", " +
                          std::to_string(cfg_.depth) + "]");
    }
    while (done_ < block_index) {
        state_ = transformer_block(state_, params_.blocks[static_cast<size_t>(done_)], cfg_, done_ + 1);
        ++done_;
    }
    PatchTokens tap;
    tap.tokens = state_.tokens.detach();
    tap.grid = state_.grid;
    return tap;
}

std::vector<PatchTokens> encoder_forward(const Tensor& image, const ViTConfig& cfg, const EncoderParams& params,
                                         const TapSet& taps) {
    cfg.validate();
    taps.validate(cfg.depth);
    EncoderRun run(cfg, params, image);
    std::vector<PatchTokens> out;
    out.reserve(taps.indices.size());
    for (int idx : taps.indices) out.push_back(run.advance_to(idx));
    return out;
}

}  // namespace ban::encoder
