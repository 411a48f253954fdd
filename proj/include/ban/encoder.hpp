#pragma once

#include <cstdint>
#include <vector>

#include "ban/features.hpp"
#include "ban/params.hpp"

// Frozen siamese ViT image encoder producing a ladder of tapped block outputs.
namespace ban::encoder {

struct ViTConfig {
    int64_t patch_size = 14;
    int64_t embed_dim = 1024;
    int64_t depth = 24;
    int64_t num_heads = 16;
    double ffn_ratio = 4.0;
    int64_t pretrain_resolution = 336;
    bool use_class_token = true;
    int64_t in_channels = 3;
    float ln_eps = 1e-5f;

    int64_t head_dim() const { return embed_dim / num_heads; }
    int64_t hidden_dim() const { return static_cast<int64_t>(static_cast<double>(embed_dim) * ffn_ratio); }
    GridSize native_grid() const {
        return {pretrain_resolution / patch_size, pretrain_resolution / patch_size};
    }
    // Throws ConfigError on the first violated invariant.
    void validate() const;
};

// Block indices (1-based) whose outputs feed the bridging modules.
struct TapSet {
    std::vector<int> indices;

    void validate(int64_t depth) const;
    // `count` evenly spaced indices ending at `depth`, e.g. depth 24, count 4 -> 6,12,18,24.
    static TapSet evenly_spaced(int64_t depth, int64_t count);
};

struct BlockParams {
    Var ln1_gain, ln1_bias;
    // Per-head projections are column blocks of these [D, D] matrices:
    // head i owns columns [i*D/h, (i+1)*D/h).
    Var q_weight, q_bias, k_weight, k_bias, v_weight, v_bias;
    Var out_weight, out_bias;
    Var ln2_gain, ln2_bias;
    Var fc1_weight, fc1_bias, fc2_weight, fc2_bias;

    void append_to(ParamList& out, const std::string& prefix) const;
};

struct EncoderParams {
    Var patch_weight;  // [P, P, C_in, D]
    Var patch_bias;    // [D]
    Var class_token;   // [1, D] when the config uses one
    Var pos_embed;     // [(1 +) grid^2, D], class-token row first
    std::vector<BlockParams> blocks;

    ParamList named() const;

    // Random weights from `seed` (toy or test encoders). Never trainable.
    static EncoderParams random(const ViTConfig& cfg, uint64_t seed);
};

// Bilinear resize to target x target (the ARIS encoder input). Identity when
// the raster is already target x target.
Tensor aris_resize(const Tensor& image, int64_t target);

// Non-overlapping P x P patch embedding; no position embedding.
PatchTokens patchify(const Tensor& image, const ViTConfig& cfg, const EncoderParams& params);

// Per-channel bilinear interpolation of a positional table laid out on
// `from`; the class-token row (when `has_class_token`) passes through.
Tensor interpolate_pos_embed(const Tensor& pos, GridSize from, GridSize to, bool has_class_token);

struct AttentionTrace {
    std::vector<Tensor> probabilities;  // one [T, T] per head, T includes the class token
};

// Pre-norm block: x' = MSA(LN(x)) + x ; out = FFN(LN(x')) + x'.
// `block_index` is only used for diagnostics.
PatchTokens transformer_block(const PatchTokens& x, const BlockParams& params, const ViTConfig& cfg,
                              int block_index = 0, AttentionTrace* trace = nullptr);

// Runs the encoder over one image in tap-sized chunks. Created per phase so
// the two temporal images share the same (immutable) parameter object.
class EncoderRun {
public:
    EncoderRun(const ViTConfig& cfg, const EncoderParams& params, const Tensor& image);

    // Advances through blocks up to and including `block_index` (1-based) and
    // returns that block's output with the class token stripped.
    PatchTokens advance_to(int block_index);
    int blocks_done() const { return done_; }

private:
    const ViTConfig& cfg_;
    const EncoderParams& params_;
    PatchTokens state_;
    int done_ = 0;
};

// Tapped block outputs (class token stripped), one per tap. The image must
// already be at the resolution the caller wants the encoder to see.
std::vector<PatchTokens> encoder_forward(const Tensor& image, const ViTConfig& cfg, const EncoderParams& params,
                                         const TapSet& taps);

}  // namespace ban::encoder
