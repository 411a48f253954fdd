#pragma once

#include <cstdint>
#include <random>
#include <string>

#include "ban/features.hpp"
#include "ban/params.hpp"

// Bridging module: selects, aligns and injects frozen encoder tokens into a
// Bi-TAB stage feature.
//
//   x~fm = Linear(LN(x_fm))                          [N_f, C_c]
//   x_cf = softmax(x_cm · x~fmᵀ / sqrt(C_c)) · x~fm   [N_c, C_c]
//   x_bm = x_cf + Resize(x~fm) + x_cm                 [H_c, W_c, C_c]
//
// The attention matrix is materialized densely, so memory is O(N_c · N_f).
namespace ban::bridging {

enum class Affinity {
    kDot,     // scaled dot product
    kCosine,  // rows L2-normalized before the scaled dot product
};

Affinity parse_affinity(const std::string& name);
std::string to_string(Affinity affinity);

struct BridgeOptions {
    Affinity affinity = Affinity::kDot;
    float ln_eps = 1e-6f;
};

enum class BridgeInit {
    kSmallUniform,  // proj_weight ~ U(-b, b) with b = 1/sqrt(C_f)
    kZero,          // proj_weight = 0: the bridge starts as an exact no-op
};

struct BridgeParams {
    Var ln_gain;      // [C_f]
    Var ln_bias;      // [C_f]
    Var proj_weight;  // [C_f, C_c]
    Var proj_bias;    // [C_c]

    int64_t in_channels() const { return proj_weight.shape()[0]; }
    int64_t out_channels() const { return proj_weight.shape()[1]; }

    static BridgeParams create(int64_t in_channels, int64_t out_channels, BridgeInit init, std::mt19937_64& rng);
    void append_to(ParamList& out, const std::string& prefix) const;
};

// 2*C_f (LN affine) + C_f*C_c + C_c (linear).
int64_t bridge_param_count(int64_t in_channels, int64_t out_channels);

struct BridgeTrace {
    Tensor x_fm;        // [N_f, C_f]
    Tensor x_tilde_fm;  // [N_f, C_c]
    Tensor affinity;    // [N_c, N_f], already divided by sqrt(C_c)
    Tensor attention;   // [N_c, N_f]
    Tensor x_cf;        // [N_c, C_c]
    Tensor x_bm;        // [H_c, W_c, C_c]
    GridSize fm_grid;
    GridSize cm_grid;
};

// LN over each token's channels, then the C_f -> C_c projection.
Var project_and_normalize(const PatchTokens& x_fm, const BridgeParams& params, const BridgeOptions& options = {});

// Cross-attention resampling of x~fm onto the Bi-TAB query positions.
Var cross_resample(const Var& x_cm_tokens, const Var& x_tilde_fm, const BridgeOptions& options = {},
                   BridgeTrace* trace = nullptr);

// Three-way residual fusion; x_cm_map is [H_c, W_c, C_c].
Var fuse(const Var& x_cf, const Var& x_tilde_fm, GridSize fm_grid, const Var& x_cm_map);

StageFeature bridge_forward(const PatchTokens& x_fm, const StageFeature& x_cm, const BridgeParams& params,
                            const BridgeOptions& options = {}, BridgeTrace* trace = nullptr);

}  // namespace ban::bridging
