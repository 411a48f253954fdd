#pragma once

#include <cstdint>

#include "ban/autograd.hpp"

namespace ban {

struct GridSize {
    int64_t height = 0;
    int64_t width = 0;

    int64_t count() const { return height * width; }
    friend bool operator==(const GridSize&, const GridSize&) = default;
};

// Encoder tokens laid out on a 2-D patch grid. The optional class token is
// kept apart from the grid tokens so the grid can be reshaped spatially.
struct PatchTokens {
    Var tokens;       // [N, D], N = grid.count()
    Var class_token;  // [1, D] or undefined
    GridSize grid;

    int64_t count() const { return tokens.shape()[0]; }
    int64_t dim() const { return tokens.shape()[1]; }
    bool has_class_token() const { return class_token.defined(); }
};

// A Bi-TAB stage output, channels-last [H, W, C].
struct StageFeature {
    Var map;
    int stage_index = 0;

    int64_t height() const { return map.shape()[0]; }
    int64_t width() const { return map.shape()[1]; }
    int64_t channels() const { return map.shape()[2]; }
    GridSize grid() const { return {height(), width()}; }
};

}  // namespace ban
