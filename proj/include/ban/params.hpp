#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "ban/autograd.hpp"

namespace ban {

struct NamedParam {
    std::string name;
    Var var;
};

using ParamList = std::vector<NamedParam>;

int64_t total_numel(const ParamList& params);

// Parameter initializers. All draw from the caller's generator so a model is
// reproducible from a single seed.
Tensor init_normal(Shape shape, float stddev, std::mt19937_64& rng);
Tensor init_uniform(Shape shape, float bound, std::mt19937_64& rng);
// Kaiming-uniform style bound sqrt(6 / fan_in), scaled by `gain`.
Tensor init_fan_in(Shape shape, int64_t fan_in, std::mt19937_64& rng, float gain = 1.0f);

}  // namespace ban
