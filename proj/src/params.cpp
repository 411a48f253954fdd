#include "ban/params.hpp"

#include <cmath>

namespace ban {

int64_t total_numel(const ParamList& params) {
    int64_t n = 0;
    for (const auto& p : params) n += p.var.value().numel();
    return n;
}

Tensor init_normal(Shape shape, float stddev, std::mt19937_64& rng) {
    Tensor t(std::move(shape));
    std::normal_distribution<float> dist(0.0f, stddev);
    for (auto& v : t.values()) v = dist(rng);
    return t;
}

Tensor init_uniform(Shape shape, float bound, std::mt19937_64& rng) {
    Tensor t(std::move(shape));
    std::uniform_real_distribution<float> dist(-bound, bound);
    for (auto& v : t.values()) v = dist(rng);
    return t;
}

Tensor init_fan_in(Shape shape, int64_t fan_in, std::mt19937_64& rng, float gain) {
    const float bound = gain * std::sqrt(6.0f / static_cast<float>(fan_in > 0 ? fan_in : 1));
    return init_uniform(std::move(shape), bound, rng);
}

}  // namespace ban
