#include <doctest.h>

#include "ban/bridging.hpp"
#include "ban/error.hpp"
#include "oracle.hpp"

using namespace ban;
using namespace ban::bridging;

namespace {

PatchTokens random_tokens(GridSize grid, int64_t d, std::mt19937_64& rng) {
    PatchTokens t;
    t.grid = grid;
    t.tokens = Var(oracle::random_tensor({grid.count(), d}, rng, -2, 2));
    return t;
}

StageFeature random_stage(int64_t h, int64_t w, int64_t c, std::mt19937_64& rng) {
    return {Var(oracle::random_tensor({h, w, c}, rng)), 1};
}

}  // namespace

TEST_CASE("cross resample equals brute-force attention") {
    std::mt19937_64 rng(11);
    for (Affinity aff : {Affinity::kDot, Affinity::kCosine}) {
        for (int trial = 0; trial < 10; ++trial) {
            const int64_t nq = 1 + static_cast<int64_t>(rng() % 20), nk = 1 + static_cast<int64_t>(rng() % 12);
            const int64_t c = 1 + static_cast<int64_t>(rng() % 9);
            const Tensor q = oracle::random_tensor({nq, c}, rng, -3, 3);
            const Tensor k = oracle::random_tensor({nk, c}, rng, -3, 3);
            BridgeTrace trace;
            const Tensor out = cross_resample(Var(q), Var(k), {aff}, &trace).value();
            const auto kd = oracle::to_double(k);
            const auto ref = oracle::attention(oracle::to_double(q), kd, kd, nq, nk, c, c, static_cast<double>(c),
                                               aff == Affinity::kCosine);
            CHECK(oracle::max_abs(out, ref.out) < 1e-5);
            CHECK(oracle::max_abs(trace.attention, ref.probs) < 1e-6);
        }
    }
}

TEST_CASE("projection is layer norm then linear") {
    std::mt19937_64 rng(12);
    const BridgeParams p = BridgeParams::create(10, 6, BridgeInit::kSmallUniform, rng);
    p.ln_gain.node()->value = oracle::random_tensor({10}, rng);
    p.ln_bias.node()->value = oracle::random_tensor({10}, rng);
    const PatchTokens x = random_tokens({3, 2}, 10, rng);
    const Tensor got = project_and_normalize(x, p).value();
    const auto ln = oracle::layer_norm(oracle::to_double(x.tokens.value()), 6, 10, p.ln_gain.value(), p.ln_bias.value(), 1e-6);
    CHECK(oracle::max_abs(got, oracle::linear(ln, 6, 10, p.proj_weight.value(), p.proj_bias.value(), 6)) < 1e-5);
}

TEST_CASE("fusion adds resampled, resized projected and Bi-TAB features") {
    std::mt19937_64 rng(13);
    const BridgeParams p = BridgeParams::create(8, 4, BridgeInit::kSmallUniform, rng);
    const PatchTokens x = random_tokens({3, 3}, 8, rng);
    const StageFeature cm = random_stage(5, 6, 4, rng);
    BridgeTrace trace;
    const StageFeature out = bridge_forward(x, cm, p, {}, &trace);
    CHECK(out.map.shape() == Shape{5, 6, 4});
    const Tensor xt = trace.x_tilde_fm.reshaped({3, 3, 4});
    const auto resized = oracle::bilinear(xt, 5, 6);
    std::vector<double> ref(resized.size());
    for (size_t i = 0; i < ref.size(); ++i) {
        ref[i] = resized[i] + trace.x_cf[static_cast<int64_t>(i)] + cm.map.value()[static_cast<int64_t>(i)];
    }
    CHECK(oracle::max_abs(out.map.value(), ref) < 1e-5);
}

TEST_CASE("output shape always follows the Bi-TAB stage") {
    std::mt19937_64 rng(14);
    for (GridSize fm : {GridSize{16, 16}, GridSize{24, 24}, GridSize{2, 5}}) {
        for (int64_t side : {64, 32, 16, 8}) {
            const BridgeParams p = BridgeParams::create(6, 3, BridgeInit::kSmallUniform, rng);
            const StageFeature cm = random_stage(side, side, 3, rng);
            const StageFeature out = bridge_forward(random_tokens(fm, 6, rng), cm, p);
            CHECK(out.map.shape() == cm.map.shape());
        }
    }
}

TEST_CASE("attention rows are a distribution") {
    std::mt19937_64 rng(15);
    const BridgeParams p = BridgeParams::create(6, 5, BridgeInit::kSmallUniform, rng);
    BridgeTrace trace;
    bridge_forward(random_tokens({4, 4}, 6, rng), random_stage(8, 8, 5, rng), p, {}, &trace);
    for (int64_t r = 0; r < trace.attention.dim(0); ++r) {
        double s = 0;
        for (int64_t c = 0; c < trace.attention.dim(1); ++c) {
            CHECK(trace.attention.at(r, c) >= 0.0f);
            s += trace.attention.at(r, c);
        }
        CHECK(std::abs(s - 1.0) < 1e-6);
    }
}

TEST_CASE("zero-initialised projection leaves the Bi-TAB feature untouched") {
    std::mt19937_64 rng(16);
    const BridgeParams p = BridgeParams::create(6, 4, BridgeInit::kZero, rng);
    const StageFeature cm = random_stage(8, 8, 4, rng);
    const StageFeature out = bridge_forward(random_tokens({4, 4}, 6, rng), cm, p);
    CHECK(out.map.value() == cm.map.value());
}

TEST_CASE("parameter count formula") {
    std::mt19937_64 rng(17);
    for (int i = 0; i < 5; ++i) {
        const int64_t cf = 1 + static_cast<int64_t>(rng() % 300), cc = 1 + static_cast<int64_t>(rng() % 300);
        ParamList list;
        BridgeParams::create(cf, cc, BridgeInit::kSmallUniform, rng).append_to(list, "b.");
        CHECK(total_numel(list) == bridge_param_count(cf, cc));
        CHECK(bridge_param_count(cf, cc) == 2 * cf + cf * cc + cc);
    }
    CHECK(bridge_param_count(1024, 32) + bridge_param_count(1024, 64) + bridge_param_count(1024, 160) +
              bridge_param_count(1024, 256) ==
          532992);
}

TEST_CASE("shape mismatches are rejected") {
    std::mt19937_64 rng(18);
    const BridgeParams p = BridgeParams::create(6, 4, BridgeInit::kSmallUniform, rng);
    CHECK_THROWS_AS(bridge_forward(random_tokens({2, 2}, 7, rng), random_stage(4, 4, 4, rng), p), ShapeError);
    CHECK_THROWS_AS(bridge_forward(random_tokens({2, 2}, 6, rng), random_stage(4, 4, 5, rng), p), ShapeError);
    CHECK_THROWS_AS(parse_affinity("euclid"), ConfigError);
}
