#include <doctest.h>

#include "ban/encoder.hpp"
#include "ban/error.hpp"
#include "oracle.hpp"

using namespace ban;
using namespace ban::encoder;

namespace {

ViTConfig toy_vit() {
    ViTConfig c;
    c.patch_size = 4;
    c.embed_dim = 12;
    c.depth = 3;
    c.num_heads = 3;
    c.ffn_ratio = 2.0;
    c.pretrain_resolution = 16;
    return c;
}

// Pre-norm block written out per head and per token in double precision.
std::vector<double> block_oracle(const std::vector<double>& x, int64_t t, const BlockParams& p, const ViTConfig& cfg,
                                 std::vector<std::vector<double>>* probs) {
    const int64_t d = cfg.embed_dim, heads = cfg.num_heads, dh = d / heads, hid = cfg.hidden_dim();
    const auto h = oracle::layer_norm(x, t, d, p.ln1_gain.value(), p.ln1_bias.value(), cfg.ln_eps);
    const auto q = oracle::linear(h, t, d, p.q_weight.value(), p.q_bias.value(), d);
    const auto k = oracle::linear(h, t, d, p.k_weight.value(), p.k_bias.value(), d);
    const auto v = oracle::linear(h, t, d, p.v_weight.value(), p.v_bias.value(), d);
    std::vector<double> concat(static_cast<size_t>(t * d), 0.0);
    for (int64_t head = 0; head < heads; ++head) {
        std::vector<double> qh(t * dh), kh(t * dh), vh(t * dh);
        for (int64_t i = 0; i < t; ++i) {
            for (int64_t j = 0; j < dh; ++j) {
                qh[i * dh + j] = q[i * d + head * dh + j];
                kh[i * dh + j] = k[i * d + head * dh + j];
                vh[i * dh + j] = v[i * d + head * dh + j];
            }
        }
        const auto a = oracle::attention(qh, kh, vh, t, t, dh, dh, static_cast<double>(dh));
        if (probs) probs->push_back(a.probs);
        for (int64_t i = 0; i < t; ++i) {
            for (int64_t j = 0; j < dh; ++j) concat[i * d + head * dh + j] = a.out[i * dh + j];
        }
    }
    auto mid = oracle::linear(concat, t, d, p.out_weight.value(), p.out_bias.value(), d);
    for (size_t i = 0; i < mid.size(); ++i) mid[i] += x[i];
    const auto h2 = oracle::layer_norm(mid, t, d, p.ln2_gain.value(), p.ln2_bias.value(), cfg.ln_eps);
    auto f1 = oracle::linear(h2, t, d, p.fc1_weight.value(), p.fc1_bias.value(), hid);
    for (auto& e : f1) e = oracle::gelu(e);
    auto out = oracle::linear(f1, t, hid, p.fc2_weight.value(), p.fc2_bias.value(), d);
    for (size_t i = 0; i < out.size(); ++i) out[i] += mid[i];
    return out;
}

}  // namespace

TEST_CASE("patch embedding equals a per-patch dot product") {
    const ViTConfig cfg = toy_vit();
    const EncoderParams params = EncoderParams::random(cfg, 3);
    std::mt19937_64 rng(1);
    const Tensor img = oracle::random_tensor({8, 12, 3}, rng);
    const PatchTokens tok = patchify(img, cfg, params);
    CHECK(tok.grid == GridSize{2, 3});
    CHECK(tok.tokens.shape() == Shape{6, 12});
    const Tensor& w = params.patch_weight.value();
    double worst = 0;
    for (int64_t gy = 0; gy < 2; ++gy) {
        for (int64_t gx = 0; gx < 3; ++gx) {
            for (int64_t o = 0; o < 12; ++o) {
                double s = params.patch_bias.value()[o];
                for (int64_t py = 0; py < 4; ++py) {
                    for (int64_t px = 0; px < 4; ++px) {
                        for (int64_t c = 0; c < 3; ++c) {
                            s += img.at(gy * 4 + py, gx * 4 + px, c) * w[((py * 4 + px) * 3 + c) * 12 + o];
                        }
                    }
                }
                worst = std::max(worst, std::abs(s - tok.tokens.value().at(gy * 3 + gx, o)));
            }
        }
    }
    CHECK(worst < 1e-5);
    CHECK_THROWS_AS(patchify(oracle::random_tensor({10, 12, 3}, rng), cfg, params), ShapeError);
}

TEST_CASE("transformer block matches the per-head loop oracle") {
    const ViTConfig cfg = toy_vit();
    const EncoderParams params = EncoderParams::random(cfg, 5);
    std::mt19937_64 rng(2);
    for (bool with_cls : {true, false}) {
        PatchTokens x;
        x.grid = {2, 2};
        x.tokens = Var(oracle::random_tensor({4, 12}, rng, -2, 2));
        if (with_cls) x.class_token = Var(oracle::random_tensor({1, 12}, rng, -2, 2));
        std::vector<double> seq;
        if (with_cls) seq = oracle::to_double(x.class_token.value());
        const auto body = oracle::to_double(x.tokens.value());
        seq.insert(seq.end(), body.begin(), body.end());
        const int64_t t = with_cls ? 5 : 4;

        AttentionTrace trace;
        const PatchTokens y = transformer_block(x, params.blocks[0], cfg, 1, &trace);
        std::vector<std::vector<double>> probs;
        const auto ref = block_oracle(seq, t, params.blocks[0], cfg, &probs);

        Tensor got({t, 12});
        int64_t off = 0;
        if (with_cls) {
            REQUIRE(y.has_class_token());
            std::copy_n(y.class_token.value().data(), 12, got.data());
            off = 12;
        }
        std::copy_n(y.tokens.value().data(), 48, got.data() + off);
        CHECK(oracle::max_abs(got, ref) < 1e-5);
        REQUIRE(trace.probabilities.size() == 3);
        for (size_t h = 0; h < 3; ++h) {
            CHECK(oracle::max_abs(trace.probabilities[h], probs[h]) < 1e-6);
            for (int64_t r = 0; r < t; ++r) {
                double s = 0;
                for (int64_t c = 0; c < t; ++c) s += trace.probabilities[h].at(r, c);
                CHECK(s == doctest::Approx(1.0).epsilon(1e-6));
            }
        }
    }
}

TEST_CASE("position embedding interpolation") {
    std::mt19937_64 rng(3);
    const Tensor pos = oracle::random_tensor({1 + 16, 5}, rng);
    SUBCASE("native grid is a bit-identity") {
        CHECK(interpolate_pos_embed(pos, {4, 4}, {4, 4}, true) == pos);
    }
    SUBCASE("other grids follow the bilinear oracle and keep the class row") {
        const Tensor out = interpolate_pos_embed(pos, {4, 4}, {6, 3}, true);
        CHECK(out.shape() == Shape{1 + 18, 5});
        for (int c = 0; c < 5; ++c) CHECK(out.at(0, c) == pos.at(0, c));
        Tensor grid({4, 4, 5});
        std::copy_n(pos.data() + 5, 80, grid.data());
        const auto ref = oracle::bilinear(grid, 6, 3);
        Tensor body({6, 3, 5});
        std::copy_n(out.data() + 5, 90, body.data());
        CHECK(oracle::max_abs(body, ref) < 1e-6);
    }
    SUBCASE("row count mismatch") { CHECK_THROWS_AS(interpolate_pos_embed(pos, {4, 4}, {2, 2}, false), ShapeError); }
}

TEST_CASE("ARIS resize is an identity at the target and bilinear elsewhere") {
    std::mt19937_64 rng(4);
    const Tensor img = oracle::random_tensor({16, 16, 3}, rng, 0, 255);
    CHECK(aris_resize(img, 16) == img);
    const Tensor big = oracle::random_tensor({20, 20, 3}, rng, 0, 255);
    CHECK(oracle::max_abs(aris_resize(big, 16), oracle::bilinear(big, 16, 16)) < 1e-3);
}

TEST_CASE("tap placement") {
    CHECK(TapSet::evenly_spaced(24, 4).indices == std::vector<int>{6, 12, 18, 24});
    CHECK(TapSet::evenly_spaced(4, 4).indices == std::vector<int>{1, 2, 3, 4});
    CHECK(TapSet::evenly_spaced(12, 3).indices == std::vector<int>{4, 8, 12});
    CHECK_THROWS_AS(TapSet::evenly_spaced(3, 4), ConfigError);
    CHECK_THROWS_AS((TapSet{{0, 2}}.validate(4)), ConfigError);
    CHECK_THROWS_AS((TapSet{{2, 2}}.validate(4)), ConfigError);
    CHECK_THROWS_AS((TapSet{{1, 5}}.validate(4)), ConfigError);
}

TEST_CASE("encoder taps equal sequential block application and carry no graph") {
    const ViTConfig cfg = toy_vit();
    const EncoderParams params = EncoderParams::random(cfg, 9);
    for (const auto& p : params.named()) CHECK_FALSE(p.var.requires_grad());
    std::mt19937_64 rng(5);
    const Tensor img = oracle::random_tensor({16, 16, 3}, rng);
    const auto taps = encoder_forward(img, cfg, params, TapSet{{1, 3}});
    REQUIRE(taps.size() == 2);

    EncoderRun run(cfg, params, img);
    const PatchTokens t1 = run.advance_to(1);
    CHECK(t1.tokens.value() == taps[0].tokens.value());
    CHECK_FALSE(t1.has_class_token());
    CHECK_FALSE(t1.tokens.requires_grad());
    CHECK(run.advance_to(3).tokens.value() == taps[1].tokens.value());
    CHECK_THROWS_AS(run.advance_to(2), ConfigError);
    CHECK(taps[1].grid == GridSize{4, 4});
}

TEST_CASE("config validation") {
    ViTConfig c = toy_vit();
    c.num_heads = 5;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = toy_vit();
    c.pretrain_resolution = 18;
    CHECK_THROWS_AS(c.validate(), ConfigError);
}

TEST_CASE("checkpoint key schema") {
    const ViTConfig cfg = toy_vit();
    const auto named = EncoderParams::random(cfg, 1).named();
    std::vector<std::string> names;
    for (const auto& p : named) names.push_back(p.name);
    CHECK(std::find(names.begin(), names.end(), "encoder.patch_embed.weight") != names.end());
    CHECK(std::find(names.begin(), names.end(), "encoder.pos_embed") != names.end());
    CHECK(std::find(names.begin(), names.end(), "encoder.blocks.2.attn.q.weight") != names.end());
    CHECK(std::find(names.begin(), names.end(), "encoder.blocks.0.ffn.fc2.bias") != names.end());
}
