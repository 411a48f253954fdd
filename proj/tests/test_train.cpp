#include <doctest.h>

#include <cmath>

#include "ban/checkpoint.hpp"
#include "ban/error.hpp"
#include "ban/run.hpp"
#include "ban/train.hpp"
#include "oracle.hpp"
#include "toy.hpp"

using namespace ban;
using namespace ban::train;

namespace {

// Position-dependent logits: each pixel mixes its inputs with the window mean,
// so stitching errors show up as value differences.
Tensor window_logits(const Tensor& a, const Tensor& b) {
    const int64_t h = a.dim(0), w = a.dim(1);
    double mean = 0;
    for (float v : a.values()) mean += v;
    mean /= static_cast<double>(a.numel());
    Tensor out({h, w, 3});
    for (int64_t y = 0; y < h; ++y) {
        for (int64_t x = 0; x < w; ++x) {
            out.at(y, x, 0) = a.at(y, x, 0) - b.at(y, x, 1);
            out.at(y, x, 1) = static_cast<float>(mean) + 0.01f * static_cast<float>(y * w + x);
            out.at(y, x, 2) = b.at(y, x, 2) * 0.5f;
        }
    }
    return out;
}

}  // namespace

TEST_CASE("poly schedule") {
    CHECK(poly_lr(0, 100, 1e-4, 1.0, 0.0) == 1e-4);
    CHECK(poly_lr(50, 100, 1e-4, 1.0, 0.0) == doctest::Approx(5e-5));
    CHECK(poly_lr(100, 100, 1e-4, 1.0, 1e-6) == doctest::Approx(1e-6));
    CHECK(poly_lr(25, 100, 1.0, 2.0, 0.0) == doctest::Approx(0.5625));
    double prev = 1.0;
    for (int64_t i = 0; i <= 100; ++i) {
        const double lr = poly_lr(i, 100, 1.0, 0.9, 0.0);
        CHECK(lr <= prev);
        prev = lr;
    }
    CHECK_THROWS_AS(poly_lr(0, 0, 1.0, 1.0, 0.0), ConfigError);
    CHECK_THROWS_AS(poly_lr(101, 100, 1.0, 1.0, 0.0), ConfigError);
}

TEST_CASE("AdamW matches a scalar reference over several steps") {
    Var p(Tensor({3}, {0.5f, -1.0f, 2.0f}), true);
    OptimConfig cfg;
    cfg.weight_decay = 0.1;
    AdamW opt({{"g", {{"p", p}}, 3.0}}, cfg);
    std::vector<double> ref = {0.5, -1.0, 2.0}, m(3, 0.0), v(3, 0.0);
    const double grads[4][3] = {{0.1, -0.2, 0.3}, {-0.4, 0.5, 0.0}, {1.0, 1.0, -1.0}, {0.01, 0.0, 2.0}};
    for (int t = 1; t <= 4; ++t) {
        p.node()->grad = Tensor({3}, {float(grads[t - 1][0]), float(grads[t - 1][1]), float(grads[t - 1][2])});
        const double lr = 1e-2 * 3.0;
        opt.step(1e-2);
        for (int i = 0; i < 3; ++i) {
            const double g = static_cast<float>(grads[t - 1][i]);
            ref[i] -= lr * 0.1 * ref[i];
            m[i] = 0.9 * m[i] + 0.1 * g;
            v[i] = 0.999 * v[i] + 0.001 * g * g;
            const double mh = m[i] / (1 - std::pow(0.9, t)), vh = v[i] / (1 - std::pow(0.999, t));
            ref[i] -= lr * mh / (std::sqrt(vh) + 1e-8);
            ref[i] = static_cast<float>(ref[i]);
        }
        CHECK(oracle::max_abs(p.value(), ref) < 1e-6);
    }
    CHECK(opt.steps() == 4);
}

TEST_CASE("window origins cover the extent") {
    CHECK(window_starts(10, 4, 2) == std::vector<int64_t>{0, 2, 4, 6});
    CHECK(window_starts(11, 4, 3) == std::vector<int64_t>{0, 3, 6, 7});
    CHECK(window_starts(8, 8, 4) == std::vector<int64_t>{0});
    CHECK_THROWS_AS(window_starts(8, 9, 4), ShapeError);
    CHECK_THROWS_AS(window_starts(8, 4, 5), ConfigError);
}

TEST_CASE("sliding window equals the explicit accumulation oracle") {
    std::mt19937_64 rng(51);
    for (auto [h, w, win, stride] : std::vector<std::array<int64_t, 4>>{{16, 16, 8, 4}, {13, 19, 6, 5}, {9, 9, 9, 3}}) {
        const Tensor a = oracle::random_tensor({h, w, 3}, rng), b = oracle::random_tensor({h, w, 3}, rng);
        const WindowResult r = sliding_window_infer(window_logits, a, b, win, stride);
        CHECK(r.logits.shape() == Shape{h, w, 3});
        CHECK(oracle::max_abs(r.logits, oracle::window_average(window_logits, a, b, win, stride)) < 1e-6);
        CHECK(r.mask == metrics::argmax(r.logits));
    }
}

TEST_CASE("window equal to the image is a single pass") {
    std::mt19937_64 rng(52);
    const Tensor a = oracle::random_tensor({12, 12, 3}, rng), b = oracle::random_tensor({12, 12, 3}, rng);
    CHECK(sliding_window_infer(window_logits, a, b, 12, 6).logits == window_logits(a, b));
}

TEST_CASE("pixel-local predictors stitch exactly and order does not matter") {
    std::mt19937_64 rng(53);
    const Tensor a = oracle::random_tensor({14, 10, 3}, rng), b = oracle::random_tensor({14, 10, 3}, rng);
    auto local = [](const Tensor& x, const Tensor& y) {
        Tensor out({x.dim(0), x.dim(1), 2});
        for (int64_t p = 0; p < x.dim(0) * x.dim(1); ++p) {
            out[p * 2] = x[p * 3] * 2.0f;
            out[p * 2 + 1] = y[p * 3 + 1] - x[p * 3 + 2];
        }
        return out;
    };
    const WindowResult r = sliding_window_infer(local, a, b, 6, 4);
    CHECK(oracle::max_abs(r.logits, oracle::to_double(local(a, b))) < 1e-5);

    const size_t n = window_starts(14, 6, 4).size() * window_starts(10, 6, 4).size();
    std::vector<size_t> order(n);
    for (size_t i = 0; i < n; ++i) order[i] = n - 1 - i;
    const WindowResult fwd = sliding_window_infer(window_logits, a, b, 6, 4);
    const WindowResult rev = sliding_window_infer(window_logits, a, b, 6, 4, &order);
    CHECK(oracle::max_abs(fwd.logits, oracle::to_double(rev.logits)) < 1e-6);
    order.pop_back();
    CHECK_THROWS_AS(sliding_window_infer(window_logits, a, b, 6, 4, &order), ConfigError);
}

TEST_CASE("tile counts merge to whole-image counts") {
    std::mt19937_64 rng(54);
    metrics::LabelMap pred(16, 16), label(16, 16);
    for (size_t i = 0; i < pred.values.size(); ++i) {
        pred.values[i] = static_cast<int32_t>(rng() % 2);
        label.values[i] = static_cast<int32_t>(rng() % 2);
    }
    metrics::ConfusionCounts whole, merged;
    metrics::confusion_update(whole, pred, label);
    for (int t = 0; t < 4; ++t) {
        metrics::LabelMap tp(8, 8), tl(8, 8);
        for (int64_t y = 0; y < 8; ++y) {
            for (int64_t x = 0; x < 8; ++x) {
                tp.at(y, x) = pred.at(y + 8 * (t / 2), x + 8 * (t % 2));
                tl.at(y, x) = label.at(y + 8 * (t / 2), x + 8 * (t % 2));
            }
        }
        metrics::ConfusionCounts c;
        metrics::confusion_update(c, tp, tl);
        merged = metrics::merge_counts(merged, c);
    }
    CHECK(merged.tp == whole.tp);
    CHECK(merged.fp == whole.fp);
    CHECK(merged.fn == whole.fn);
    CHECK(merged.tn == whole.tn);
    CHECK(merged.pixel_total == whole.pixel_total);
}

TEST_CASE("throughput benchmark") {
    int calls = 0;
    const auto r = fps_benchmark([&](const Tensor&, const Tensor&) { ++calls; }, 8, 3, 2);
    CHECK(calls == 5);
    CHECK(r.images == 3);
    CHECK_THROWS_AS(fps_benchmark([](const Tensor&, const Tensor&) {}, 8, 0), ConfigError);
}

TEST_CASE("non-finite inputs abort the step with a diagnosis") {
    const BanModel m = BanModel::create(toy::tiny_config(), 1);
    AdamW opt(make_param_groups(m, 10.0), {});
    std::mt19937_64 rng(55);
    data::Sample s;
    s.name = "broken";
    s.t1 = toy::random_image(16, 16, rng);
    s.t2 = toy::random_image(16, 16, rng);
    s.t1[5] = std::nanf("");
    s.label = metrics::LabelMap(16, 16);
    const std::string sha = checkpoint::sha256_hex(m.learnable());
    try {
        train_step(m, {s}, opt, 1e-3);
        FAIL("expected NumericError");
    } catch (const NumericError& e) {
        CHECK(std::string(e.what()).find("broken") != std::string::npos);
        CHECK(std::string(e.what()).find("input raster is non-finite") != std::string::npos);
    }
    CHECK(checkpoint::sha256_hex(m.learnable()) == sha);
    CHECK(opt.steps() == 0);
}

TEST_CASE("checkpoints round-trip learnable weights") {
    const auto dir = toy::scratch("ckpt");
    const BanModel a = BanModel::create(toy::tiny_config(), 1);
    const BanModel b = BanModel::create(toy::tiny_config(), 2);
    CHECK_FALSE(checkpoint::sha256_hex(a.learnable()) == checkpoint::sha256_hex(b.learnable()));
    run::save_weights(dir / "w.safetensors", a, {{"iter", "3"}});
    run::load_weights(dir / "w.safetensors", b);
    CHECK(checkpoint::sha256_hex(a.learnable()) == checkpoint::sha256_hex(b.learnable()));
    checkpoint::Metadata meta;
    checkpoint::load(dir / "w.safetensors", &meta);
    CHECK(meta.at("iter") == "3");

    ModelConfig other = toy::tiny_config();
    other.bitab.head_channels = 6;
    const BanModel c = BanModel::create(other, 0);
    CHECK_THROWS_AS(run::load_weights(dir / "w.safetensors", c), CheckpointError);
}

TEST_CASE("config parsing is strict") {
    nlohmann::json j = {{"encoder", {{"depth", 2}, {"embed_dim", 16}, {"num_heads", 2}, {"patch_size", 4},
                                     {"pretrain_resolution", 16}}},
                        {"bitab", {{"stage_channels", {4, 8}}, {"stage_strides", {1, 2}}}},
                        {"data", {{"root", "somewhere"}}}};
    const run::RunConfig cfg = run::parse_config(j);
    CHECK(cfg.model.vit.depth == 2);
    CHECK(cfg.model.bitab.stage_channels == std::vector<int64_t>{4, 8});
    CHECK(run::parse_config(run::to_json(cfg)).model.vit.embed_dim == 16);

    nlohmann::json bad = j;
    bad["encoder"]["dept"] = 3;
    try {
        run::parse_config(bad);
        FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
        CHECK(std::string(e.what()).find("dept") != std::string::npos);
    }
    bad = j;
    bad["optim"] = {{"base_lr", -1.0}};
    CHECK_THROWS_AS(run::parse_config(bad), ConfigError);
}
