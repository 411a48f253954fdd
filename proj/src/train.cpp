#include "ban/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <set>
#include <sstream>

#include "ban/error.hpp"
#include "ban/ops.hpp"

namespace ban::train {

void OptimConfig::validate() const {
    if (!(base_lr > 0.0)) throw ConfigError("optim.base_lr must be > 0");
    if (!(head_lr_mult >= 1.0)) throw ConfigError("optim.head_lr_mult must be >= 1");
    if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
        throw ConfigError("optim betas must lie in [0, 1)");
    }
    if (!(eps > 0.0)) throw ConfigError("optim.eps must be > 0");
    if (!(weight_decay >= 0.0)) throw ConfigError("optim.weight_decay must be >= 0");
}

void ScheduleConfig::validate() const {
    if (max_iters < 1) throw ConfigError("schedule.max_iters must be >= 1");
    if (!(power > 0.0)) throw ConfigError("schedule.power must be > 0");
    if (!(min_lr >= 0.0)) throw ConfigError("schedule.min_lr must be >= 0");
}

double poly_lr(int64_t iter, int64_t max_iters, double base_lr, double power, double min_lr) {
    if (max_iters <= 0) throw ConfigError("poly_lr: max_iters must be positive");
    if (iter < 0 || iter > max_iters) {
        throw ConfigError("poly_lr: iter " + std::to_string(iter) + " outside [0, " + std::to_string(max_iters) + "]");
    }
    if (iter == 0) return base_lr;
    const double frac = 1.0 - static_cast<double>(iter) / static_cast<double>(max_iters);
    return min_lr + (base_lr - min_lr) * std::pow(frac, power);
}

std::vector<ParamGroup> make_param_groups(const BanModel& model, double head_lr_mult) {
    ParamList head = model.head_params();
    std::set<std::string> head_names;
    for (const auto& p : head) head_names.insert(p.name);
    ParamList rest;
    for (auto& p : model.learnable()) {
        if (!head_names.count(p.name)) rest.push_back(p);
    }
    return {{"adapter", std::move(rest), 1.0}, {"head", std::move(head), head_lr_mult}};
}

AdamW::AdamW(std::vector<ParamGroup> groups, const OptimConfig& cfg) : groups_(std::move(groups)), cfg_(cfg) {
    cfg_.validate();
    for (const auto& g : groups_) {
        std::vector<Tensor> m, v;
        for (const auto& p : g.params) {
            if (!p.var.requires_grad()) throw ConfigError("optimizer given frozen parameter " + p.name);
            m.push_back(Tensor::zeros_like(p.var.value()));
            v.push_back(Tensor::zeros_like(p.var.value()));
        }
        m_.push_back(std::move(m));
        v_.push_back(std::move(v));
    }
}

void AdamW::zero_grad() {
    for (auto& g : groups_) {
        for (auto& p : g.params) p.var.zero_grad();
    }
}

void AdamW::step(double lr) {
    ++t_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    for (size_t gi = 0; gi < groups_.size(); ++gi) {
        const double glr = lr * groups_[gi].lr_mult;
        for (size_t pi = 0; pi < groups_[gi].params.size(); ++pi) {
            Var var = groups_[gi].params[pi].var;
            const Tensor& grad = var.grad();
            if (grad.empty()) continue;
            Tensor& w = var.mutable_value();
            float* m = m_[gi][pi].data();
            float* v = v_[gi][pi].data();
            for (int64_t i = 0; i < w.numel(); ++i) {
                const double g = grad[i];
                m[i] = static_cast<float>(cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * g);
                v[i] = static_cast<float>(cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * g * g);
                const double mhat = m[i] / bc1;
                const double vhat = v[i] / bc2;
                double p = w[i];
                p -= glr * cfg_.weight_decay * p;
                p -= glr * mhat / (std::sqrt(vhat) + cfg_.eps);
                w[i] = static_cast<float>(p);
            }
        }
    }
}

Tensor model_input(const Tensor& image) { return data::normalize(image, data::Normalization{}); }

namespace {

std::string diagnostics(const BanModel& model, const std::vector<data::Sample>& batch, size_t bad,
                        double loss) {
    std::ostringstream os;
    os << "non-finite loss " << loss << " on sample '" << batch[bad].name << "' (batch position " << bad << ")";
    for (const auto& p : model.learnable()) {
        if (!p.var.value().all_finite()) os << "; parameter " << p.name << " holds non-finite values";
    }
    if (!batch[bad].t1.all_finite() || !batch[bad].t2.all_finite()) os << "; input raster is non-finite";
    return os.str();
}

}  // namespace

StepStats train_step(const BanModel& model, const std::vector<data::Sample>& batch, AdamW& opt, double lr) {
    if (batch.empty()) throw DataError("train_step: empty batch");
    opt.zero_grad();
    const float inv = 1.0f / static_cast<float>(batch.size());
    double total = 0.0;
    for (size_t i = 0; i < batch.size(); ++i) {
        const auto& s = batch[i];
        Var loss;
        try {
            const auto logits = ban_forward(model, model_input(s.t1), model_input(s.t2));
            const bool sem = logits.semantic() && s.sem1 && s.sem2;
            loss = metrics::total_loss(logits, s.label, sem ? &*s.sem1 : nullptr, sem ? &*s.sem2 : nullptr);
        } catch (const NumericError& e) {
            opt.zero_grad();
            throw NumericError(std::string(e.what()) + "; " + diagnostics(model, batch, i, std::nan("")));
        }
        const double value = loss.value()[0];
        if (!std::isfinite(value)) {
            opt.zero_grad();
            throw NumericError(diagnostics(model, batch, i, value));
        }
        total += value;
        ops::scale(loss, inv).backward();
    }
    opt.step(lr);
    return {total / static_cast<double>(batch.size()), lr};
}

LogitFn model_logits(const BanModel& model) {
    return [&model](const Tensor& x1, const Tensor& x2) {
        return ban_forward(model, model_input(x1), model_input(x2)).change.value();
    };
}

std::vector<int64_t> window_starts(int64_t size, int64_t window, int64_t stride) {
    if (window < 1 || window > size) {
        throw ShapeError("window " + std::to_string(window) + " does not fit extent " + std::to_string(size));
    }
    if (stride < 1 || stride > window) throw ConfigError("stride must lie in [1, window]");
    std::vector<int64_t> out;
    for (int64_t s = 0; s + window <= size; s += stride) out.push_back(s);
    if (out.back() + window < size) out.push_back(size - window);
    return out;
}

namespace {

Tensor crop(const Tensor& img, int64_t y0, int64_t x0, int64_t h, int64_t w) {
    const int64_t width = img.dim(1), c = img.dim(2);
    Tensor out({h, w, c});
    for (int64_t y = 0; y < h; ++y) {
        std::copy_n(img.data() + ((y0 + y) * width + x0) * c, w * c, out.data() + y * w * c);
    }
    return out;
}

}  // namespace

WindowResult sliding_window_infer(const LogitFn& fn, const Tensor& x1, const Tensor& x2, int64_t window,
                                  int64_t stride, const std::vector<size_t>* order) {
    if (x1.rank() != 3 || x1.shape() != x2.shape()) {
        throw ShapeError("sliding window needs two equal HxWxC rasters, got " + shape_str(x1.shape()) + " and " +
                         shape_str(x2.shape()));
    }
    const int64_t h = x1.dim(0), w = x1.dim(1);
    const auto ys = window_starts(h, window, stride);
    const auto xs = window_starts(w, window, stride);
    std::vector<std::pair<int64_t, int64_t>> origins;
    for (int64_t y : ys) {
        for (int64_t x : xs) origins.emplace_back(y, x);
    }
    std::vector<size_t> seq(origins.size());
    for (size_t i = 0; i < seq.size(); ++i) seq[i] = i;
    if (order) {
        if (order->size() != seq.size() || !std::is_permutation(order->begin(), order->end(), seq.begin())) {
            throw ConfigError("window order is not a permutation of the window set");
        }
        seq = *order;
    }

    std::vector<double> acc;
    std::vector<int32_t> cover(static_cast<size_t>(h * w), 0);
    int64_t k = 0;
    for (size_t idx : seq) {
        const auto [y0, x0] = origins[idx];
        const Tensor out = fn(crop(x1, y0, x0, window, window), crop(x2, y0, x0, window, window));
        if (out.rank() != 3 || out.dim(0) != window || out.dim(1) != window) {
            throw ShapeError("window logits " + shape_str(out.shape()) + " do not match window " +
                             std::to_string(window));
        }
        if (k == 0) {
            k = out.dim(2);
            acc.assign(static_cast<size_t>(h * w * k), 0.0);
        }
        for (int64_t y = 0; y < window; ++y) {
            for (int64_t x = 0; x < window; ++x) {
                const int64_t p = (y0 + y) * w + (x0 + x);
                ++cover[static_cast<size_t>(p)];
                for (int64_t c = 0; c < k; ++c) acc[static_cast<size_t>(p * k + c)] += out[(y * window + x) * k + c];
            }
        }
    }
    WindowResult res;
    res.logits = Tensor({h, w, k});
    for (int64_t p = 0; p < h * w; ++p) {
        const int32_t n = cover[static_cast<size_t>(p)];
        if (n == 0) {
            throw Error("sliding window left pixel (" + std::to_string(p / w) + ", " + std::to_string(p % w) +
                        ") uncovered");
        }
        for (int64_t c = 0; c < k; ++c) {
            res.logits[p * k + c] = static_cast<float>(acc[static_cast<size_t>(p * k + c)] / n);
        }
    }
    res.mask = metrics::argmax(res.logits);
    return res;
}

metrics::LabelMap predict_change(const BanModel& model, const Tensor& t1, const Tensor& t2, const InferConfig& infer) {
    const int64_t side = std::min(t1.dim(0), t1.dim(1));
    if (infer.window <= 0 || (infer.window >= t1.dim(0) && infer.window >= t1.dim(1))) {
        return metrics::argmax(model_logits(model)(t1, t2));
    }
    const int64_t window = std::min(infer.window, side);
    const int64_t stride = infer.stride > 0 ? std::min(infer.stride, window) : std::max<int64_t>(1, window / 2);
    return sliding_window_infer(model_logits(model), t1, t2, window, stride).mask;
}

metrics::ConfusionCounts evaluate(const BanModel& model, const std::vector<data::SampleRecord>& records,
                                  data::LabelMode mode, const InferConfig& infer) {
    const bool scd = model.bitab_spec.head_kind == bitab::HeadKind::kSemantic;
    metrics::ConfusionCounts counts(scd ? model.bitab_spec.num_semantic_classes : 0);
    for (const auto& r : records) {
        const data::Sample s = data::load_sample(r, mode);
        if (scd && s.sem1 && s.sem2) {
            const auto logits = ban_forward(model, model_input(s.t1), model_input(s.t2));
            metrics::confusion_update(counts, metrics::argmax(logits.change.value()), s.label);
            metrics::seg_confusion_update(counts, metrics::argmax(logits.seg1.value()), *s.sem1);
            metrics::seg_confusion_update(counts, metrics::argmax(logits.seg2.value()), *s.sem2);
        } else {
            metrics::confusion_update(counts, predict_change(model, s.t1, s.t2, infer), s.label);
        }
    }
    return counts;
}

FpsResult fps_benchmark(const std::function<void(const Tensor&, const Tensor&)>& fn, int64_t resolution,
                        int64_t n_images, int64_t warmup, uint64_t seed) {
    if (n_images <= 0) throw ConfigError("fps benchmark needs at least one image");
    if (resolution <= 0) throw ConfigError("fps benchmark resolution must be positive");
    std::mt19937_64 rng(seed);
    const Tensor a = init_uniform({resolution, resolution, 3}, 127.5f, rng);
    const Tensor b = init_uniform({resolution, resolution, 3}, 127.5f, rng);
    Tensor x1 = a, x2 = b;
    for (auto& v : x1.values()) v += 127.5f;
    for (auto& v : x2.values()) v += 127.5f;
    for (int64_t i = 0; i < warmup; ++i) fn(x1, x2);
    const auto start = std::chrono::steady_clock::now();
    for (int64_t i = 0; i < n_images; ++i) fn(x1, x2);
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return {secs > 0 ? static_cast<double>(n_images) / secs : 0.0, secs, n_images};
}

}  // namespace ban::train
