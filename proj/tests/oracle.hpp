#pragma once

// Brute-force double-precision references. Deliberately loop-based and free of
// the library's kernels so they can serve as independent oracles.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <vector>

#include "ban/autograd.hpp"
#include "ban/metrics.hpp"
#include "ban/tensor.hpp"

namespace oracle {

using ban::Tensor;

inline Tensor random_tensor(ban::Shape shape, std::mt19937_64& rng, float lo = -1.0f, float hi = 1.0f) {
    std::uniform_real_distribution<float> u(lo, hi);
    Tensor t(std::move(shape));
    for (auto& v : t.values()) v = u(rng);
    return t;
}

// Half-pixel bilinear sample along one axis; negative sources clamp to 0.
inline void axis(int64_t o, int64_t in, int64_t out, int64_t& i0, int64_t& i1, double& f) {
    double s = (o + 0.5) * static_cast<double>(in) / static_cast<double>(out) - 0.5;
    if (s < 0) s = 0;
    i0 = static_cast<int64_t>(std::floor(s));
    if (i0 > in - 1) i0 = in - 1;
    i1 = std::min(i0 + 1, in - 1);
    f = s - static_cast<double>(i0);
}

inline std::vector<double> bilinear(const Tensor& x, int64_t oh, int64_t ow) {
    const int64_t h = x.dim(0), w = x.dim(1), c = x.dim(2);
    std::vector<double> out(static_cast<size_t>(oh * ow * c));
    for (int64_t y = 0; y < oh; ++y) {
        int64_t y0, y1;
        double fy;
        axis(y, h, oh, y0, y1, fy);
        for (int64_t xx = 0; xx < ow; ++xx) {
            int64_t x0, x1;
            double fx;
            axis(xx, w, ow, x0, x1, fx);
            for (int64_t ch = 0; ch < c; ++ch) {
                auto at = [&](int64_t yy, int64_t xq) { return static_cast<double>(x[(yy * w + xq) * c + ch]); };
                out[static_cast<size_t>((y * ow + xx) * c + ch)] =
                    (1 - fy) * ((1 - fx) * at(y0, x0) + fx * at(y0, x1)) + fy * ((1 - fx) * at(y1, x0) + fx * at(y1, x1));
            }
        }
    }
    return out;
}

// Row-wise layer norm of an [N, D] table.
inline std::vector<double> layer_norm(const std::vector<double>& x, int64_t n, int64_t d, const Tensor& g,
                                      const Tensor& b, double eps) {
    std::vector<double> out(x.size());
    for (int64_t i = 0; i < n; ++i) {
        double mean = 0, var = 0;
        for (int64_t j = 0; j < d; ++j) mean += x[i * d + j];
        mean /= d;
        for (int64_t j = 0; j < d; ++j) var += (x[i * d + j] - mean) * (x[i * d + j] - mean);
        var /= d;
        for (int64_t j = 0; j < d; ++j) out[i * d + j] = (x[i * d + j] - mean) / std::sqrt(var + eps) * g[j] + b[j];
    }
    return out;
}

// [N, Cin] x W[Cin, Cout] + b.
inline std::vector<double> linear(const std::vector<double>& x, int64_t n, int64_t cin, const Tensor& w,
                                  const Tensor& b, int64_t cout) {
    std::vector<double> out(static_cast<size_t>(n * cout));
    for (int64_t i = 0; i < n; ++i) {
        for (int64_t o = 0; o < cout; ++o) {
            double s = b.empty() ? 0.0 : b[o];
            for (int64_t k = 0; k < cin; ++k) s += x[i * cin + k] * w[k * cout + o];
            out[i * cout + o] = s;
        }
    }
    return out;
}

// sum(a * w) accumulated in double (no rounding of the scalar to float).
inline double dot(const Tensor& a, const Tensor& w) {
    double s = 0;
    for (int64_t i = 0; i < a.numel(); ++i) s += static_cast<double>(a[i]) * w[i];
    return s;
}

inline std::vector<double> to_double(const Tensor& t) { return {t.values().begin(), t.values().end()}; }

// softmax(q k^T / sqrt(d)) v computed one query at a time.
struct Attention {
    std::vector<double> out;    // [Nq, dv]
    std::vector<double> probs;  // [Nq, Nk]
};

inline Attention attention(const std::vector<double>& q, const std::vector<double>& k, const std::vector<double>& v,
                           int64_t nq, int64_t nk, int64_t d, int64_t dv, double scale_dim, bool cosine = false) {
    Attention a;
    a.out.assign(static_cast<size_t>(nq * dv), 0.0);
    a.probs.assign(static_cast<size_t>(nq * nk), 0.0);
    auto norm = [&](const std::vector<double>& m, int64_t r) {
        double s = 0;
        for (int64_t j = 0; j < d; ++j) s += m[r * d + j] * m[r * d + j];
        return std::max(std::sqrt(s), 1e-12);
    };
    for (int64_t i = 0; i < nq; ++i) {
        std::vector<double> logit(static_cast<size_t>(nk));
        double mx = -1e300;
        for (int64_t t = 0; t < nk; ++t) {
            double s = 0;
            for (int64_t j = 0; j < d; ++j) s += q[i * d + j] * k[t * d + j];
            if (cosine) s /= norm(q, i) * norm(k, t);
            logit[t] = s / std::sqrt(scale_dim);
            mx = std::max(mx, logit[t]);
        }
        double z = 0;
        for (int64_t t = 0; t < nk; ++t) z += std::exp(logit[t] - mx);
        for (int64_t t = 0; t < nk; ++t) {
            const double p = std::exp(logit[t] - mx) / z;
            a.probs[i * nk + t] = p;
            for (int64_t j = 0; j < dv; ++j) a.out[i * dv + j] += p * v[t * dv + j];
        }
    }
    return a;
}

// Direct convolution of [H, W, Cin] with w[k, k, Cin, Cout], zero padding.
inline std::vector<double> conv2d(const Tensor& x, const Tensor& w, const Tensor& b, int stride, int pad,
                                  int64_t& oh, int64_t& ow) {
    const int64_t h = x.dim(0), wd = x.dim(1), cin = x.dim(2);
    const int64_t k = w.dim(0), cout = w.dim(3);
    oh = (h + 2 * pad - k) / stride + 1;
    ow = (wd + 2 * pad - k) / stride + 1;
    std::vector<double> out(static_cast<size_t>(oh * ow * cout));
    for (int64_t y = 0; y < oh; ++y) {
        for (int64_t xx = 0; xx < ow; ++xx) {
            for (int64_t o = 0; o < cout; ++o) {
                double s = b.empty() ? 0.0 : b[o];
                for (int64_t ky = 0; ky < k; ++ky) {
                    for (int64_t kx = 0; kx < k; ++kx) {
                        const int64_t iy = y * stride - pad + ky, ix = xx * stride - pad + kx;
                        if (iy < 0 || ix < 0 || iy >= h || ix >= wd) continue;
                        for (int64_t c = 0; c < cin; ++c) {
                            s += x[(iy * wd + ix) * cin + c] * w[((ky * k + kx) * cin + c) * cout + o];
                        }
                    }
                }
                out[(y * ow + xx) * cout + o] = s;
            }
        }
    }
    return out;
}

inline double gelu(double x) { return 0.5 * x * (1.0 + std::erf(x / std::sqrt(2.0))); }

inline double max_abs(const Tensor& a, const std::vector<double>& b) {
    double m = 0;
    for (int64_t i = 0; i < a.numel(); ++i) m = std::max(m, std::abs(static_cast<double>(a[i]) - b[static_cast<size_t>(i)]));
    return m;
}

// Per-pixel metric reference with explicit 2x2 tallies.
struct BruteBcd {
    int64_t tp = 0, fp = 0, fn = 0, tn = 0;
};

inline BruteBcd brute_counts(const std::vector<ban::metrics::LabelMap>& preds,
                             const std::vector<ban::metrics::LabelMap>& labels) {
    BruteBcd c;
    for (size_t i = 0; i < preds.size(); ++i) {
        for (int64_t y = 0; y < labels[i].height; ++y) {
            for (int64_t x = 0; x < labels[i].width; ++x) {
                const int l = labels[i].at(y, x), p = preds[i].at(y, x);
                if (l == 255) continue;
                if (l == 1 && p == 1) ++c.tp;
                if (l == 0 && p == 1) ++c.fp;
                if (l == 1 && p == 0) ++c.fn;
                if (l == 0 && p == 0) ++c.tn;
            }
        }
    }
    return c;
}

// Kappa from a K x K label/prediction table, textbook form.
inline double brute_kappa(const std::vector<std::vector<double>>& m) {
    const size_t k = m.size();
    double n = 0, agree = 0;
    for (size_t i = 0; i < k; ++i) {
        for (size_t j = 0; j < k; ++j) n += m[i][j];
        agree += m[i][i];
    }
    double pe = 0;
    for (size_t i = 0; i < k; ++i) {
        double row = 0, col = 0;
        for (size_t j = 0; j < k; ++j) {
            row += m[i][j];
            col += m[j][i];
        }
        pe += row * col;
    }
    pe /= n * n;
    const double po = agree / n;
    return (po - pe) / (1 - pe);
}

// Sliding-window average: every window origin enumerated explicitly, logits
// summed into a double canvas, divided by an explicit cover count.
inline std::vector<double> window_average(const std::function<Tensor(const Tensor&, const Tensor&)>& fn,
                                          const Tensor& x1, const Tensor& x2, int64_t win, int64_t stride) {
    const int64_t h = x1.dim(0), w = x1.dim(1), c = x1.dim(2);
    auto origins = [&](int64_t size) {
        std::vector<int64_t> o;
        for (int64_t s = 0; s <= size - win; s += stride) o.push_back(s);
        if (o.back() != size - win) o.push_back(size - win);
        return o;
    };
    auto cut = [&](const Tensor& img, int64_t y0, int64_t x0) {
        Tensor t({win, win, c});
        for (int64_t y = 0; y < win; ++y) {
            for (int64_t x = 0; x < win; ++x) {
                for (int64_t ch = 0; ch < c; ++ch) t.at(y, x, ch) = img.at(y0 + y, x0 + x, ch);
            }
        }
        return t;
    };
    std::vector<double> sum;
    std::vector<double> count(static_cast<size_t>(h * w), 0.0);
    int64_t k = 0;
    for (int64_t y0 : origins(h)) {
        for (int64_t x0 : origins(w)) {
            const Tensor out = fn(cut(x1, y0, x0), cut(x2, y0, x0));
            if (k == 0) {
                k = out.dim(2);
                sum.assign(static_cast<size_t>(h * w * k), 0.0);
            }
            for (int64_t y = 0; y < win; ++y) {
                for (int64_t x = 0; x < win; ++x) {
                    count[(y0 + y) * w + x0 + x] += 1;
                    for (int64_t ch = 0; ch < k; ++ch) sum[((y0 + y) * w + x0 + x) * k + ch] += out.at(y, x, ch);
                }
            }
        }
    }
    for (size_t i = 0; i < sum.size(); ++i) sum[i] /= count[i / static_cast<size_t>(k)];
    return sum;
}

// Central finite difference of a scalar loss w.r.t. element `i` of `param`.
inline double finite_diff(ban::Var param, int64_t i, const std::function<double()>& loss, double step = 1e-3) {
    Tensor& v = param.mutable_value();
    const float orig = v[i];
    v[i] = static_cast<float>(orig + step);
    const double up = loss();
    v[i] = static_cast<float>(orig - step);
    const double down = loss();
    v[i] = orig;
    return (up - down) / (2 * step);
}

// |a - b| / max(|a|, |b|, floor).
inline double rel_err(double a, double b, double floor = 1e-3) {
    return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

}  // namespace oracle
