#include "ban/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <string>

#include "ban/error.hpp"

namespace ban::ops {

namespace {

using RowMat = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using CMapMat = Eigen::Map<const RowMat>;
using detail::accumulate_grad;
using detail::Node;

CMapMat cmap(const Tensor& t, int64_t rows, int64_t cols) { return CMapMat(t.data(), rows, cols); }
MapMat map(Tensor& t, int64_t rows, int64_t cols) { return MapMat(t.data(), rows, cols); }

void require_rank(const Tensor& t, int64_t rank, const char* what) {
    if (t.rank() != rank) {
        throw ShapeError(std::string(what) + ": expected rank " + std::to_string(rank) + ", got " +
                         shape_str(t.shape()));
    }
}

Node& in(Node& self, size_t i) { return *self.inputs[i]; }

// Last axis of a tensor viewed as [rows, cols].
std::pair<int64_t, int64_t> as_rows(const Tensor& t) {
    int64_t cols = t.rank() == 0 ? 1 : t.shape().back();
    return {cols == 0 ? 0 : t.numel() / cols, cols};
}

struct AxisInterp {
    std::vector<int64_t> i0, i1;
    std::vector<float> w0, w1;
};

AxisInterp axis_interp(int64_t in_size, int64_t out_size) {
    AxisInterp a;
    a.i0.resize(static_cast<size_t>(out_size));
    a.i1.resize(static_cast<size_t>(out_size));
    a.w0.resize(static_cast<size_t>(out_size));
    a.w1.resize(static_cast<size_t>(out_size));
    const double ratio = static_cast<double>(in_size) / static_cast<double>(out_size);
    for (int64_t o = 0; o < out_size; ++o) {
        double src = (static_cast<double>(o) + 0.5) * ratio - 0.5;
        if (src < 0.0) src = 0.0;
        int64_t lo = std::min(static_cast<int64_t>(std::floor(src)), in_size - 1);
        int64_t hi = std::min(lo + 1, in_size - 1);
        double frac = src - static_cast<double>(lo);
        a.i0[o] = lo;
        a.i1[o] = hi;
        a.w1[o] = static_cast<float>(frac);
        a.w0[o] = static_cast<float>(1.0 - frac);
    }
    return a;
}

Tensor resize_forward(const Tensor& x, const AxisInterp& ay, const AxisInterp& ax, int64_t out_h, int64_t out_w) {
    const int64_t w = x.dim(1), c = x.dim(2);
    Tensor out({out_h, out_w, c});
    for (int64_t oy = 0; oy < out_h; ++oy) {
        const float* r0 = x.data() + ay.i0[oy] * w * c;
        const float* r1 = x.data() + ay.i1[oy] * w * c;
        const float wy0 = ay.w0[oy], wy1 = ay.w1[oy];
        for (int64_t ox = 0; ox < out_w; ++ox) {
            const float wx0 = ax.w0[ox], wx1 = ax.w1[ox];
            const float* p00 = r0 + ax.i0[ox] * c;
            const float* p01 = r0 + ax.i1[ox] * c;
            const float* p10 = r1 + ax.i0[ox] * c;
            const float* p11 = r1 + ax.i1[ox] * c;
            float* dst = out.data() + (oy * out_w + ox) * c;
            for (int64_t ch = 0; ch < c; ++ch) {
                dst[ch] = wy0 * (wx0 * p00[ch] + wx1 * p01[ch]) + wy1 * (wx0 * p10[ch] + wx1 * p11[ch]);
            }
        }
    }
    return out;
}

// im2col for [H,W,Cin] -> [Ho*Wo, k*k*Cin] with (ky, kx, ci) column order.
Tensor im2col(const Tensor& x, int k, int stride, int pad, int64_t out_h, int64_t out_w) {
    const int64_t h = x.dim(0), w = x.dim(1), c = x.dim(2);
    const int64_t cols = static_cast<int64_t>(k) * k * c;
    Tensor out({out_h * out_w, cols});
    for (int64_t oy = 0; oy < out_h; ++oy) {
        for (int64_t ox = 0; ox < out_w; ++ox) {
            float* row = out.data() + (oy * out_w + ox) * cols;
            for (int ky = 0; ky < k; ++ky) {
                const int64_t iy = oy * stride - pad + ky;
                for (int kx = 0; kx < k; ++kx) {
                    const int64_t ix = ox * stride - pad + kx;
                    float* dst = row + (static_cast<int64_t>(ky) * k + kx) * c;
                    if (iy < 0 || iy >= h || ix < 0 || ix >= w) {
                        std::fill(dst, dst + c, 0.0f);
                    } else {
                        const float* src = x.data() + (iy * w + ix) * c;
                        std::copy(src, src + c, dst);
                    }
                }
            }
        }
    }
    return out;
}

void col2im_add(const Tensor& cols, Tensor& dx, int k, int stride, int pad, int64_t out_h, int64_t out_w) {
    const int64_t h = dx.dim(0), w = dx.dim(1), c = dx.dim(2);
    const int64_t ncols = static_cast<int64_t>(k) * k * c;
    for (int64_t oy = 0; oy < out_h; ++oy) {
        for (int64_t ox = 0; ox < out_w; ++ox) {
            const float* row = cols.data() + (oy * out_w + ox) * ncols;
            for (int ky = 0; ky < k; ++ky) {
                const int64_t iy = oy * stride - pad + ky;
                if (iy < 0 || iy >= h) continue;
                for (int kx = 0; kx < k; ++kx) {
                    const int64_t ix = ox * stride - pad + kx;
                    if (ix < 0 || ix >= w) continue;
                    const float* src = row + (static_cast<int64_t>(ky) * k + kx) * c;
                    float* dst = dx.data() + (iy * w + ix) * c;
                    for (int64_t ch = 0; ch < c; ++ch) dst[ch] += src[ch];
                }
            }
        }
    }
}

}  // namespace

Var matmul(const Var& a, const Var& b) {
    const Tensor& av = a.value();
    const Tensor& bv = b.value();
    require_rank(av, 2, "matmul lhs");
    require_rank(bv, 2, "matmul rhs");
    const int64_t m = av.dim(0), k = av.dim(1), n = bv.dim(1);
    if (bv.dim(0) != k) {
        throw ShapeError("matmul: inner dimensions differ, " + shape_str(av.shape()) + " x " + shape_str(bv.shape()));
    }
    Tensor out({m, n});
    map(out, m, n).noalias() = cmap(av, m, k) * cmap(bv, k, n);
    return Var::make(std::move(out), {a, b}, [m, k, n](Node& self) {
        Node& na = in(self, 0);
        Node& nb = in(self, 1);
        auto g = cmap(self.grad, m, n);
        if (na.requires_grad) {
            Tensor ga({m, k});
            map(ga, m, k).noalias() = g * cmap(nb.value, k, n).transpose();
            accumulate_grad(na, std::move(ga));
        }
        if (nb.requires_grad) {
            Tensor gb({k, n});
            map(gb, k, n).noalias() = cmap(na.value, m, k).transpose() * g;
            accumulate_grad(nb, std::move(gb));
        }
    });
}

Var matmul_nt(const Var& a, const Var& b) {
    const Tensor& av = a.value();
    const Tensor& bv = b.value();
    require_rank(av, 2, "matmul_nt lhs");
    require_rank(bv, 2, "matmul_nt rhs");
    const int64_t m = av.dim(0), k = av.dim(1), n = bv.dim(0);
    if (bv.dim(1) != k) {
        throw ShapeError("matmul_nt: widths differ, " + shape_str(av.shape()) + " vs " + shape_str(bv.shape()));
    }
    Tensor out({m, n});
    map(out, m, n).noalias() = cmap(av, m, k) * cmap(bv, n, k).transpose();
    return Var::make(std::move(out), {a, b}, [m, k, n](Node& self) {
        Node& na = in(self, 0);
        Node& nb = in(self, 1);
        auto g = cmap(self.grad, m, n);
        if (na.requires_grad) {
            Tensor ga({m, k});
            map(ga, m, k).noalias() = g * cmap(nb.value, n, k);
            accumulate_grad(na, std::move(ga));
        }
        if (nb.requires_grad) {
            Tensor gb({n, k});
            map(gb, n, k).noalias() = g.transpose() * cmap(na.value, m, k);
            accumulate_grad(nb, std::move(gb));
        }
    });
}

Var linear(const Var& x, const Var& w, const Var& b) {
    const Tensor& xv = x.value();
    const Tensor& wv = w.value();
    require_rank(xv, 2, "linear input");
    require_rank(wv, 2, "linear weight");
    const int64_t n = xv.dim(0), cin = xv.dim(1), cout = wv.dim(1);
    if (wv.dim(0) != cin) {
        throw ShapeError("linear: input width " + std::to_string(cin) + " does not match weight " +
                         shape_str(wv.shape()));
    }
    const bool has_bias = b.defined();
    if (has_bias && b.value().numel() != cout) {
        throw ShapeError("linear: bias " + shape_str(b.value().shape()) + " does not match width " +
                         std::to_string(cout));
    }
    Tensor out({n, cout});
    auto o = map(out, n, cout);
    o.noalias() = cmap(xv, n, cin) * cmap(wv, cin, cout);
    if (has_bias) o.rowwise() += Eigen::Map<const Eigen::RowVectorXf>(b.value().data(), cout);
    std::vector<Var> inputs{x, w};
    if (has_bias) inputs.push_back(b);
    return Var::make(std::move(out), std::move(inputs), [n, cin, cout, has_bias](Node& self) {
        Node& nx = in(self, 0);
        Node& nw = in(self, 1);
        auto g = cmap(self.grad, n, cout);
        if (nx.requires_grad) {
            Tensor gx({n, cin});
            map(gx, n, cin).noalias() = g * cmap(nw.value, cin, cout).transpose();
            accumulate_grad(nx, std::move(gx));
        }
        if (nw.requires_grad) {
            Tensor gw({cin, cout});
            map(gw, cin, cout).noalias() = cmap(nx.value, n, cin).transpose() * g;
            accumulate_grad(nw, std::move(gw));
        }
        if (has_bias && in(self, 2).requires_grad) {
            Node& nb = in(self, 2);
            Tensor gb(nb.value.shape());
            map(gb, 1, cout) = g.colwise().sum();
            accumulate_grad(nb, std::move(gb));
        }
    });
}

Var add(const Var& a, const Var& b) {
    require_same_shape(a.value(), b.value(), "add");
    Tensor out = a.value();
    const float* bp = b.value().data();
    float* op = out.data();
    for (int64_t i = 0; i < out.numel(); ++i) op[i] += bp[i];
    return Var::make(std::move(out), {a, b}, [](Node& self) {
        accumulate_grad(in(self, 0), self.grad);
        accumulate_grad(in(self, 1), self.grad);
    });
}

Var scale(const Var& a, float factor) {
    Tensor out = a.value();
    for (auto& v : out.values()) v *= factor;
    return Var::make(std::move(out), {a}, [factor](Node& self) {
        Tensor g = self.grad;
        for (auto& v : g.values()) v *= factor;
        accumulate_grad(in(self, 0), std::move(g));
    });
}

Var abs_diff(const Var& a, const Var& b) {
    require_same_shape(a.value(), b.value(), "abs_diff");
    const Tensor& av = a.value();
    const Tensor& bv = b.value();
    Tensor out(av.shape());
    for (int64_t i = 0; i < out.numel(); ++i) out[i] = std::abs(av[i] - bv[i]);
    return Var::make(std::move(out), {a, b}, [](Node& self) {
        Node& na = in(self, 0);
        Node& nb = in(self, 1);
        Tensor ga(self.grad.shape());
        for (int64_t i = 0; i < ga.numel(); ++i) {
            const float d = na.value[i] - nb.value[i];
            const float s = d > 0.0f ? 1.0f : (d < 0.0f ? -1.0f : 0.0f);
            ga[i] = s * self.grad[i];
        }
        if (nb.requires_grad) {
            Tensor gb = ga;
            for (auto& v : gb.values()) v = -v;
            accumulate_grad(nb, std::move(gb));
        }
        accumulate_grad(na, std::move(ga));
    });
}

Var relu(const Var& x) {
    Tensor out = x.value();
    for (auto& v : out.values()) v = v > 0.0f ? v : 0.0f;
    return Var::make(std::move(out), {x}, [](Node& self) {
        Node& nx = in(self, 0);
        Tensor g = self.grad;
        for (int64_t i = 0; i < g.numel(); ++i) {
            if (!(nx.value[i] > 0.0f)) g[i] = 0.0f;
        }
        accumulate_grad(nx, std::move(g));
    });
}

Var gelu(const Var& x) {
    constexpr float kInvSqrt2 = 0.70710678118654752f;
    Tensor out = x.value();
    for (auto& v : out.values()) v = 0.5f * v * (1.0f + std::erf(v * kInvSqrt2));
    return Var::make(std::move(out), {x}, [](Node& self) {
        constexpr float kInvSqrt2Pi = 0.39894228040143268f;
        Node& nx = in(self, 0);
        Tensor g = self.grad;
        for (int64_t i = 0; i < g.numel(); ++i) {
            const float v = nx.value[i];
            const float cdf = 0.5f * (1.0f + std::erf(v * kInvSqrt2));
            const float pdf = kInvSqrt2Pi * std::exp(-0.5f * v * v);
            g[i] *= cdf + v * pdf;
        }
        accumulate_grad(nx, std::move(g));
    });
}

Var reshape(const Var& x, Shape shape) {
    Tensor out = x.value().reshaped(std::move(shape));
    return Var::make(std::move(out), {x}, [](Node& self) {
        Node& nx = in(self, 0);
        accumulate_grad(nx, self.grad.reshaped(nx.value.shape()));
    });
}

Var slice_last(const Var& x, int64_t start, int64_t count) {
    const Tensor& xv = x.value();
    auto [rows, cols] = as_rows(xv);
    if (start < 0 || count < 0 || start + count > cols) {
        throw ShapeError("slice_last: [" + std::to_string(start) + ", +" + std::to_string(count) +
                         ") outside width " + std::to_string(cols));
    }
    Shape shape = xv.shape();
    shape.back() = count;
    Tensor out(shape);
    for (int64_t r = 0; r < rows; ++r) {
        std::copy_n(xv.data() + r * cols + start, count, out.data() + r * count);
    }
    return Var::make(std::move(out), {x}, [rows, cols, start, count](Node& self) {
        Node& nx = in(self, 0);
        Tensor g(nx.value.shape());
        for (int64_t r = 0; r < rows; ++r) {
            std::copy_n(self.grad.data() + r * count, count, g.data() + r * cols + start);
        }
        accumulate_grad(nx, std::move(g));
    });
}

Var concat_last(const std::vector<Var>& parts) {
    if (parts.empty()) throw ShapeError("concat_last: no inputs");
    Shape lead = parts[0].shape();
    lead.pop_back();
    int64_t total = 0;
    std::vector<int64_t> widths;
    for (const auto& p : parts) {
        Shape s = p.shape();
        widths.push_back(s.back());
        total += s.back();
        s.pop_back();
        if (s != lead) throw ShapeError("concat_last: leading shapes differ");
    }
    Shape shape = lead;
    shape.push_back(total);
    Tensor out(shape);
    const int64_t rows = shape_numel(lead);
    int64_t offset = 0;
    for (size_t i = 0; i < parts.size(); ++i) {
        const Tensor& pv = parts[i].value();
        for (int64_t r = 0; r < rows; ++r) {
            std::copy_n(pv.data() + r * widths[i], widths[i], out.data() + r * total + offset);
        }
        offset += widths[i];
    }
    return Var::make(std::move(out), parts, [rows, total, widths](Node& self) {
        int64_t off = 0;
        for (size_t i = 0; i < widths.size(); ++i) {
            Node& np = in(self, i);
            if (np.requires_grad) {
                Tensor g(np.value.shape());
                for (int64_t r = 0; r < rows; ++r) {
                    std::copy_n(self.grad.data() + r * total + off, widths[i], g.data() + r * widths[i]);
                }
                accumulate_grad(np, std::move(g));
            }
            off += widths[i];
        }
    });
}

Var slice_rows(const Var& x, int64_t start, int64_t count) {
    const Tensor& xv = x.value();
    require_rank(xv, 2, "slice_rows");
    const int64_t cols = xv.dim(1);
    if (start < 0 || count < 0 || start + count > xv.dim(0)) {
        throw ShapeError("slice_rows: range outside " + shape_str(xv.shape()));
    }
    Tensor out({count, cols});
    std::copy_n(xv.data() + start * cols, count * cols, out.data());
    return Var::make(std::move(out), {x}, [start, cols](Node& self) {
        Node& nx = in(self, 0);
        Tensor g(nx.value.shape());
        std::copy_n(self.grad.data(), self.grad.numel(), g.data() + start * cols);
        accumulate_grad(nx, std::move(g));
    });
}

Var concat_rows(const Var& a, const Var& b) {
    const Tensor& av = a.value();
    const Tensor& bv = b.value();
    require_rank(av, 2, "concat_rows lhs");
    require_rank(bv, 2, "concat_rows rhs");
    if (av.dim(1) != bv.dim(1)) throw ShapeError("concat_rows: widths differ");
    Tensor out({av.dim(0) + bv.dim(0), av.dim(1)});
    std::copy_n(av.data(), av.numel(), out.data());
    std::copy_n(bv.data(), bv.numel(), out.data() + av.numel());
    const int64_t split = av.numel();
    return Var::make(std::move(out), {a, b}, [split](Node& self) {
        Node& na = in(self, 0);
        Node& nb = in(self, 1);
        if (na.requires_grad) {
            Tensor g(na.value.shape());
            std::copy_n(self.grad.data(), split, g.data());
            accumulate_grad(na, std::move(g));
        }
        if (nb.requires_grad) {
            Tensor g(nb.value.shape());
            std::copy_n(self.grad.data() + split, g.numel(), g.data());
            accumulate_grad(nb, std::move(g));
        }
    });
}

Var layer_norm(const Var& x, const Var& gain, const Var& bias, float eps) {
    const Tensor& xv = x.value();
    auto [rows, cols] = as_rows(xv);
    if (gain.value().numel() != cols || bias.value().numel() != cols) {
        throw ShapeError("layer_norm: affine width does not match input width " + std::to_string(cols));
    }
    Tensor out(xv.shape());
    Tensor xhat(xv.shape());
    std::vector<float> rstd(static_cast<size_t>(rows));
    const float* gp = gain.value().data();
    const float* bp = bias.value().data();
    for (int64_t r = 0; r < rows; ++r) {
        const float* src = xv.data() + r * cols;
        double mean = 0.0;
        for (int64_t c = 0; c < cols; ++c) mean += src[c];
        mean /= static_cast<double>(cols);
        double var = 0.0;
        for (int64_t c = 0; c < cols; ++c) var += (src[c] - mean) * (src[c] - mean);
        var /= static_cast<double>(cols);
        const float rs = static_cast<float>(1.0 / std::sqrt(var + eps));
        rstd[r] = rs;
        for (int64_t c = 0; c < cols; ++c) {
            const float h = static_cast<float>(src[c] - mean) * rs;
            xhat[r * cols + c] = h;
            out[r * cols + c] = h * gp[c] + bp[c];
        }
    }
    return Var::make(std::move(out), {x, gain, bias},
                     [rows, cols, xhat = std::move(xhat), rstd = std::move(rstd)](Node& self) {
                         Node& nx = in(self, 0);
                         Node& ng = in(self, 1);
                         Node& nb = in(self, 2);
                         const float* g = self.grad.data();
                         const float* gp = ng.value.data();
                         if (ng.requires_grad || nb.requires_grad) {
                             Tensor dg(ng.value.shape()), db(nb.value.shape());
                             for (int64_t r = 0; r < rows; ++r) {
                                 for (int64_t c = 0; c < cols; ++c) {
                                     dg[c] += g[r * cols + c] * xhat[r * cols + c];
                                     db[c] += g[r * cols + c];
                                 }
                             }
                             accumulate_grad(ng, std::move(dg));
                             accumulate_grad(nb, std::move(db));
                         }
                         if (nx.requires_grad) {
                             Tensor dx(nx.value.shape());
                             for (int64_t r = 0; r < rows; ++r) {
                                 double m1 = 0.0, m2 = 0.0;
                                 for (int64_t c = 0; c < cols; ++c) {
                                     const double dh = g[r * cols + c] * gp[c];
                                     m1 += dh;
                                     m2 += dh * xhat[r * cols + c];
                                 }
                                 m1 /= static_cast<double>(cols);
                                 m2 /= static_cast<double>(cols);
                                 for (int64_t c = 0; c < cols; ++c) {
                                     const double dh = g[r * cols + c] * gp[c];
                                     dx[r * cols + c] =
                                         static_cast<float>(rstd[r] * (dh - m1 - xhat[r * cols + c] * m2));
                                 }
                             }
                             accumulate_grad(nx, std::move(dx));
                         }
                     });
}

Var l2_normalize_rows(const Var& x, float eps) {
    const Tensor& xv = x.value();
    auto [rows, cols] = as_rows(xv);
    Tensor out(xv.shape());
    std::vector<float> inv(static_cast<size_t>(rows));
    std::vector<bool> clamped(static_cast<size_t>(rows));
    for (int64_t r = 0; r < rows; ++r) {
        double ss = 0.0;
        for (int64_t c = 0; c < cols; ++c) ss += static_cast<double>(xv[r * cols + c]) * xv[r * cols + c];
        const double norm = std::sqrt(ss);
        clamped[r] = norm < eps;
        inv[r] = static_cast<float>(1.0 / std::max(norm, static_cast<double>(eps)));
        for (int64_t c = 0; c < cols; ++c) out[r * cols + c] = xv[r * cols + c] * inv[r];
    }
    Tensor y = out;
    return Var::make(std::move(out), {x}, [rows, cols, inv, clamped, y = std::move(y)](Node& self) {
        Node& nx = in(self, 0);
        Tensor dx(nx.value.shape());
        for (int64_t r = 0; r < rows; ++r) {
            double dot = 0.0;
            if (!clamped[r]) {
                for (int64_t c = 0; c < cols; ++c) dot += self.grad[r * cols + c] * y[r * cols + c];
            }
            for (int64_t c = 0; c < cols; ++c) {
                dx[r * cols + c] = static_cast<float>(inv[r] * (self.grad[r * cols + c] - y[r * cols + c] * dot));
            }
        }
        accumulate_grad(nx, std::move(dx));
    });
}

Var softmax_rows(const Var& x) {
    const Tensor& xv = x.value();
    require_rank(xv, 2, "softmax_rows");
    const int64_t rows = xv.dim(0), cols = xv.dim(1);
    if (cols == 0) throw ShapeError("softmax_rows: zero-width rows");
    Tensor out(xv.shape());
    for (int64_t r = 0; r < rows; ++r) {
        const float* src = xv.data() + r * cols;
        float* dst = out.data() + r * cols;
        const float mx = *std::max_element(src, src + cols);
        double total = 0.0;
        for (int64_t c = 0; c < cols; ++c) {
            dst[c] = std::exp(src[c] - mx);
            total += dst[c];
        }
        const float inv = static_cast<float>(1.0 / total);
        for (int64_t c = 0; c < cols; ++c) dst[c] *= inv;
    }
    Tensor y = out;
    return Var::make(std::move(out), {x}, [rows, cols, y = std::move(y)](Node& self) {
        Tensor dx(y.shape());
        for (int64_t r = 0; r < rows; ++r) {
            double dot = 0.0;
            for (int64_t c = 0; c < cols; ++c) dot += self.grad[r * cols + c] * y[r * cols + c];
            for (int64_t c = 0; c < cols; ++c) {
                dx[r * cols + c] = static_cast<float>(y[r * cols + c] * (self.grad[r * cols + c] - dot));
            }
        }
        accumulate_grad(in(self, 0), std::move(dx));
    });
}

Var conv2d(const Var& x, const Var& w, const Var& b, int stride, int pad) {
    const Tensor& xv = x.value();
    const Tensor& wv = w.value();
    require_rank(xv, 3, "conv2d input");
    require_rank(wv, 4, "conv2d weight");
    const int k = static_cast<int>(wv.dim(0));
    const int64_t cin = xv.dim(2), cout = wv.dim(3);
    if (wv.dim(1) != k || wv.dim(2) != cin) {
        throw ShapeError("conv2d: weight " + shape_str(wv.shape()) + " incompatible with input " +
                         shape_str(xv.shape()));
    }
    if (stride < 1 || pad < 0) throw ConfigError("conv2d: stride must be >= 1 and pad >= 0");
    const int64_t h = xv.dim(0), wd = xv.dim(1);
    const int64_t out_h = (h + 2 * pad - k) / stride + 1;
    const int64_t out_w = (wd + 2 * pad - k) / stride + 1;
    if (h + 2 * pad < k || wd + 2 * pad < k || out_h < 1 || out_w < 1) {
        throw ShapeError("conv2d: input " + shape_str(xv.shape()) + " smaller than kernel " + std::to_string(k));
    }
    const bool has_bias = b.defined();
    const bool pointwise = k == 1 && stride == 1 && pad == 0;
    const int64_t kk = static_cast<int64_t>(k) * k * cin;
    const int64_t npix = out_h * out_w;
    Tensor cols = pointwise ? Tensor() : im2col(xv, k, stride, pad, out_h, out_w);
    const Tensor& colref = pointwise ? xv : cols;

    Tensor out({out_h, out_w, cout});
    auto o = map(out, npix, cout);
    o.noalias() = cmap(colref, npix, kk) * cmap(wv, kk, cout);
    if (has_bias) o.rowwise() += Eigen::Map<const Eigen::RowVectorXf>(b.value().data(), cout);

    std::vector<Var> inputs{x, w};
    if (has_bias) inputs.push_back(b);
    return Var::make(std::move(out), std::move(inputs),
                     [=, cols = std::move(cols)](Node& self) {
                         Node& nx = in(self, 0);
                         Node& nw = in(self, 1);
                         auto g = cmap(self.grad, npix, cout);
                         const Tensor& cref = pointwise ? nx.value : cols;
                         if (nw.requires_grad) {
                             Tensor gw(nw.value.shape());
                             map(gw, kk, cout).noalias() = cmap(cref, npix, kk).transpose() * g;
                             accumulate_grad(nw, std::move(gw));
                         }
                         if (has_bias && in(self, 2).requires_grad) {
                             Node& nb = in(self, 2);
                             Tensor gb(nb.value.shape());
                             map(gb, 1, cout) = g.colwise().sum();
                             accumulate_grad(nb, std::move(gb));
                         }
                         if (nx.requires_grad) {
                             Tensor gcols({npix, kk});
                             map(gcols, npix, kk).noalias() = g * cmap(nw.value, kk, cout).transpose();
                             if (pointwise) {
                                 accumulate_grad(nx, std::move(gcols).reshaped(nx.value.shape()));
                             } else {
                                 Tensor dx(nx.value.shape());
                                 col2im_add(gcols, dx, k, stride, pad, out_h, out_w);
                                 accumulate_grad(nx, std::move(dx));
                             }
                         }
                     });
}

Var group_norm(const Var& x, int groups, const Var& gamma, const Var& beta, float eps) {
    const Tensor& xv = x.value();
    require_rank(xv, 3, "group_norm input");
    const int64_t c = xv.dim(2);
    const int64_t pix = xv.dim(0) * xv.dim(1);
    if (groups < 1 || c % groups != 0) {
        throw ConfigError("group_norm: " + std::to_string(c) + " channels not divisible into " +
                          std::to_string(groups) + " groups");
    }
    if (gamma.value().numel() != c || beta.value().numel() != c) {
        throw ShapeError("group_norm: affine width does not match " + std::to_string(c) + " channels");
    }
    const int64_t cg = c / groups;
    const double count = static_cast<double>(pix * cg);
    Tensor xhat(xv.shape());
    Tensor out(xv.shape());
    std::vector<float> rstd(static_cast<size_t>(groups));
    const float* gp = gamma.value().data();
    const float* bp = beta.value().data();
    for (int g = 0; g < groups; ++g) {
        double mean = 0.0;
        for (int64_t p = 0; p < pix; ++p) {
            for (int64_t ch = g * cg; ch < (g + 1) * cg; ++ch) mean += xv[p * c + ch];
        }
        mean /= count;
        double var = 0.0;
        for (int64_t p = 0; p < pix; ++p) {
            for (int64_t ch = g * cg; ch < (g + 1) * cg; ++ch) {
                const double d = xv[p * c + ch] - mean;
                var += d * d;
            }
        }
        var /= count;
        const float rs = static_cast<float>(1.0 / std::sqrt(var + eps));
        rstd[static_cast<size_t>(g)] = rs;
        for (int64_t p = 0; p < pix; ++p) {
            for (int64_t ch = g * cg; ch < (g + 1) * cg; ++ch) {
                const float h = static_cast<float>(xv[p * c + ch] - mean) * rs;
                xhat[p * c + ch] = h;
                out[p * c + ch] = h * gp[ch] + bp[ch];
            }
        }
    }
    return Var::make(
        std::move(out), {x, gamma, beta},
        [=, xhat = std::move(xhat), rstd = std::move(rstd)](Node& self) {
            Node& nx = in(self, 0);
            Node& ng = in(self, 1);
            Node& nb = in(self, 2);
            const float* gr = self.grad.data();
            const float* gam = ng.value.data();
            if (ng.requires_grad || nb.requires_grad) {
                Tensor dg(ng.value.shape()), db(nb.value.shape());
                for (int64_t p = 0; p < pix; ++p) {
                    for (int64_t ch = 0; ch < c; ++ch) {
                        dg[ch] += gr[p * c + ch] * xhat[p * c + ch];
                        db[ch] += gr[p * c + ch];
                    }
                }
                accumulate_grad(ng, std::move(dg));
                accumulate_grad(nb, std::move(db));
            }
            if (nx.requires_grad) {
                Tensor dx(nx.value.shape());
                for (int g = 0; g < groups; ++g) {
                    double m1 = 0.0, m2 = 0.0;
                    for (int64_t p = 0; p < pix; ++p) {
                        for (int64_t ch = g * cg; ch < (g + 1) * cg; ++ch) {
                            const double dh = gr[p * c + ch] * gam[ch];
                            m1 += dh;
                            m2 += dh * xhat[p * c + ch];
                        }
                    }
                    m1 /= count;
                    m2 /= count;
                    const float rs = rstd[static_cast<size_t>(g)];
                    for (int64_t p = 0; p < pix; ++p) {
                        for (int64_t ch = g * cg; ch < (g + 1) * cg; ++ch) {
                            const double dh = gr[p * c + ch] * gam[ch];
                            dx[p * c + ch] = static_cast<float>(rs * (dh - m1 - xhat[p * c + ch] * m2));
                        }
                    }
                }
                accumulate_grad(nx, std::move(dx));
            }
        });
}

Tensor resize_bilinear(const Tensor& x, int64_t out_h, int64_t out_w) {
    require_rank(x, 3, "resize_bilinear");
    if (out_h < 1 || out_w < 1) {
        throw ConfigError("resize_bilinear: target " + std::to_string(out_h) + "x" + std::to_string(out_w) +
                          " must be positive");
    }
    if (x.dim(0) < 1 || x.dim(1) < 1) throw ShapeError("resize_bilinear: empty input " + shape_str(x.shape()));
    if (x.dim(0) == out_h && x.dim(1) == out_w) return x;
    return resize_forward(x, axis_interp(x.dim(0), out_h), axis_interp(x.dim(1), out_w), out_h, out_w);
}

Var resize_bilinear(const Var& x, int64_t out_h, int64_t out_w) {
    const Tensor& xv = x.value();
    Tensor out = resize_bilinear(xv, out_h, out_w);
    const int64_t h = xv.dim(0), w = xv.dim(1), c = xv.dim(2);
    if (h == out_h && w == out_w) {
        return Var::make(std::move(out), {x}, [](Node& self) { accumulate_grad(in(self, 0), self.grad); });
    }
    return Var::make(std::move(out), {x}, [=](Node& self) {
        const AxisInterp ay = axis_interp(h, out_h);
        const AxisInterp ax = axis_interp(w, out_w);
        Tensor dx({h, w, c});
        for (int64_t oy = 0; oy < out_h; ++oy) {
            float* r0 = dx.data() + ay.i0[oy] * w * c;
            float* r1 = dx.data() + ay.i1[oy] * w * c;
            for (int64_t ox = 0; ox < out_w; ++ox) {
                const float* g = self.grad.data() + (oy * out_w + ox) * c;
                const float w00 = ay.w0[oy] * ax.w0[ox], w01 = ay.w0[oy] * ax.w1[ox];
                const float w10 = ay.w1[oy] * ax.w0[ox], w11 = ay.w1[oy] * ax.w1[ox];
                float* p00 = r0 + ax.i0[ox] * c;
                float* p01 = r0 + ax.i1[ox] * c;
                float* p10 = r1 + ax.i0[ox] * c;
                float* p11 = r1 + ax.i1[ox] * c;
                for (int64_t ch = 0; ch < c; ++ch) {
                    p00[ch] += w00 * g[ch];
                    p01[ch] += w01 * g[ch];
                    p10[ch] += w10 * g[ch];
                    p11[ch] += w11 * g[ch];
                }
            }
        }
        accumulate_grad(in(self, 0), std::move(dx));
    });
}

Var cross_entropy(const Var& logits, std::span<const int32_t> labels, int32_t ignore_index) {
    const Tensor& lv = logits.value();
    require_rank(lv, 3, "cross_entropy logits");
    const int64_t h = lv.dim(0), w = lv.dim(1), k = lv.dim(2);
    if (static_cast<int64_t>(labels.size()) != h * w) {
        throw ShapeError("cross_entropy: " + std::to_string(labels.size()) + " labels for " + std::to_string(h) +
                         "x" + std::to_string(w) + " logits");
    }
    Tensor probs(lv.shape());
    double total = 0.0;
    int64_t counted = 0;
    for (int64_t p = 0; p < h * w; ++p) {
        const int32_t y = labels[static_cast<size_t>(p)];
        if (y == ignore_index) continue;
        if (y < 0 || y >= k) {
            throw DataError("label " + std::to_string(y) + " out of range [0, " + std::to_string(k) +
                            ") at pixel (" + std::to_string(p / w) + ", " + std::to_string(p % w) + ")");
        }
        const float* src = lv.data() + p * k;
        float* dst = probs.data() + p * k;
        const float mx = *std::max_element(src, src + k);
        double z = 0.0;
        for (int64_t c = 0; c < k; ++c) z += std::exp(static_cast<double>(src[c]) - mx);
        const double logz = std::log(z) + mx;
        total += logz - src[y];
        for (int64_t c = 0; c < k; ++c) dst[c] = static_cast<float>(std::exp(src[c] - logz));
        ++counted;
    }
    const double loss = counted ? total / static_cast<double>(counted) : 0.0;
    std::vector<int32_t> lab(labels.begin(), labels.end());
    return Var::make(Tensor({1}, {static_cast<float>(loss)}), {logits},
                     [=, probs = std::move(probs), lab = std::move(lab)](Node& self) {
                         Tensor g(probs.shape());
                         if (counted == 0) {
                             accumulate_grad(in(self, 0), std::move(g));
                             return;
                         }
                         const float s = self.grad[0] / static_cast<float>(counted);
                         for (int64_t p = 0; p < h * w; ++p) {
                             const int32_t y = lab[static_cast<size_t>(p)];
                             if (y == ignore_index) continue;
                             for (int64_t c = 0; c < k; ++c) g[p * k + c] = probs[p * k + c] * s;
                             g[p * k + y] -= s;
                         }
                         accumulate_grad(in(self, 0), std::move(g));
                     });
}

Var sum(const Var& x) {
    double total = 0.0;
    for (float v : x.value().values()) total += v;
    return Var::make(Tensor({1}, {static_cast<float>(total)}), {x}, [](Node& self) {
        Node& nx = in(self, 0);
        accumulate_grad(nx, Tensor(nx.value.shape(), self.grad[0]));
    });
}

Var weighted_sum(const Var& x, const Tensor& weights) {
    require_same_shape(x.value(), weights, "weighted_sum");
    double total = 0.0;
    for (int64_t i = 0; i < weights.numel(); ++i) total += static_cast<double>(x.value()[i]) * weights[i];
    return Var::make(Tensor({1}, {static_cast<float>(total)}), {x}, [weights](Node& self) {
        Tensor g = weights;
        for (auto& v : g.values()) v *= self.grad[0];
        accumulate_grad(in(self, 0), std::move(g));
    });
}

}  // namespace ban::ops
