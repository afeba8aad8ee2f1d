#pragma once

#include <algorithm>
#include <cmath>
#include <cstring>
#include <vector>

#include "mxpp/tensor.hpp"

namespace mxpp {
namespace ops {

namespace detail {

template <typename S>
Tensor<S> result(std::vector<int> shape, bool inputs_require_grad) {
    Tape<S>* tape = active_tape<S>();
    bool rg = inputs_require_grad && tape != nullptr;
    Tensor<S> out = Tensor<S>::zeros(std::move(shape), rg);
    if (rg) out.set_tape(tape);
    return out;
}

template <typename S, typename Fn>
void record_if_needed(Tensor<S>& out, Fn&& fn) {
    if (out.requires_grad()) active_tape<S>()->record(std::forward<Fn>(fn));
}

template <typename S>
void require_same_shape(Tensor<S> a, Tensor<S> b, const char* op) {
    if (a.shape() != b.shape())
        throw shape_error(std::string(op) + ": shape mismatch " + mxpp::detail::shape_str(a.shape()) +
                          " vs " + mxpp::detail::shape_str(b.shape()));
}

// Raw matmul kernels; accumulate into C.
template <typename S>
void mm_nn(const S* A, const S* B, S* C, int m, int n, int p) {
    for (int i = 0; i < m; ++i) {
        const S* a = A + static_cast<size_t>(i) * n;
        S* c = C + static_cast<size_t>(i) * p;
        for (int k = 0; k < n; ++k) {
            const S av = a[k];
            const S* b = B + static_cast<size_t>(k) * p;
            for (int j = 0; j < p; ++j) c[j] += av * b[j];
        }
    }
}

// C(m×k) += A(m×n) · B(k×n)^T
template <typename S>
void mm_nt(const S* A, const S* B, S* C, int m, int n, int k) {
    for (int i = 0; i < m; ++i) {
        const S* a = A + static_cast<size_t>(i) * n;
        S* c = C + static_cast<size_t>(i) * k;
        for (int r = 0; r < k; ++r) {
            const S* b = B + static_cast<size_t>(r) * n;
            S acc = S(0);
            for (int j = 0; j < n; ++j) acc += a[j] * b[j];
            c[r] += acc;
        }
    }
}

// C(n×p) += A(m×n)^T · B(m×p)
template <typename S>
void mm_tn(const S* A, const S* B, S* C, int m, int n, int p) {
    for (int i = 0; i < m; ++i) {
        const S* a = A + static_cast<size_t>(i) * n;
        const S* b = B + static_cast<size_t>(i) * p;
        for (int k = 0; k < n; ++k) {
            const S av = a[k];
            S* c = C + static_cast<size_t>(k) * p;
            for (int j = 0; j < p; ++j) c[j] += av * b[j];
        }
    }
}

// Decomposes a shape into (outer, axis extent, inner) around one axis so a
// single loop pattern serves softmax/log-softmax/layer-norm.
inline void axis_split(const std::vector<int>& shape, int axis, size_t& outer, int& len, size_t& inner) {
    if (axis < 0 || axis >= static_cast<int>(shape.size()))
        throw shape_error("invalid axis " + std::to_string(axis) + " for shape " + mxpp::detail::shape_str(shape));
    outer = 1;
    inner = 1;
    for (int i = 0; i < axis; ++i) outer *= static_cast<size_t>(shape[i]);
    len = shape[axis];
    for (size_t i = axis + 1; i < shape.size(); ++i) inner *= static_cast<size_t>(shape[i]);
}

} // namespace detail

// ---------------------------------------------------------------------------
// elementwise arithmetic

template <typename S>
Tensor<S> add(Tensor<S> a, Tensor<S> b) {
    detail::require_same_shape(a, b, "add");
    Tensor<S> out = detail::result<S>(a.shape(), a.requires_grad() || b.requires_grad());
    const size_t n = out.numel();
    for (size_t i = 0; i < n; ++i) out.data()[i] = a.data()[i] + b.data()[i];
    out.check_finite("add");
    detail::record_if_needed(out, [a, b, out]() mutable {
        const auto& g = out.grad_view();
        if (g.empty()) return;
        if (a.requires_grad()) {
            auto& ga = a.grad();
            for (size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
        }
        if (b.requires_grad()) {
            auto& gb = b.grad();
            for (size_t i = 0; i < g.size(); ++i) gb[i] += g[i];
        }
    });
    return out;
}

template <typename S>
Tensor<S> sub(Tensor<S> a, Tensor<S> b) {
    detail::require_same_shape(a, b, "sub");
    Tensor<S> out = detail::result<S>(a.shape(), a.requires_grad() || b.requires_grad());
    const size_t n = out.numel();
    for (size_t i = 0; i < n; ++i) out.data()[i] = a.data()[i] - b.data()[i];
    out.check_finite("sub");
    detail::record_if_needed(out, [a, b, out]() mutable {
        const auto& g = out.grad_view();
        if (g.empty()) return;
        if (a.requires_grad()) {
            auto& ga = a.grad();
            for (size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
        }
        if (b.requires_grad()) {
            auto& gb = b.grad();
            for (size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
        }
    });
    return out;
}

template <typename S>
Tensor<S> mul(Tensor<S> a, Tensor<S> b) {
    detail::require_same_shape(a, b, "mul");
    Tensor<S> out = detail::result<S>(a.shape(), a.requires_grad() || b.requires_grad());
    const size_t n = out.numel();
    for (size_t i = 0; i < n; ++i) out.data()[i] = a.data()[i] * b.data()[i];
    out.check_finite("mul");
    detail::record_if_needed(out, [a, b, out]() mutable {
        const auto& g = out.grad_view();
        if (g.empty()) return;
        if (a.requires_grad()) {
            auto& ga = a.grad();
            for (size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * b.data()[i];
        }
        if (b.requires_grad()) {
            auto& gb = b.grad();
            for (size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * a.data()[i];
        }
    });
    return out;
}

template <typename S>
Tensor<S> div(Tensor<S> a, Tensor<S> b) {
    detail::require_same_shape(a, b, "div");
    Tensor<S> out = detail::result<S>(a.shape(), a.requires_grad() || b.requires_grad());
    const size_t n = out.numel();
    for (size_t i = 0; i < n; ++i) out.data()[i] = a.data()[i] / b.data()[i];
    out.check_finite("div");
    detail::record_if_needed(out, [a, b, out]() mutable {
        const auto& g = out.grad_view();
        if (g.empty()) return;
        if (a.requires_grad()) {
            auto& ga = a.grad();
            for (size_t i = 0; i < g.size(); ++i) ga[i] += g[i] / b.data()[i];
        }
        if (b.requires_grad()) {
            auto& gb = b.grad();
            for (size_t i = 0; i < g.size(); ++i)
                gb[i] -= g[i] * a.data()[i] / (b.data()[i] * b.data()[i]);
        }
    });
    return out;
}

template <typename S>
Tensor<S> add_scalar(Tensor<S> a, S c) {
    Tensor<S> out = detail::result<S>(a.shape(), a.requires_grad());
    const size_t n = out.numel();
    for (size_t i = 0; i < n; ++i) out.data()[i] = a.data()[i] + c;
    out.check_finite("add_scalar");
    detail::record_if_needed(out, [a, out]() mutable {
        const auto& g = out.grad_view();
        if (g.empty()) return;
        auto& ga = a.grad();
        for (size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    });
    return out;
}

template <typename S>
Tensor<S> mul_scalar(Tensor<S> a, S c) {
    Tensor<S> out = detail::result<S>(a.shape(), a.requires_grad());
    const size_t n = out.numel();
    for (size_t i = 0; i < n; ++i) out.data()[i] = a.data()[i] * c;
    out.check_finite("mul_scalar");
    detail::record_if_needed(out, [a, out, c]() mutable {
        const auto& g = out.grad_view();
        if (g.empty()) return;
        auto& ga = a.grad();
        for (size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * c;
    });
    return out;
}

template <typename S>
Tensor<S> neg(Tensor<S> a) {
    return mul_scalar(a, S(-1));
}

// Sum of same-shaped tensors in one node; keeps loss aggregation shallow.
template <typename S>
Tensor<S> add_n(std::vector<Tensor<S>> parts) {
    if (parts.empty()) throw shape_error("add_n: empty input list");
    bool rg = false;
    for (const auto& p : parts) {
        detail::require_same_shape(parts[0], p, "add_n");
        rg = rg || p.requires_grad();
    }
    Tensor<S> out = detail::result<S>(parts[0].shape(), rg);
    const size_t n = out.numel();
    for (const auto& p : parts)
        for (size_t i = 0; i < n; ++i) out.data()[i] += p.data()[i];
    out.check_finite("add_n");
    detail::record_if_needed(out, [parts, out]() mutable {
        const auto& g = out.grad_view();
        if (g.empty()) return;
        for (auto& p : parts) {
            if (!p.requires_grad()) continue;
            auto& gp = p.grad();
            for (size_t i = 0; i < g.size(); ++i) gp[i] += g[i];
        }
    });
    return out;
}

// ---------------------------------------------------------------------------
// matrix products

template <typename S>
Tensor<S> matmul(Tensor<S> a, Tensor<S> b) {
    if (a.rank() != 2 || b.rank() != 2)
        throw shape_error("matmul: expected rank-2 tensors, got " + mxpp::detail::shape_str(a.shape()) +
                          " and " + mxpp::detail::shape_str(b.shape()));
    const int m = a.extent(0), n = a.extent(1), n2 = b.extent(0), p = b.extent(1);
    if (n != n2)
        throw shape_error("matmul: inner extents differ, " + mxpp::detail::shape_str(a.shape()) +
                          " x " + mxpp::detail::shape_str(b.shape()));
    Tensor<S> out = detail::result<S>({m, p}, a.requires_grad() || b.requires_grad());
    detail::mm_nn(a.data(), b.data(), out.data(), m, n, p);
    out.check_finite("matmul");
    detail::record_if_needed(out, [a, b, out, m, n, p]() mutable {
        const auto& g = out.grad_view();
        if (g.empty()) return;
        if (a.requires_grad()) detail::mm_nt(g.data(), b.data(), a.grad().data(), m, p, n);
        if (b.requires_grad()) detail::mm_tn(a.data(), g.data(), b.grad().data(), m, n, p);
    });
    return out;
}

template <typename S>
Tensor<S> transpose2d(Tensor<S> a) {
    if (a.rank() != 2) throw shape_error("transpose2d: expected rank-2 tensor");
    const int m = a.extent(0), n = a.extent(1);
    Tensor<S> out = detail::result<S>({n, m}, a.requires_grad());
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j)
            out.data()[static_cast<size_t>(j) * m + i] = a.data()[static_cast<size_t>(i) * n + j];
    detail::record_if_needed(out, [a, out, m, n]() mutable {
        const auto& g = out.grad_view();
        if (g.empty()) return;
        auto& ga = a.grad();
        for (int i = 0; i < m; ++i)
            for (int j = 0; j < n; ++j)
                ga[static_cast<size_t>(i) * n + j] += g[static_cast<size_t>(j) * m + i];
    });
    return out;
}

// y_j = sum_i x_i W_ij + b_j. Pass an empty bias tensor sentinel via the
// overload without b for pure linear maps.
template <typename S>
Tensor<S> linear(Tensor<S> x, Tensor<S> w, Tensor<S> b) {
    if (x.rank() != 1 || w.rank() != 2) throw shape_error("linear: expected vector input and rank-2 weight");
    const int in = x.extent(0), out_dim = w.extent(1);
    if (w.extent(0) != in)
        throw shape_error("linear: weight shape " + mxpp::detail::shape_str(w.shape()) +
                          " does not accept input length " + std::to_string(in));
    if (b.rank() != 1 || b.extent(0) != out_dim) throw shape_error("linear: bias length mismatch");
    Tensor<S> out = detail::result<S>({out_dim}, x.requires_grad() || w.requires_grad() || b.requires_grad());
    for (int j = 0; j < out_dim; ++j) out.data()[j] = b.data()[j];
    for (int i = 0; i < in; ++i) {
        const S xv = x.data()[i];
        const S* wr = w.data() + static_cast<size_t>(i) * out_dim;
        for (int j = 0; j < out_dim; ++j) out.data()[j] += xv * wr[j];
    }
    out.check_finite("linear");
    detail::record_if_needed(out, [x, w, b, out, in, out_dim]() mutable {
        const auto& g = out.grad_view();
        if (g.empty()) return;
        if (x.requires_grad()) {
            auto& gx = x.grad();
            for (int i = 0; i < in; ++i) {
                const S* wr = w.data() + static_cast<size_t>(i) * out_dim;
                S acc = S(0);
                for (int j = 0; j < out_dim; ++j) acc += g[j] * wr[j];
                gx[i] += acc;
            }
        }
        if (w.requires_grad()) {
            auto& gw = w.grad();
            for (int i = 0; i < in; ++i) {
                const S xv = x.data()[i];
                S* gr = gw.data() + static_cast<size_t>(i) * out_dim;
                for (int j = 0; j < out_dim; ++j) gr[j] += xv * g[j];
            }
        }
        if (b.requires_grad()) {
            auto& gb = b.grad();
            for (int j = 0; j < out_dim; ++j) gb[j] += g[j];
        }
    });
    return out;
}

template <typename S>
Tensor<S> linear_nobias(Tensor<S> x, Tensor<S> w) {
    Tensor<S> zero_bias = Tensor<S>::zeros({w.extent(1)});
    return linear(x, w, zero_bias);
}

// ---------------------------------------------------------------------------
// normalizers

template <typename S>
Tensor<S> softmax(Tensor<S> x, int axis) {
    size_t outer, inner;
    int len;
    detail::axis_split(x.shape(), axis, outer, len, inner);
    Tensor<S> out = detail::result<S>(x.shape(), x.requires_grad());
    for (size_t o = 0; o < outer; ++o) {
        for (size_t in = 0; in < inner; ++in) {
            const size_t base = o * static_cast<size_t>(len) * inner + in;
            S mx = x.data()[base];
            for (int l = 1; l < len; ++l) mx = std::max(mx, x.data()[base + l * inner]);
            S denom = S(0);
            for (int l = 0; l < len; ++l) {
                const S e = std::exp(x.data()[base + l * inner] - mx);
                out.data()[base + l * inner] = e;
                denom += e;
            }
            for (int l = 0; l < len; ++l) out.data()[base + l * inner] /= denom;
        }
    }
    out.check_finite("softmax");
    detail::record_if_needed(out, [x, out, outer, len, inner]() mutable {
        const auto& g = out.grad_view();
        if (g.empty()) return;
        auto& gx = x.grad();
        for (size_t o = 0; o < outer; ++o) {
            for (size_t in = 0; in < inner; ++in) {
                const size_t base = o * static_cast<size_t>(len) * inner + in;
                S dotv = S(0);
                for (int l = 0; l < len; ++l) dotv += g[base + l * inner] * out.data()[base + l * inner];
                for (int l = 0; l < len; ++l) {
                    const size_t idx = base + l * inner;
                    gx[idx] += out.data()[idx] * (g[idx] - dotv);
                }
            }
        }
    });
    return out;
}

template <typename S>
Tensor<S> log_softmax(Tensor<S> x, int axis) {
    size_t outer, inner;
    int len;
    detail::axis_split(x.shape(), axis, outer, len, inner);
    Tensor<S> out = detail::result<S>(x.shape(), x.requires_grad());
    for (size_t o = 0; o < outer; ++o) {
        for (size_t in = 0; in < inner; ++in) {
            const size_t base = o * static_cast<size_t>(len) * inner + in;
            S mx = x.data()[base];
            for (int l = 1; l < len; ++l) mx = std::max(mx, x.data()[base + l * inner]);
            S denom = S(0);
            for (int l = 0; l < len; ++l) denom += std::exp(x.data()[base + l * inner] - mx);
            const S lse = mx + std::log(denom);
            for (int l = 0; l < len; ++l) out.data()[base + l * inner] = x.data()[base + l * inner] - lse;
        }
    }
    out.check_finite("log_softmax");
    detail::record_if_needed(out, [x, out, outer, len, inner]() mutable {
        const auto& g = out.grad_view();
        if (g.empty()) return;
        auto& gx = x.grad();
        for (size_t o = 0; o < outer; ++o) {
            for (size_t in = 0; in < inner; ++in) {
                const size_t base = o * static_cast<size_t>(len) * inner + in;
                S gsum = S(0);
                for (int l = 0; l < len; ++l) gsum += g[base + l * inner];
                for (int l = 0; l < len; ++l) {
                    const size_t idx = base + l * inner;
                    gx[idx] += g[idx] - std::exp(out.data()[idx]) * gsum;
                }
            }
        }
    });
    return out;
}

// Normalizes each token (all positions along feat_axis at fixed remaining
// indices) to zero mean / unit variance, then applies the affine pair.
template <typename S>
Tensor<S> layer_norm(Tensor<S> x, Tensor<S> gain, Tensor<S> bias, S eps, int feat_axis) {
    size_t outer, inner;
    int len;
    detail::axis_split(x.shape(), feat_axis, outer, len, inner);
    if (gain.rank() != 1 || gain.extent(0) != len || bias.rank() != 1 || bias.extent(0) != len)
        throw shape_error("layer_norm: gain/bias must have the normalized extent " + std::to_string(len));
    Tensor<S> out = detail::result<S>(x.shape(), x.requires_grad() || gain.requires_grad() || bias.requires_grad());
    for (size_t o = 0; o < outer; ++o) {
        for (size_t in = 0; in < inner; ++in) {
            const size_t base = o * static_cast<size_t>(len) * inner + in;
            S mean = S(0);
            for (int l = 0; l < len; ++l) mean += x.data()[base + l * inner];
            mean /= static_cast<S>(len);
            S var = S(0);
            for (int l = 0; l < len; ++l) {
                const S d = x.data()[base + l * inner] - mean;
                var += d * d;
            }
            var /= static_cast<S>(len);
            const S inv = S(1) / std::sqrt(var + eps);
            for (int l = 0; l < len; ++l) {
                const S xhat = (x.data()[base + l * inner] - mean) * inv;
                out.data()[base + l * inner] = gain.data()[l] * xhat + bias.data()[l];
            }
        }
    }
    out.check_finite("layer_norm");
    detail::record_if_needed(out, [x, gain, bias, out, eps, outer, len, inner]() mutable {
        const auto& g = out.grad_view();
        if (g.empty()) return;
        const S flen = static_cast<S>(len);
        for (size_t o = 0; o < outer; ++o) {
            for (size_t in = 0; in < inner; ++in) {
                const size_t base = o * static_cast<size_t>(len) * inner + in;
                S mean = S(0);
                for (int l = 0; l < len; ++l) mean += x.data()[base + l * inner];
                mean /= flen;
                S var = S(0);
                for (int l = 0; l < len; ++l) {
                    const S d = x.data()[base + l * inner] - mean;
                    var += d * d;
                }
                var /= flen;
                const S inv = S(1) / std::sqrt(var + eps);
                // dxhat terms
                S sum_dxhat = S(0), sum_dxhat_xhat = S(0);
                for (int l = 0; l < len; ++l) {
                    const size_t idx = base + l * inner;
                    const S xhat = (x.data()[idx] - mean) * inv;
                    const S dxhat = g[idx] * gain.data()[l];
                    sum_dxhat += dxhat;
                    sum_dxhat_xhat += dxhat * xhat;
                    if (gain.requires_grad()) gain.grad()[l] += g[idx] * xhat;
                    if (bias.requires_grad()) bias.grad()[l] += g[idx];
                }
                if (x.requires_grad()) {
                    auto& gx = x.grad();
                    for (int l = 0; l < len; ++l) {
                        const size_t idx = base + l * inner;
                        const S xhat = (x.data()[idx] - mean) * inv;
                        const S dxhat = g[idx] * gain.data()[l];
                        gx[idx] += inv * (dxhat - sum_dxhat / flen - xhat * sum_dxhat_xhat / flen);
                    }
                }
            }
        }
    });
    return out;
}

// ---------------------------------------------------------------------------
// convolution and spatial ops

// Cross-correlation over (C_in,H,W) with kernel (C_out,C_in,kh,kw).
template <typename S>
Tensor<S> conv2d(Tensor<S> x, Tensor<S> kernel, int stride, int pad) {
    if (x.rank() != 3 || kernel.rank() != 4) throw shape_error("conv2d: expected (C,H,W) input and (Co,Ci,kh,kw) kernel");
    const int ci = x.extent(0), h = x.extent(1), w = x.extent(2);
    const int co = kernel.extent(0), kci = kernel.extent(1), kh = kernel.extent(2), kw = kernel.extent(3);
    if (kci != ci) throw shape_error("conv2d: kernel expects " + std::to_string(kci) + " input channels, got " + std::to_string(ci));
    if (stride < 1) throw shape_error("conv2d: stride must be >= 1");
    const int ho = (h + 2 * pad - kh) / stride + 1;
    const int wo = (w + 2 * pad - kw) / stride + 1;
    if (h + 2 * pad < kh || w + 2 * pad < kw || ho < 1 || wo < 1)
        throw shape_error("conv2d: nonpositive output extent for input " + mxpp::detail::shape_str(x.shape()));
    Tensor<S> out = detail::result<S>({co, ho, wo}, x.requires_grad() || kernel.requires_grad());

    const S* xd = x.data();
    const S* kd = kernel.data();
    S* od = out.data();
    for (int oc = 0; oc < co; ++oc) {
        for (int oy = 0; oy < ho; ++oy) {
            for (int ox = 0; ox < wo; ++ox) {
                S acc = S(0);
                const int iy0 = oy * stride - pad;
                const int ix0 = ox * stride - pad;
                for (int ic = 0; ic < ci; ++ic) {
                    const S* xp = xd + (static_cast<size_t>(ic) * h) * w;
                    const S* kp = kd + ((static_cast<size_t>(oc) * ci + ic) * kh) * kw;
                    for (int ky = 0; ky < kh; ++ky) {
                        const int iy = iy0 + ky;
                        if (iy < 0 || iy >= h) continue;
                        for (int kx = 0; kx < kw; ++kx) {
                            const int ix = ix0 + kx;
                            if (ix < 0 || ix >= w) continue;
                            acc += xp[static_cast<size_t>(iy) * w + ix] * kp[static_cast<size_t>(ky) * kw + kx];
                        }
                    }
                }
                od[(static_cast<size_t>(oc) * ho + oy) * wo + ox] = acc;
            }
        }
    }
    out.check_finite("conv2d");
    detail::record_if_needed(out, [x, kernel, out, stride, pad, ci, h, w, co, kh, kw, ho, wo]() mutable {
        const auto& g = out.grad_view();
        if (g.empty()) return;
        S* gx = x.requires_grad() ? x.grad().data() : nullptr;
        S* gk = kernel.requires_grad() ? kernel.grad().data() : nullptr;
        const S* xd = x.data();
        const S* kd = kernel.data();
        for (int oc = 0; oc < co; ++oc) {
            for (int oy = 0; oy < ho; ++oy) {
                for (int ox = 0; ox < wo; ++ox) {
                    const S go = g[(static_cast<size_t>(oc) * ho + oy) * wo + ox];
                    if (go == S(0)) continue;
                    const int iy0 = oy * stride - pad;
                    const int ix0 = ox * stride - pad;
                    for (int ic = 0; ic < ci; ++ic) {
                        const size_t xbase = static_cast<size_t>(ic) * h * w;
                        const size_t kbase = (static_cast<size_t>(oc) * ci + ic) * kh * kw;
                        for (int ky = 0; ky < kh; ++ky) {
                            const int iy = iy0 + ky;
                            if (iy < 0 || iy >= h) continue;
                            for (int kx = 0; kx < kw; ++kx) {
                                const int ix = ix0 + kx;
                                if (ix < 0 || ix >= w) continue;
                                const size_t xi = xbase + static_cast<size_t>(iy) * w + ix;
                                const size_t ki = kbase + static_cast<size_t>(ky) * kw + kx;
                                if (gx) gx[xi] += go * kd[ki];
                                if (gk) gk[ki] += go * xd[xi];
                            }
                        }
                    }
                }
            }
        }
    });
    return out;
}

template <typename S>
Tensor<S> add_channel_bias(Tensor<S> x, Tensor<S> b) {
    if (x.rank() != 3 || b.rank() != 1 || b.extent(0) != x.extent(0))
        throw shape_error("add_channel_bias: bias length must equal channel count");
    const int c = x.extent(0);
    const size_t hw = static_cast<size_t>(x.extent(1)) * x.extent(2);
    Tensor<S> out = detail::result<S>(x.shape(), x.requires_grad() || b.requires_grad());
    for (int ch = 0; ch < c; ++ch) {
        const S bv = b.data()[ch];
        const S* xp = x.data() + ch * hw;
        S* op = out.data() + ch * hw;
        for (size_t i = 0; i < hw; ++i) op[i] = xp[i] + bv;
    }
    out.check_finite("add_channel_bias");
    detail::record_if_needed(out, [x, b, out, c, hw]() mutable {
        const auto& g = out.grad_view();
        if (g.empty()) return;
        if (x.requires_grad()) {
            auto& gx = x.grad();
            for (size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
        }
        if (b.requires_grad()) {
            auto& gb = b.grad();
            for (int ch = 0; ch < c; ++ch) {
                S acc = S(0);
                const S* gp = g.data() + ch * hw;
                for (size_t i = 0; i < hw; ++i) acc += gp[i];
                gb[ch] += acc;
            }
        }
    });
    return out;
}

// Adds b (length n) to every row of x (m×n).
template <typename S>
Tensor<S> add_row_bias(Tensor<S> x, Tensor<S> b) {
    if (x.rank() != 2 || b.rank() != 1 || b.extent(0) != x.extent(1))
        throw shape_error("add_row_bias: bias length must equal row width");
    const int m = x.extent(0), n = x.extent(1);
    Tensor<S> out = detail::result<S>(x.shape(), x.requires_grad() || b.requires_grad());
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j)
            out.data()[static_cast<size_t>(i) * n + j] = x.data()[static_cast<size_t>(i) * n + j] + b.data()[j];
    out.check_finite("add_row_bias");
    detail::record_if_needed(out, [x, b, out, m, n]() mutable {
        const auto& g = out.grad_view();
        if (g.empty()) return;
        if (x.requires_grad()) {
            auto& gx = x.grad();
            for (size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
        }
        if (b.requires_grad()) {
            auto& gb = b.grad();
            for (int i = 0; i < m; ++i)
                for (int j = 0; j < n; ++j) gb[j] += g[static_cast<size_t>(i) * n + j];
        }
    });
    return out;
}

// Non-overlapping s×s window means over (C,H,W).
template <typename S>
Tensor<S> avg_pool2d(Tensor<S> x, int s) {
    if (x.rank() != 3) throw shape_error("avg_pool2d: expected (C,H,W)");
    if (s < 1) throw shape_error("avg_pool2d: pool factor must be >= 1");
    const int c = x.extent(0), h = x.extent(1), w = x.extent(2);
    if (h % s != 0 || w % s != 0)
        throw shape_error("avg_pool2d: factor " + std::to_string(s) + " does not divide " +
                          mxpp::detail::shape_str(x.shape()));
    const int ho = h / s, wo = w / s;
    Tensor<S> out = detail::result<S>({c, ho, wo}, x.requires_grad());
    const S inv = S(1) / static_cast<S>(s * s);
    for (int ch = 0; ch < c; ++ch)
        for (int oy = 0; oy < ho; ++oy)
            for (int ox = 0; ox < wo; ++ox) {
                S acc = S(0);
                for (int dy = 0; dy < s; ++dy)
                    for (int dx = 0; dx < s; ++dx)
                        acc += x.data()[(static_cast<size_t>(ch) * h + oy * s + dy) * w + ox * s + dx];
                out.data()[(static_cast<size_t>(ch) * ho + oy) * wo + ox] = acc * inv;
            }
    out.check_finite("avg_pool2d");
    detail::record_if_needed(out, [x, out, c, h, w, ho, wo, s, inv]() mutable {
        const auto& g = out.grad_view();
        if (g.empty()) return;
        auto& gx = x.grad();
        for (int ch = 0; ch < c; ++ch)
            for (int oy = 0; oy < ho; ++oy)
                for (int ox = 0; ox < wo; ++ox) {
                    const S go = g[(static_cast<size_t>(ch) * ho + oy) * wo + ox] * inv;
                    for (int dy = 0; dy < s; ++dy)
                        for (int dx = 0; dx < s; ++dx)
                            gx[(static_cast<size_t>(ch) * h + oy * s + dy) * w + ox * s + dx] += go;
                }
    });
    return out;
}

// Nearest-neighbour 2x upsampling of (C,H,W).
template <typename S>
Tensor<S> upsample2x(Tensor<S> x) {
    if (x.rank() != 3) throw shape_error("upsample2x: expected (C,H,W)");
    const int c = x.extent(0), h = x.extent(1), w = x.extent(2);
    Tensor<S> out = detail::result<S>({c, 2 * h, 2 * w}, x.requires_grad());
    for (int ch = 0; ch < c; ++ch)
        for (int y = 0; y < h; ++y)
            for (int xx = 0; xx < w; ++xx) {
                const S v = x.data()[(static_cast<size_t>(ch) * h + y) * w + xx];
                const size_t base = (static_cast<size_t>(ch) * 2 * h + 2 * y) * 2 * w + 2 * xx;
                out.data()[base] = v;
                out.data()[base + 1] = v;
                out.data()[base + 2 * w] = v;
                out.data()[base + 2 * w + 1] = v;
            }
    detail::record_if_needed(out, [x, out, c, h, w]() mutable {
        const auto& g = out.grad_view();
        if (g.empty()) return;
        auto& gx = x.grad();
        for (int ch = 0; ch < c; ++ch)
            for (int y = 0; y < h; ++y)
                for (int xx = 0; xx < w; ++xx) {
                    const size_t base = (static_cast<size_t>(ch) * 2 * h + 2 * y) * 2 * w + 2 * xx;
                    gx[(static_cast<size_t>(ch) * h + y) * w + xx] +=
                        g[base] + g[base + 1] + g[base + 2 * w] + g[base + 2 * w + 1];
                }
    });
    return out;
}

// ---------------------------------------------------------------------------
// axis-0 slicing / concatenation (channel ops for CHW, block ops for vectors)

template <typename S>
Tensor<S> slice_axis0(Tensor<S> x, int from, int to) {
    if (x.rank() < 1) throw shape_error("slice_axis0: rank-0 input");
    const int c = x.extent(0);
    if (from < 0 || to > c || from >= to) throw shape_error("slice_axis0: invalid range");
    std::vector<int> shape = x.shape();
    shape[0] = to - from;
    const size_t block = x.numel() / static_cast<size_t>(c);
    Tensor<S> out = detail::result<S>(shape, x.requires_grad());
    std::copy(x.data() + from * block, x.data() + to * block, out.data());
    detail::record_if_needed(out, [x, out, from, block]() mutable {
        const auto& g = out.grad_view();
        if (g.empty()) return;
        auto& gx = x.grad();
        for (size_t i = 0; i < g.size(); ++i) gx[from * block + i] += g[i];
    });
    return out;
}

// Splits along the channel axis into equal halves.
template <typename S>
std::pair<Tensor<S>, Tensor<S>> chunk_channels(Tensor<S> z) {
    if (z.rank() < 1) throw shape_error("chunk_channels: rank-0 input");
    const int c = z.extent(0);
    if (c % 2 != 0) throw shape_error("chunk_channels: channel count " + std::to_string(c) + " is odd");
    return {slice_axis0(z, 0, c / 2), slice_axis0(z, c / 2, c)};
}

// Channel-order concatenation; trailing extents must match.
template <typename S>
Tensor<S> concat_channels(std::vector<Tensor<S>> parts) {
    if (parts.empty()) throw shape_error("concat_channels: empty input list");
    const auto& first = parts[0].shape();
    int total = 0;
    bool rg = false;
    for (const auto& p : parts) {
        if (p.rank() != parts[0].rank())
            throw shape_error("concat_channels: rank mismatch");
        for (size_t ax = 1; ax < first.size(); ++ax)
            if (p.shape()[ax] != first[ax])
                throw shape_error("concat_channels: trailing extent mismatch " +
                                  mxpp::detail::shape_str(p.shape()) + " vs " + mxpp::detail::shape_str(first));
        total += p.extent(0);
        rg = rg || p.requires_grad();
    }
    std::vector<int> shape = first;
    shape[0] = total;
    Tensor<S> out = detail::result<S>(shape, rg);
    size_t offset = 0;
    for (const auto& p : parts) {
        std::copy(p.data(), p.data() + p.numel(), out.data() + offset);
        offset += p.numel();
    }
    detail::record_if_needed(out, [parts, out]() mutable {
        const auto& g = out.grad_view();
        if (g.empty()) return;
        size_t offset = 0;
        for (auto& p : parts) {
            if (p.requires_grad()) {
                auto& gp = p.grad();
                for (size_t i = 0; i < p.numel(); ++i) gp[i] += g[offset + i];
            }
            offset += p.numel();
        }
    });
    return out;
}

template <typename S>
Tensor<S> reshape(Tensor<S> x, std::vector<int> shape) {
    if (mxpp::detail::shape_numel(shape) != x.numel())
        throw shape_error("reshape: element count mismatch " + mxpp::detail::shape_str(x.shape()) +
                          " -> " + mxpp::detail::shape_str(shape));
    Tensor<S> out = detail::result<S>(std::move(shape), x.requires_grad());
    std::copy(x.data(), x.data() + x.numel(), out.data());
    detail::record_if_needed(out, [x, out]() mutable {
        const auto& g = out.grad_view();
        if (g.empty()) return;
        auto& gx = x.grad();
        for (size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
    });
    return out;
}

// ---------------------------------------------------------------------------
// activations

template <typename S>
Tensor<S> relu(Tensor<S> x) {
    Tensor<S> out = detail::result<S>(x.shape(), x.requires_grad());
    for (size_t i = 0; i < x.numel(); ++i) out.data()[i] = x.data()[i] > S(0) ? x.data()[i] : S(0);
    detail::record_if_needed(out, [x, out]() mutable {
        const auto& g = out.grad_view();
        if (g.empty()) return;
        auto& gx = x.grad();
        for (size_t i = 0; i < g.size(); ++i)
            if (x.data()[i] > S(0)) gx[i] += g[i];
    });
    return out;
}

template <typename S>
Tensor<S> leaky_relu(Tensor<S> x, S slope) {
    Tensor<S> out = detail::result<S>(x.shape(), x.requires_grad());
    for (size_t i = 0; i < x.numel(); ++i) {
        const S v = x.data()[i];
        out.data()[i] = v > S(0) ? v : slope * v;
    }
    out.check_finite("leaky_relu");
    detail::record_if_needed(out, [x, out, slope]() mutable {
        const auto& g = out.grad_view();
        if (g.empty()) return;
        auto& gx = x.grad();
        for (size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * (x.data()[i] > S(0) ? S(1) : slope);
    });
    return out;
}

// Exact Gauss-error-function form.
template <typename S>
Tensor<S> gelu(Tensor<S> x) {
    constexpr double inv_sqrt2 = 0.7071067811865475244;
    constexpr double inv_sqrt2pi = 0.3989422804014326779;
    Tensor<S> out = detail::result<S>(x.shape(), x.requires_grad());
    for (size_t i = 0; i < x.numel(); ++i) {
        const double v = static_cast<double>(x.data()[i]);
        out.data()[i] = static_cast<S>(0.5 * v * (1.0 + std::erf(v * inv_sqrt2)));
    }
    out.check_finite("gelu");
    detail::record_if_needed(out, [x, out]() mutable {
        const auto& g = out.grad_view();
        if (g.empty()) return;
        auto& gx = x.grad();
        for (size_t i = 0; i < g.size(); ++i) {
            const double v = static_cast<double>(x.data()[i]);
            const double cdf = 0.5 * (1.0 + std::erf(v * inv_sqrt2));
            const double pdf = inv_sqrt2pi * std::exp(-0.5 * v * v);
            gx[i] += g[i] * static_cast<S>(cdf + v * pdf);
        }
    });
    return out;
}

// Clamp to [0,1]; pass-through gradient strictly inside the interval.
template <typename S>
Tensor<S> clamp01(Tensor<S> x) {
    Tensor<S> out = detail::result<S>(x.shape(), x.requires_grad());
    for (size_t i = 0; i < x.numel(); ++i) out.data()[i] = std::min(S(1), std::max(S(0), x.data()[i]));
    detail::record_if_needed(out, [x, out]() mutable {
        const auto& g = out.grad_view();
        if (g.empty()) return;
        auto& gx = x.grad();
        for (size_t i = 0; i < g.size(); ++i)
            if (x.data()[i] > S(0) && x.data()[i] < S(1)) gx[i] += g[i];
    });
    return out;
}

template <typename S>
Tensor<S> sigmoid(Tensor<S> x) {
    Tensor<S> out = detail::result<S>(x.shape(), x.requires_grad());
    for (size_t i = 0; i < x.numel(); ++i) {
        const S v = x.data()[i];
        out.data()[i] = v >= S(0) ? S(1) / (S(1) + std::exp(-v))
                                  : std::exp(v) / (S(1) + std::exp(v));
    }
    out.check_finite("sigmoid");
    detail::record_if_needed(out, [x, out]() mutable {
        const auto& g = out.grad_view();
        if (g.empty()) return;
        auto& gx = x.grad();
        for (size_t i = 0; i < g.size(); ++i) {
            const S y = out.data()[i];
            gx[i] += g[i] * y * (S(1) - y);
        }
    });
    return out;
}

// ---------------------------------------------------------------------------
// reductions and scalar plumbing

template <typename S>
Tensor<S> sum_all(Tensor<S> x) {
    Tensor<S> out = detail::result<S>({1}, x.requires_grad());
    S acc = S(0);
    for (size_t i = 0; i < x.numel(); ++i) acc += x.data()[i];
    out.data()[0] = acc;
    out.check_finite("sum_all");
    detail::record_if_needed(out, [x, out]() mutable {
        const auto& g = out.grad_view();
        if (g.empty()) return;
        auto& gx = x.grad();
        for (size_t i = 0; i < gx.size(); ++i) gx[i] += g[0];
    });
    return out;
}

template <typename S>
Tensor<S> mean_all(Tensor<S> x) {
    return mul_scalar(sum_all(x), S(1) / static_cast<S>(x.numel()));
}

// Per-channel spatial mean: (C,H,W) -> (C).
template <typename S>
Tensor<S> spatial_mean(Tensor<S> x) {
    if (x.rank() != 3) throw shape_error("spatial_mean: expected (C,H,W)");
    const int c = x.extent(0);
    const size_t hw = static_cast<size_t>(x.extent(1)) * x.extent(2);
    Tensor<S> out = detail::result<S>({c}, x.requires_grad());
    const S inv = S(1) / static_cast<S>(hw);
    for (int ch = 0; ch < c; ++ch) {
        S acc = S(0);
        const S* xp = x.data() + ch * hw;
        for (size_t i = 0; i < hw; ++i) acc += xp[i];
        out.data()[ch] = acc * inv;
    }
    out.check_finite("spatial_mean");
    detail::record_if_needed(out, [x, out, c, hw, inv]() mutable {
        const auto& g = out.grad_view();
        if (g.empty()) return;
        auto& gx = x.grad();
        for (int ch = 0; ch < c; ++ch) {
            const S go = g[ch] * inv;
            S* gp = gx.data() + ch * hw;
            for (size_t i = 0; i < hw; ++i) gp[i] += go;
        }
    });
    return out;
}

template <typename S>
Tensor<S> dot(Tensor<S> a, Tensor<S> b) {
    detail::require_same_shape(a, b, "dot");
    Tensor<S> out = detail::result<S>({1}, a.requires_grad() || b.requires_grad());
    S acc = S(0);
    for (size_t i = 0; i < a.numel(); ++i) acc += a.data()[i] * b.data()[i];
    out.data()[0] = acc;
    out.check_finite("dot");
    detail::record_if_needed(out, [a, b, out]() mutable {
        const auto& g = out.grad_view();
        if (g.empty()) return;
        if (a.requires_grad()) {
            auto& ga = a.grad();
            for (size_t i = 0; i < ga.size(); ++i) ga[i] += g[0] * b.data()[i];
        }
        if (b.requires_grad()) {
            auto& gb = b.grad();
            for (size_t i = 0; i < gb.size(); ++i) gb[i] += g[0] * a.data()[i];
        }
    });
    return out;
}

template <typename S>
Tensor<S> l2_norm(Tensor<S> x) {
    Tensor<S> out = detail::result<S>({1}, x.requires_grad());
    S acc = S(0);
    for (size_t i = 0; i < x.numel(); ++i) acc += x.data()[i] * x.data()[i];
    const S nrm = std::sqrt(acc);
    out.data()[0] = nrm;
    out.check_finite("l2_norm");
    detail::record_if_needed(out, [x, out, nrm]() mutable {
        const auto& g = out.grad_view();
        if (g.empty()) return;
        if (nrm == S(0)) return; // subgradient 0 at the origin
        auto& gx = x.grad();
        for (size_t i = 0; i < gx.size(); ++i) gx[i] += g[0] * x.data()[i] / nrm;
    });
    return out;
}

// Mean absolute per-element difference as one node (L1 reconstruction loss).
template <typename S>
Tensor<S> mean_abs_error(Tensor<S> a, Tensor<S> b) {
    detail::require_same_shape(a, b, "mean_abs_error");
    Tensor<S> out = detail::result<S>({1}, a.requires_grad() || b.requires_grad());
    S acc = S(0);
    for (size_t i = 0; i < a.numel(); ++i) acc += std::abs(a.data()[i] - b.data()[i]);
    const S inv = S(1) / static_cast<S>(a.numel());
    out.data()[0] = acc * inv;
    out.check_finite("mean_abs_error");
    detail::record_if_needed(out, [a, b, out, inv]() mutable {
        const auto& g = out.grad_view();
        if (g.empty()) return;
        const S go = g[0] * inv;
        for (size_t i = 0; i < a.numel(); ++i) {
            const S d = a.data()[i] - b.data()[i];
            const S s = d > S(0) ? S(1) : (d < S(0) ? S(-1) : S(0));
            if (a.requires_grad()) a.grad()[i] += go * s;
            if (b.requires_grad()) b.grad()[i] -= go * s;
        }
    });
    return out;
}

// Selects one element as a scalar node.
template <typename S>
Tensor<S> pick(Tensor<S> x, size_t flat_index) {
    if (flat_index >= x.numel()) throw shape_error("pick: index out of range");
    Tensor<S> out = detail::result<S>({1}, x.requires_grad());
    out.data()[0] = x.data()[flat_index];
    detail::record_if_needed(out, [x, out, flat_index]() mutable {
        const auto& g = out.grad_view();
        if (g.empty()) return;
        x.grad()[flat_index] += g[0];
    });
    return out;
}

// Row of a rank-2 tensor as a vector node (embedding lookup).
template <typename S>
Tensor<S> row(Tensor<S> x, int i) {
    if (x.rank() != 2) throw shape_error("row: expected rank-2 tensor");
    if (i < 0 || i >= x.extent(0)) throw shape_error("row: index " + std::to_string(i) + " out of range");
    const int n = x.extent(1);
    Tensor<S> out = detail::result<S>({n}, x.requires_grad());
    std::copy(x.data() + static_cast<size_t>(i) * n, x.data() + static_cast<size_t>(i + 1) * n, out.data());
    detail::record_if_needed(out, [x, out, i, n]() mutable {
        const auto& g = out.grad_view();
        if (g.empty()) return;
        auto& gx = x.grad();
        for (int j = 0; j < n; ++j) gx[static_cast<size_t>(i) * n + j] += g[j];
    });
    return out;
}

// Softmax cross-entropy of a logit vector against a class index.
template <typename S>
Tensor<S> cross_entropy(Tensor<S> logits, int target) {
    if (logits.rank() != 1) throw shape_error("cross_entropy: expected logit vector");
    if (target < 0 || target >= logits.extent(0)) throw shape_error("cross_entropy: target out of range");
    return neg(pick(log_softmax(logits, 0), static_cast<size_t>(target)));
}

// Mean of scalar nodes.
template <typename S>
Tensor<S> mean_of(std::vector<Tensor<S>> scalars) {
    return mul_scalar(add_n(scalars), S(1) / static_cast<S>(scalars.size()));
}

} // namespace ops
} // namespace mxpp
