#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <vector>

#include "leno/autodiff.hpp"

namespace leno {

template <class T>
T sign_of(T v) {
    // sign(0) = 0
    if (v > T(0)) return T(1);
    if (v < T(0)) return T(-1);
    return T(0);
}

constexpr double kBceClamp = 1e-7;

// ---- conv2d: input [Cin,H,W], weight [Cout,Cin,k,k], bias [Cout] ----

template <class T>
Tensor<T> conv2d_forward(const Tensor<T>& in, const Tensor<T>& w, const Tensor<T>& b,
                         int stride, int pad) {
    if (in.ndim() != 3 || w.ndim() != 4 || b.ndim() != 1)
        throw DimensionError("conv2d expects input [C,H,W], weight [O,C,k,k], bias [O]");
    const int cin = in.dim(0), h = in.dim(1), wd = in.dim(2);
    const int cout = w.dim(0), k = w.dim(2);
    if (w.dim(1) != cin) throw DimensionError("conv2d weight input-channel mismatch");
    if (w.dim(3) != k || k % 2 == 0) throw DimensionError("conv2d kernel must be square and odd");
    if (b.dim(0) != cout) throw DimensionError("conv2d bias length mismatch");
    if (stride != 1 && stride != 2) throw DimensionError("conv2d stride must be 1 or 2");
    if (h + 2 * pad < k || wd + 2 * pad < k) throw DimensionError("conv2d input too small for kernel");

    const int ho = (h + 2 * pad - k) / stride + 1;
    const int wo = (wd + 2 * pad - k) / stride + 1;
    Tensor<T> out({cout, ho, wo});
    for (int oc = 0; oc < cout; ++oc) {
        for (int oy = 0; oy < ho; ++oy) {
            for (int ox = 0; ox < wo; ++ox) {
                T acc = b[static_cast<std::size_t>(oc)];
                for (int ic = 0; ic < cin; ++ic) {
                    for (int ky = 0; ky < k; ++ky) {
                        const int iy = oy * stride + ky - pad;
                        if (iy < 0 || iy >= h) continue;
                        const T* in_row = &in.data[(static_cast<std::size_t>(ic) * h + iy) * wd];
                        const T* w_row =
                            &w.data[((static_cast<std::size_t>(oc) * cin + ic) * k + ky) * k];
                        for (int kx = 0; kx < k; ++kx) {
                            const int ix = ox * stride + kx - pad;
                            if (ix < 0 || ix >= wd) continue;
                            acc += in_row[ix] * w_row[kx];
                        }
                    }
                }
                out.at3(oc, oy, ox) = acc;
            }
        }
    }
    return out;
}

template <class T>
Var<T> conv2d(const Var<T>& in, const Var<T>& w, const Var<T>& b, int stride, int pad) {
    Tensor<T> out = conv2d_forward(in.value(), w.value(), b.value(), stride, pad);
    auto in_n = in.node();
    auto w_n = w.node();
    auto b_n = b.node();
    return make_result<T>(
        std::move(out), {in_n, w_n, b_n}, [stride, pad](Node<T>& n) {
            const Tensor<T>& go = n.grad;
            const Tensor<T>& inv = n.parents[0]->value;
            const Tensor<T>& wv = n.parents[1]->value;
            const int cin = inv.dim(0), h = inv.dim(1), wd = inv.dim(2);
            const int cout = wv.dim(0), k = wv.dim(2);
            const int ho = go.dim(1), wo = go.dim(2);
            const bool need_in = n.parents[0]->requires_grad;
            const bool need_w = n.parents[1]->requires_grad;
            const bool need_b = n.parents[2]->requires_grad;
            if (need_in) n.parents[0]->ensure_grad();
            if (need_w) n.parents[1]->ensure_grad();
            if (need_b) n.parents[2]->ensure_grad();
            Tensor<T>* gin = need_in ? &n.parents[0]->grad : nullptr;
            Tensor<T>* gw = need_w ? &n.parents[1]->grad : nullptr;
            Tensor<T>* gb = need_b ? &n.parents[2]->grad : nullptr;
            for (int oc = 0; oc < cout; ++oc) {
                for (int oy = 0; oy < ho; ++oy) {
                    for (int ox = 0; ox < wo; ++ox) {
                        const T g = go.at3(oc, oy, ox);
                        if (gb) gb->data[static_cast<std::size_t>(oc)] += g;
                        if (!gin && !gw) continue;
                        for (int ic = 0; ic < cin; ++ic) {
                            for (int ky = 0; ky < k; ++ky) {
                                const int iy = oy * stride + ky - pad;
                                if (iy < 0 || iy >= h) continue;
                                for (int kx = 0; kx < k; ++kx) {
                                    const int ix = ox * stride + kx - pad;
                                    if (ix < 0 || ix >= wd) continue;
                                    const std::size_t ii =
                                        (static_cast<std::size_t>(ic) * h + iy) * wd + ix;
                                    const std::size_t wi =
                                        ((static_cast<std::size_t>(oc) * cin + ic) * k + ky) * k +
                                        kx;
                                    if (gw) gw->data[wi] += g * inv.data[ii];
                                    if (gin) gin->data[ii] += g * wv.data[wi];
                                }
                            }
                        }
                    }
                }
            }
        });
}

// ---- elementwise ----

template <class T>
Var<T> relu(const Var<T>& x) {
    Tensor<T> out = x.value();
    for (auto& v : out.data)
        if (v < T(0)) v = T(0);
    return make_result<T>(std::move(out), {x.node()}, [](Node<T>& n) {
        auto& p = *n.parents[0];
        p.ensure_grad();
        for (std::size_t i = 0; i < n.grad.data.size(); ++i)
            if (p.value.data[i] > T(0)) p.grad.data[i] += n.grad.data[i];
    });
}

template <class T>
Var<T> sigmoid(const Var<T>& x) {
    Tensor<T> out = x.value();
    for (auto& v : out.data) v = T(1) / (T(1) + std::exp(-v));
    Tensor<T> saved = out;
    return make_result<T>(std::move(out), {x.node()}, [saved](Node<T>& n) {
        auto& p = *n.parents[0];
        p.ensure_grad();
        for (std::size_t i = 0; i < n.grad.data.size(); ++i) {
            const T s = saved.data[i];
            p.grad.data[i] += n.grad.data[i] * s * (T(1) - s);
        }
    });
}

template <class T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
    if (!a.value().same_shape(b.value())) throw DimensionError("add requires equal shapes");
    Tensor<T> out = a.value();
    for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] += b.value().data[i];
    return make_result<T>(std::move(out), {a.node(), b.node()}, [](Node<T>& n) {
        for (int side = 0; side < 2; ++side) {
            auto& p = *n.parents[side];
            if (!p.requires_grad) continue;
            p.ensure_grad();
            for (std::size_t i = 0; i < n.grad.data.size(); ++i)
                p.grad.data[i] += n.grad.data[i];
        }
    });
}

template <class T>
Var<T> mul(const Var<T>& a, const Var<T>& b) {
    if (!a.value().same_shape(b.value())) throw DimensionError("mul requires equal shapes");
    Tensor<T> out = a.value();
    for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] *= b.value().data[i];
    return make_result<T>(std::move(out), {a.node(), b.node()}, [](Node<T>& n) {
        for (int side = 0; side < 2; ++side) {
            auto& p = *n.parents[side];
            if (!p.requires_grad) continue;
            const auto& other = n.parents[1 - side]->value;
            p.ensure_grad();
            for (std::size_t i = 0; i < n.grad.data.size(); ++i)
                p.grad.data[i] += n.grad.data[i] * other.data[i];
        }
    });
}

template <class T>
Var<T> scale(const Var<T>& x, T c) {
    Tensor<T> out = x.value();
    for (auto& v : out.data) v *= c;
    return make_result<T>(std::move(out), {x.node()}, [c](Node<T>& n) {
        auto& p = *n.parents[0];
        p.ensure_grad();
        for (std::size_t i = 0; i < n.grad.data.size(); ++i)
            p.grad.data[i] += c * n.grad.data[i];
    });
}

// ---- pooling / resampling ----

template <class T>
Var<T> maxpool2(const Var<T>& x) {
    const Tensor<T>& in = x.value();
    if (in.ndim() != 3) throw DimensionError("maxpool2 expects [C,H,W]");
    const int c = in.dim(0), h = in.dim(1), w = in.dim(2);
    if (h % 2 != 0 || w % 2 != 0) throw DimensionError("maxpool2 requires even spatial dims");
    const int ho = h / 2, wo = w / 2;
    Tensor<T> out({c, ho, wo});
    std::vector<std::size_t> argmax(out.numel());
    for (int ic = 0; ic < c; ++ic) {
        for (int oy = 0; oy < ho; ++oy) {
            for (int ox = 0; ox < wo; ++ox) {
                // first occurrence in row-major order wins ties
                std::size_t best_i = 0;
                T best = -std::numeric_limits<T>::infinity();
                for (int dy = 0; dy < 2; ++dy) {
                    for (int dx = 0; dx < 2; ++dx) {
                        const std::size_t ii =
                            (static_cast<std::size_t>(ic) * h + 2 * oy + dy) * w + 2 * ox + dx;
                        if (in.data[ii] > best) {
                            best = in.data[ii];
                            best_i = ii;
                        }
                    }
                }
                const std::size_t oi = (static_cast<std::size_t>(ic) * ho + oy) * wo + ox;
                out.data[oi] = best;
                argmax[oi] = best_i;
            }
        }
    }
    return make_result<T>(std::move(out), {x.node()}, [argmax](Node<T>& n) {
        auto& p = *n.parents[0];
        p.ensure_grad();
        for (std::size_t oi = 0; oi < n.grad.data.size(); ++oi)
            p.grad.data[argmax[oi]] += n.grad.data[oi];
    });
}

// Bilinear resize, half-pixel centers (align_corners = false).
template <class T>
Var<T> upsample_bilinear(const Var<T>& x, int ho, int wo) {
    const Tensor<T>& in = x.value();
    if (in.ndim() != 3) throw DimensionError("upsample_bilinear expects [C,H,W]");
    if (ho <= 0 || wo <= 0) throw DimensionError("upsample_bilinear target must be positive");
    const int c = in.dim(0), h = in.dim(1), w = in.dim(2);

    struct Tap {
        int lo, hi;
        T frac;
    };
    auto make_taps = [](int n_in, int n_out) {
        std::vector<Tap> taps(static_cast<std::size_t>(n_out));
        const double s = static_cast<double>(n_in) / n_out;
        for (int o = 0; o < n_out; ++o) {
            double src = (o + 0.5) * s - 0.5;
            if (src < 0) src = 0;
            int lo = static_cast<int>(src);
            if (lo > n_in - 1) lo = n_in - 1;
            const int hi = std::min(lo + 1, n_in - 1);
            taps[static_cast<std::size_t>(o)] = {lo, hi, static_cast<T>(src - lo)};
        }
        return taps;
    };
    const auto ty = make_taps(h, ho);
    const auto tx = make_taps(w, wo);

    Tensor<T> out({c, ho, wo});
    for (int ic = 0; ic < c; ++ic) {
        for (int oy = 0; oy < ho; ++oy) {
            const Tap& a = ty[static_cast<std::size_t>(oy)];
            for (int ox = 0; ox < wo; ++ox) {
                const Tap& bx = tx[static_cast<std::size_t>(ox)];
                const T v00 = in.at3(ic, a.lo, bx.lo), v01 = in.at3(ic, a.lo, bx.hi);
                const T v10 = in.at3(ic, a.hi, bx.lo), v11 = in.at3(ic, a.hi, bx.hi);
                const T top = v00 + (v01 - v00) * bx.frac;
                const T bot = v10 + (v11 - v10) * bx.frac;
                out.at3(ic, oy, ox) = top + (bot - top) * a.frac;
            }
        }
    }
    return make_result<T>(std::move(out), {x.node()}, [ty, tx](Node<T>& n) {
        auto& p = *n.parents[0];
        p.ensure_grad();
        const int c = n.grad.dim(0), ho = n.grad.dim(1), wo = n.grad.dim(2);
        for (int ic = 0; ic < c; ++ic) {
            for (int oy = 0; oy < ho; ++oy) {
                const Tap& a = ty[static_cast<std::size_t>(oy)];
                for (int ox = 0; ox < wo; ++ox) {
                    const Tap& bx = tx[static_cast<std::size_t>(ox)];
                    const T g = n.grad.at3(ic, oy, ox);
                    p.grad.at3(ic, a.lo, bx.lo) += g * (T(1) - a.frac) * (T(1) - bx.frac);
                    p.grad.at3(ic, a.lo, bx.hi) += g * (T(1) - a.frac) * bx.frac;
                    p.grad.at3(ic, a.hi, bx.lo) += g * a.frac * (T(1) - bx.frac);
                    p.grad.at3(ic, a.hi, bx.hi) += g * a.frac * bx.frac;
                }
            }
        }
    });
}

// ---- reductions / losses ----

template <class T>
Var<T> bce(const Var<T>& pred, const Var<T>& target) {
    if (!pred.value().same_shape(target.value())) throw DimensionError("bce shape mismatch");
    const auto& p = pred.value().data;
    const auto& t = target.value().data;
    for (T v : t)
        if (v < T(0) || v > T(1)) throw DomainError("bce target outside [0,1]");
    const T lo = static_cast<T>(kBceClamp), hi = T(1) - static_cast<T>(kBceClamp);
    const std::size_t n = p.size();
    T acc = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const T pc = std::clamp(p[i], lo, hi);
        acc += -(t[i] * std::log(pc) + (T(1) - t[i]) * std::log(T(1) - pc));
    }
    Tensor<T> out({1}, std::vector<T>{acc / static_cast<T>(n)});
    return make_result<T>(std::move(out), {pred.node(), target.node()}, [lo, hi](Node<T>& nd) {
        const T g = nd.grad.data[0];
        const auto& p = nd.parents[0]->value.data;
        const auto& t = nd.parents[1]->value.data;
        const T inv_n = T(1) / static_cast<T>(p.size());
        if (nd.parents[0]->requires_grad) {
            nd.parents[0]->ensure_grad();
            auto& gp = nd.parents[0]->grad.data;
            for (std::size_t i = 0; i < p.size(); ++i) {
                if (p[i] <= lo || p[i] >= hi) continue;  // clamp kills the gradient
                gp[i] += g * inv_n * (-(t[i] / p[i]) + (T(1) - t[i]) / (T(1) - p[i]));
            }
        }
        if (nd.parents[1]->requires_grad) {
            nd.parents[1]->ensure_grad();
            auto& gt = nd.parents[1]->grad.data;
            for (std::size_t i = 0; i < p.size(); ++i) {
                const T pc = std::clamp(p[i], lo, hi);
                gt[i] += g * inv_n * (std::log(T(1) - pc) - std::log(pc));
            }
        }
    });
}

template <class T>
Var<T> mse(const Var<T>& pred, const Var<T>& target) {
    if (!pred.value().same_shape(target.value())) throw DimensionError("mse shape mismatch");
    const auto& p = pred.value().data;
    const auto& t = target.value().data;
    const std::size_t n = p.size();
    T acc = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const T d = p[i] - t[i];
        acc += d * d;
    }
    Tensor<T> out({1}, std::vector<T>{acc / static_cast<T>(n)});
    return make_result<T>(std::move(out), {pred.node(), target.node()}, [](Node<T>& nd) {
        const T g = nd.grad.data[0];
        const auto& p = nd.parents[0]->value.data;
        const auto& t = nd.parents[1]->value.data;
        const T c = T(2) / static_cast<T>(p.size());
        for (int side = 0; side < 2; ++side) {
            auto& par = *nd.parents[side];
            if (!par.requires_grad) continue;
            par.ensure_grad();
            const T s = side == 0 ? T(1) : T(-1);
            for (std::size_t i = 0; i < p.size(); ++i)
                par.grad.data[i] += g * s * c * (p[i] - t[i]);
        }
    });
}

template <class T>
Var<T> mean_channels(const Var<T>& x) {
    const Tensor<T>& in = x.value();
    if (in.ndim() != 3) throw DimensionError("mean_channels expects [C,H,W]");
    const int c = in.dim(0), h = in.dim(1), w = in.dim(2);
    Tensor<T> out({1, h, w});
    for (int ic = 0; ic < c; ++ic)
        for (int i = 0; i < h * w; ++i)
            out.data[static_cast<std::size_t>(i)] +=
                in.data[static_cast<std::size_t>(ic) * h * w + i];
    for (auto& v : out.data) v /= static_cast<T>(c);
    return make_result<T>(std::move(out), {x.node()}, [c, h, w](Node<T>& n) {
        auto& p = *n.parents[0];
        p.ensure_grad();
        const T inv_c = T(1) / static_cast<T>(c);
        for (int ic = 0; ic < c; ++ic)
            for (int i = 0; i < h * w; ++i)
                p.grad.data[static_cast<std::size_t>(ic) * h * w + i] +=
                    n.grad.data[static_cast<std::size_t>(i)] * inv_c;
    });
}

// Channel slice [c0, c1) of a [C,H,W] tensor.
template <class T>
Var<T> slice_channels(const Var<T>& x, int c0, int c1) {
    const Tensor<T>& in = x.value();
    if (in.ndim() != 3) throw DimensionError("slice_channels expects [C,H,W]");
    if (c0 < 0 || c1 <= c0 || c1 > in.dim(0)) throw DimensionError("slice_channels range invalid");
    const int h = in.dim(1), w = in.dim(2);
    const std::size_t plane = static_cast<std::size_t>(h) * w;
    Tensor<T> out({c1 - c0, h, w});
    std::copy(in.data.begin() + static_cast<std::ptrdiff_t>(c0 * plane),
              in.data.begin() + static_cast<std::ptrdiff_t>(c1 * plane), out.data.begin());
    return make_result<T>(std::move(out), {x.node()}, [c0, plane](Node<T>& n) {
        auto& p = *n.parents[0];
        p.ensure_grad();
        for (std::size_t i = 0; i < n.grad.data.size(); ++i)
            p.grad.data[static_cast<std::size_t>(c0) * plane + i] += n.grad.data[i];
    });
}

// Places a [C,hs,ws] block into a zero [C,H,W] canvas at offset (oy,ox).
template <class T>
Var<T> embed2d(const Var<T>& x, int h, int w, int oy, int ox) {
    const Tensor<T>& in = x.value();
    if (in.ndim() != 3) throw DimensionError("embed2d expects [C,H,W]");
    const int c = in.dim(0), hs = in.dim(1), ws = in.dim(2);
    if (oy < 0 || ox < 0 || oy + hs > h || ox + ws > w)
        throw DimensionError("embed2d block out of bounds");
    Tensor<T> out({c, h, w});
    for (int ic = 0; ic < c; ++ic)
        for (int y = 0; y < hs; ++y)
            for (int xx = 0; xx < ws; ++xx)
                out.at3(ic, oy + y, ox + xx) = in.at3(ic, y, xx);
    return make_result<T>(std::move(out), {x.node()}, [hs, ws, oy, ox](Node<T>& n) {
        auto& p = *n.parents[0];
        p.ensure_grad();
        const int c = p.value.dim(0);
        for (int ic = 0; ic < c; ++ic)
            for (int y = 0; y < hs; ++y)
                for (int xx = 0; xx < ws; ++xx)
                    p.grad.at3(ic, y, xx) += n.grad.at3(ic, oy + y, ox + xx);
    });
}

// Scalar inner product with a constant weight map.
template <class T>
Var<T> dot_const(const Var<T>& x, const Tensor<T>& w) {
    if (!x.value().same_shape(w)) throw DimensionError("dot_const shape mismatch");
    T acc = 0;
    for (std::size_t i = 0; i < w.data.size(); ++i) acc += x.value().data[i] * w.data[i];
    Tensor<T> out({1}, std::vector<T>{acc});
    return make_result<T>(std::move(out), {x.node()}, [w](Node<T>& n) {
        auto& p = *n.parents[0];
        p.ensure_grad();
        const T g = n.grad.data[0];
        for (std::size_t i = 0; i < w.data.size(); ++i) p.grad.data[i] += g * w.data[i];
    });
}

template <class T>
Var<T> sum_all(const Var<T>& x) {
    T acc = 0;
    for (T v : x.value().data) acc += v;
    Tensor<T> out({1}, std::vector<T>{acc});
    return make_result<T>(std::move(out), {x.node()}, [](Node<T>& n) {
        auto& p = *n.parents[0];
        p.ensure_grad();
        for (auto& g : p.grad.data) g += n.grad.data[0];
    });
}

// ---- optimizer ----

template <class T>
void sgd_step(const std::vector<Var<T>>& params, T lr) {
    if (lr <= T(0)) throw ConfigError("sgd_step learning rate must be positive");
    for (const auto& p : params) {
        auto n = p.node();
        if (!n->requires_grad || n->grad.data.empty()) continue;
        if (!n->grad.same_shape(n->value)) throw DimensionError("sgd_step grad shape mismatch");
        for (std::size_t i = 0; i < n->value.data.size(); ++i)
            n->value.data[i] -= lr * n->grad.data[i];
    }
}

} // namespace leno
