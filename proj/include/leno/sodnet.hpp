#pragma once

#include <array>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "leno/ops.hpp"

namespace leno {

enum class InitKind { gaussian, uniform, constant };
enum class Placement { cross, full, center };

inline const char* to_string(InitKind k) {
    switch (k) {
        case InitKind::gaussian: return "gaussian";
        case InitKind::uniform: return "uniform";
        case InitKind::constant: return "constant";
    }
    return "?";
}

inline const char* to_string(Placement p) {
    switch (p) {
        case Placement::cross: return "cross";
        case Placement::full: return "full";
        case Placement::center: return "center";
    }
    return "?";
}

inline InitKind init_kind_from_string(const std::string& s) {
    if (s == "gaussian") return InitKind::gaussian;
    if (s == "uniform") return InitKind::uniform;
    if (s == "constant") return InitKind::constant;
    throw ConfigError("unknown init kind: " + s);
}

inline Placement placement_from_string(const std::string& s) {
    if (s == "cross") return Placement::cross;
    if (s == "full") return Placement::full;
    if (s == "center") return Placement::center;
    throw ConfigError("unknown placement: " + s);
}

struct ModelConfig {
    int channels = 16;  // stem output channels
    int height = 64;
    int width = 64;
    bool defense = true;
    InitKind init_kind = InitKind::gaussian;
    Placement placement = Placement::cross;
    int noise_layers = 1;
    bool resample_per_forward = false;
};

// Base-sample variance per init kind. Gaussian variance and the constant of
// 0.5 are chosen so the average perturbation intensity matches across kinds.
inline double init_variance(InitKind k) {
    switch (k) {
        case InitKind::gaussian: return 0.734;
        case InitKind::uniform: return 1.0;
        case InitKind::constant: return 0.0;
    }
    return 0.0;
}

constexpr double kNoiseWeightInit = 0.25;

// Two fixed base noise samples covering a vertical and a horizontal half-band,
// each scaled by a learnable same-shape weight map. Only w1/w2 learn.
template <class T>
struct ShallowNoise {
    Tensor<T> n1;  // [C, H, W/2], fixed after construction
    Tensor<T> n2;  // [C, H/2, W], fixed after construction
    Var<T> n1v, n2v;  // leaf wrappers, requires_grad = false
    Var<T> w1, w2;    // learnable weights, initialized to 0.25
    InitKind init_kind = InitKind::gaussian;
    Placement placement = Placement::cross;
    int c = 0, h = 0, w = 0;  // feature shape this layer applies to

    void sample_bases(Rng& rng) {
        switch (init_kind) {
            case InitKind::gaussian:
                rng.fill_gaussian(n1, T(0), static_cast<T>(std::sqrt(init_variance(init_kind))));
                rng.fill_gaussian(n2, T(0), static_cast<T>(std::sqrt(init_variance(init_kind))));
                break;
            case InitKind::uniform: {
                const T r = static_cast<T>(std::sqrt(3.0));  // zero mean, unit variance
                rng.fill_uniform(n1, -r, r);
                rng.fill_uniform(n2, -r, r);
                break;
            }
            case InitKind::constant:
                std::fill(n1.data.begin(), n1.data.end(), T(0.5));
                std::fill(n2.data.begin(), n2.data.end(), T(0.5));
                break;
        }
        n1v = Var<T>(n1, false);
        n2v = Var<T>(n2, false);
    }
};

template <class T>
ShallowNoise<T> make_shallow_noise(int c, int h, int w, InitKind init_kind, Placement placement,
                                   Rng& rng) {
    if (h % 2 != 0 || w % 2 != 0)
        throw DimensionError("shallow noise needs even feature dims");
    ShallowNoise<T> sn;
    sn.c = c;
    sn.h = h;
    sn.w = w;
    sn.init_kind = init_kind;
    sn.placement = placement;
    sn.n1 = Tensor<T>({c, h, w / 2});
    sn.n2 = Tensor<T>({c, h / 2, w});
    sn.sample_bases(rng);
    sn.w1 = Var<T>(Tensor<T>({c, h, w / 2}, static_cast<T>(kNoiseWeightInit)), true);
    sn.w2 = Var<T>(Tensor<T>({c, h / 2, w}, static_cast<T>(kNoiseWeightInit)), true);
    return sn;
}

// Zero-pads the two half-band noises to the full [C,H,W] canvas: noise1 is
// centered horizontally (all rows), noise2 centered vertically (all columns);
// their overlap is the center region, the four corner blocks stay zero.
template <class T>
std::pair<Tensor<T>, Tensor<T>> cross_pad(const Tensor<T>& noise1, const Tensor<T>& noise2) {
    if (noise1.ndim() != 3 || noise2.ndim() != 3)
        throw DimensionError("cross_pad expects [C,H,W/2] and [C,H/2,W]");
    const int c = noise1.dim(0), h = noise1.dim(1), w = noise2.dim(2);
    if (h % 2 != 0 || w % 2 != 0) throw DimensionError("cross_pad needs even H and W");
    if (noise1.dim(2) != w / 2 || noise2.dim(0) != c || noise2.dim(1) != h / 2)
        throw DimensionError("cross_pad band shapes inconsistent");
    Tensor<T> p1({c, h, w}), p2({c, h, w});
    const int x0 = w / 4, y0 = h / 4;
    for (int ic = 0; ic < c; ++ic) {
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w / 2; ++x) p1.at3(ic, y, x0 + x) = noise1.at3(ic, y, x);
        for (int y = 0; y < h / 2; ++y)
            for (int x = 0; x < w; ++x) p2.at3(ic, y0 + y, x) = noise2.at3(ic, y, x);
    }
    return {std::move(p1), std::move(p2)};
}

template <class T>
Var<T> slice_rows(const Var<T>& x, int y0, int y1);
template <class T>
Var<T> slice_cols(const Var<T>& x, int x0, int x1);

// Differentiable placed-noise sum N1 + N2 per the configured placement.
template <class T>
Var<T> placed_noise_sum(const ShallowNoise<T>& sn) {
    const int h = sn.h, w = sn.w;
    Var<T> m1 = mul(sn.n1v, sn.w1);  // [C,H,W/2]
    Var<T> m2 = mul(sn.n2v, sn.w2);  // [C,H/2,W]
    switch (sn.placement) {
        case Placement::cross:
            return add(embed2d(m1, h, w, 0, w / 4), embed2d(m2, h, w, h / 4, 0));
        case Placement::full:
            // band placed twice so every element receives both noises
            return add(add(embed2d(m1, h, w, 0, 0), embed2d(m1, h, w, 0, w / 2)),
                       add(embed2d(m2, h, w, 0, 0), embed2d(m2, h, w, h / 2, 0)));
        case Placement::center: {
            // central H/2 x W/2 square only
            Var<T> c1 = slice_rows(m1, h / 4, h / 4 + h / 2);
            Var<T> c2 = slice_cols(m2, w / 4, w / 4 + w / 2);
            return add(embed2d(c1, h, w, h / 4, w / 4), embed2d(c2, h, w, h / 4, w / 4));
        }
    }
    throw ConfigError("bad placement");
}

// Row/column crops used by the center placement.
template <class T>
Var<T> slice_rows(const Var<T>& x, int y0, int y1) {
    const Tensor<T>& in = x.value();
    const int c = in.dim(0), h = in.dim(1), w = in.dim(2);
    if (y0 < 0 || y1 <= y0 || y1 > h) throw DimensionError("slice_rows range invalid");
    Tensor<T> out({c, y1 - y0, w});
    for (int ic = 0; ic < c; ++ic)
        for (int y = y0; y < y1; ++y)
            for (int xx = 0; xx < w; ++xx) out.at3(ic, y - y0, xx) = in.at3(ic, y, xx);
    return make_result<T>(std::move(out), {x.node()}, [y0](Node<T>& n) {
        auto& p = *n.parents[0];
        p.ensure_grad();
        const int c = n.grad.dim(0), hs = n.grad.dim(1), w = n.grad.dim(2);
        for (int ic = 0; ic < c; ++ic)
            for (int y = 0; y < hs; ++y)
                for (int xx = 0; xx < w; ++xx) p.grad.at3(ic, y0 + y, xx) += n.grad.at3(ic, y, xx);
    });
}

template <class T>
Var<T> slice_cols(const Var<T>& x, int x0, int x1) {
    const Tensor<T>& in = x.value();
    const int c = in.dim(0), h = in.dim(1), w = in.dim(2);
    if (x0 < 0 || x1 <= x0 || x1 > w) throw DimensionError("slice_cols range invalid");
    Tensor<T> out({c, h, x1 - x0});
    for (int ic = 0; ic < c; ++ic)
        for (int y = 0; y < h; ++y)
            for (int xx = x0; xx < x1; ++xx) out.at3(ic, y, xx - x0) = in.at3(ic, y, xx);
    return make_result<T>(std::move(out), {x.node()}, [x0](Node<T>& n) {
        auto& p = *n.parents[0];
        p.ensure_grad();
        const int c = n.grad.dim(0), h = n.grad.dim(1), ws = n.grad.dim(2);
        for (int ic = 0; ic < c; ++ic)
            for (int y = 0; y < h; ++y)
                for (int xx = 0; xx < ws; ++xx) p.grad.at3(ic, y, x0 + xx) += n.grad.at3(ic, y, xx);
    });
}

// F_tilde = maxpool(relu(F + N1 + N2)); disabled path shares the relu/maxpool.
template <class T>
Var<T> shallow_noise_forward(const Var<T>& f, const ShallowNoise<T>& sn, bool enabled) {
    if (enabled) return maxpool2(relu(add(f, placed_noise_sum(sn))));
    return maxpool2(relu(f));
}

// Same insertion for the deeper ablation layers: no extra pooling, the stage
// spatial size must be preserved.
template <class T>
Var<T> noise_inject(const Var<T>& f, const ShallowNoise<T>& sn) {
    return relu(add(f, placed_noise_sum(sn)));
}

// Channel mean of the shallow-noise output, min-max normalized into [0,1].
// Constant maps normalize to all zeros.
template <class T>
Tensor<T> noise_gt(const Tensor<T>& f_tilde) {
    if (f_tilde.ndim() != 3) throw DimensionError("noise_gt expects [C,h,w]");
    const int c = f_tilde.dim(0), h = f_tilde.dim(1), w = f_tilde.dim(2);
    Tensor<T> out({1, h, w});
    for (int ic = 0; ic < c; ++ic)
        for (int i = 0; i < h * w; ++i)
            out.data[static_cast<std::size_t>(i)] +=
                f_tilde.data[static_cast<std::size_t>(ic) * h * w + i];
    for (auto& v : out.data) v /= static_cast<T>(c);
    const T lo = out.min_value(), hi = out.max_value();
    if (hi - lo <= T(0)) {
        std::fill(out.data.begin(), out.data.end(), T(0));
        return out;
    }
    for (auto& v : out.data) v = (v - lo) / (hi - lo);
    return out;
}

template <class T>
struct ConvLayer {
    Var<T> w, b;
    int stride = 1, pad = 1;

    Var<T> operator()(const Var<T>& x) const { return conv2d(x, w, b, stride, pad); }
};

template <class T>
struct ForwardOutput {
    Var<T> pred;                  // S, [1,H,W]
    std::array<Var<T>, 3> sides;  // S_1..S_3, each [1,H,W]
    Var<T> noise_est;             // N_est, [1,H/4,W/4]
    Var<T> f_tilde;               // shallow-noise output, [C,H/4,W/4]
};

constexpr int kHeadChannels = 8;  // decoder head: channel 0 = noise estimate

template <class T>
struct SodModel {
    ModelConfig cfg;
    std::uint64_t seed = 0;
    ConvLayer<T> stem1, stem2;
    ConvLayer<T> enc1, enc2, enc3;
    ConvLayer<T> dec3, dec2, dec1;
    ConvLayer<T> side3, side2, side1;
    ConvLayer<T> head, fuse;
    std::vector<ShallowNoise<T>> noises;
    Rng forward_rng{0};  // used only with resample_per_forward

    std::vector<Var<T>> theta_n() const {
        std::vector<Var<T>> out;
        for (const ConvLayer<T>* l :
             {&stem1, &stem2, &enc1, &enc2, &enc3, &dec3, &dec2, &dec1, &side3, &side2, &side1,
              &head, &fuse}) {
            out.push_back(l->w);
            out.push_back(l->b);
        }
        return out;
    }

    std::vector<Var<T>> theta_w() const {
        std::vector<Var<T>> out;
        for (const auto& sn : noises) {
            out.push_back(sn.w1);
            out.push_back(sn.w2);
        }
        return out;
    }

    std::vector<Var<T>> all_params() const {
        auto out = theta_n();
        for (auto& v : theta_w()) out.push_back(v);
        return out;
    }

    // Named tensors in checkpoint order. Fixed noise bases are part of the
    // model state and round-trip through checkpoints too.
    std::vector<std::pair<std::string, Var<T>>> named_tensors() const {
        std::vector<std::pair<std::string, Var<T>>> out;
        const char* names[] = {"stem1", "stem2", "enc1", "enc2", "enc3", "dec3",
                               "dec2",  "dec1",  "side3", "side2", "side1", "head", "fuse"};
        const ConvLayer<T>* layers[] = {&stem1, &stem2, &enc1,  &enc2,  &enc3,  &dec3, &dec2,
                                        &dec1,  &side3, &side2, &side1, &head,  &fuse};
        for (int i = 0; i < 13; ++i) {
            out.emplace_back(std::string(names[i]) + ".w", layers[i]->w);
            out.emplace_back(std::string(names[i]) + ".b", layers[i]->b);
        }
        for (std::size_t i = 0; i < noises.size(); ++i) {
            const std::string p = "noise" + std::to_string(i) + ".";
            out.emplace_back(p + "w1", noises[i].w1);
            out.emplace_back(p + "w2", noises[i].w2);
            out.emplace_back(p + "n1", Var<T>(noises[i].n1, false));
            out.emplace_back(p + "n2", Var<T>(noises[i].n2, false));
        }
        return out;
    }

    // Mutable storage in the same order as named_tensors(), for checkpoint load.
    std::vector<std::pair<std::string, Tensor<T>*>> named_tensor_ptrs() {
        std::vector<std::pair<std::string, Tensor<T>*>> out;
        const char* names[] = {"stem1", "stem2", "enc1", "enc2", "enc3", "dec3",
                               "dec2",  "dec1",  "side3", "side2", "side1", "head", "fuse"};
        ConvLayer<T>* layers[] = {&stem1, &stem2, &enc1,  &enc2,  &enc3,  &dec3, &dec2,
                                  &dec1,  &side3, &side2, &side1, &head,  &fuse};
        for (int i = 0; i < 13; ++i) {
            out.emplace_back(std::string(names[i]) + ".w", &layers[i]->w.value());
            out.emplace_back(std::string(names[i]) + ".b", &layers[i]->b.value());
        }
        for (std::size_t i = 0; i < noises.size(); ++i) {
            const std::string p = "noise" + std::to_string(i) + ".";
            out.emplace_back(p + "w1", &noises[i].w1.value());
            out.emplace_back(p + "w2", &noises[i].w2.value());
            out.emplace_back(p + "n1", &noises[i].n1);
            out.emplace_back(p + "n2", &noises[i].n2);
        }
        return out;
    }

    // Re-wrap the fixed bases after their tensors were overwritten externally.
    void refresh_base_vars() {
        for (auto& sn : noises) {
            sn.n1v = Var<T>(sn.n1, false);
            sn.n2v = Var<T>(sn.n2, false);
        }
    }
};

namespace detail {

template <class T>
ConvLayer<T> make_conv(int cin, int cout, int k, int stride, int pad, Rng& rng) {
    ConvLayer<T> l;
    Tensor<T> w({cout, cin, k, k});
    const T stddev = static_cast<T>(std::sqrt(2.0 / (cin * k * k)));
    rng.fill_gaussian(w, T(0), stddev);
    l.w = Var<T>(std::move(w), true);
    l.b = Var<T>(Tensor<T>({cout}), true);
    l.stride = stride;
    l.pad = pad;
    return l;
}

} // namespace detail

template <class T>
SodModel<T> build_model(const ModelConfig& cfg, std::uint64_t seed) {
    if (cfg.height % 8 != 0 || cfg.width % 8 != 0)
        throw ConfigError("model height/width must be divisible by 8");
    if (cfg.channels < 4) throw ConfigError("model channels must be >= 4");
    if (cfg.noise_layers < 1 || cfg.noise_layers > 3)
        throw ConfigError("noise_layers must be in {1,2,3}");

    SodModel<T> m;
    m.cfg = cfg;
    m.seed = seed;
    Rng rng(seed);
    const int c = cfg.channels;
    const int c1 = 2 * c, c2 = 3 * c, c3 = 4 * c;

    // conv parameters drawn first so defense on/off shares initial weights
    m.stem1 = detail::make_conv<T>(3, c, 3, 2, 1, rng);
    m.stem2 = detail::make_conv<T>(c, c, 3, 1, 1, rng);
    m.enc1 = detail::make_conv<T>(c, c1, 3, 2, 1, rng);
    m.enc2 = detail::make_conv<T>(c1, c2, 3, 2, 1, rng);
    m.enc3 = detail::make_conv<T>(c2, c3, 3, 2, 1, rng);
    m.dec3 = detail::make_conv<T>(c3, c2, 3, 1, 1, rng);
    m.dec2 = detail::make_conv<T>(c2, c1, 3, 1, 1, rng);
    m.dec1 = detail::make_conv<T>(c1, c, 3, 1, 1, rng);
    m.side3 = detail::make_conv<T>(c2, 1, 1, 1, 0, rng);
    m.side2 = detail::make_conv<T>(c1, 1, 1, 1, 0, rng);
    m.side1 = detail::make_conv<T>(c, 1, 1, 1, 0, rng);
    m.head = detail::make_conv<T>(c, kHeadChannels, 3, 1, 1, rng);
    m.fuse = detail::make_conv<T>(kHeadChannels - 1, 1, 1, 1, 0, rng);

    if (cfg.defense) {
        const int sh = cfg.height / 2, sw = cfg.width / 2;  // stem output
        m.noises.push_back(
            make_shallow_noise<T>(c, sh, sw, cfg.init_kind, cfg.placement, rng));
        // deeper insertions sit on the stage outputs
        const int shapes[2][3] = {{c1, cfg.height / 8, cfg.width / 8},
                                  {c2, cfg.height / 16, cfg.width / 16}};
        for (int i = 0; i < cfg.noise_layers - 1; ++i) {
            if (shapes[i][1] % 2 != 0 || shapes[i][2] % 2 != 0 || shapes[i][1] < 2 ||
                shapes[i][2] < 2)
                throw ConfigError("input too small for requested noise layer count");
            m.noises.push_back(make_shallow_noise<T>(shapes[i][0], shapes[i][1], shapes[i][2],
                                                     cfg.init_kind, cfg.placement, rng));
        }
    }
    m.forward_rng = Rng(rng.next_seed());
    return m;
}

template <class T>
ForwardOutput<T> forward(SodModel<T>& m, const Var<T>& image, bool record_graph = true) {
    const Tensor<T>& img = image.value();
    if (img.ndim() != 3 || img.dim(0) != 3)
        throw DimensionError("forward expects a [3,H,W] image, got " + img.shape_str());
    if (img.dim(1) != m.cfg.height || img.dim(2) != m.cfg.width)
        throw DimensionError("forward image size does not match model config");

    std::unique_ptr<NoGradGuard> guard;
    if (!record_graph) guard = std::make_unique<NoGradGuard>();

    if (m.cfg.resample_per_forward)
        for (auto& sn : m.noises) sn.sample_bases(m.forward_rng);

    const bool defended = m.cfg.defense && !m.noises.empty();
    const int h = m.cfg.height, w = m.cfg.width;

    Var<T> f = relu(m.stem2(relu(m.stem1(image))));
    Var<T> ft = defended ? shallow_noise_forward(f, m.noises[0], true)
                         : shallow_noise_forward(f, ShallowNoise<T>{}, false);

    Var<T> e1 = relu(m.enc1(ft));
    if (defended && m.noises.size() >= 2) e1 = noise_inject(e1, m.noises[1]);
    Var<T> e2 = relu(m.enc2(e1));
    if (defended && m.noises.size() >= 3) e2 = noise_inject(e2, m.noises[2]);
    Var<T> e3 = relu(m.enc3(e2));

    Var<T> d3 = relu(m.dec3(upsample_bilinear(e3, e2.value().dim(1), e2.value().dim(2))));
    Var<T> d2 = relu(m.dec2(upsample_bilinear(d3, e1.value().dim(1), e1.value().dim(2))));
    Var<T> d1 = relu(m.dec1(upsample_bilinear(d2, ft.value().dim(1), ft.value().dim(2))));

    ForwardOutput<T> out;
    out.f_tilde = ft;
    out.sides[2] = sigmoid(upsample_bilinear(m.side3(d3), h, w));
    out.sides[1] = sigmoid(upsample_bilinear(m.side2(d2), h, w));
    out.sides[0] = sigmoid(upsample_bilinear(m.side1(d1), h, w));

    Var<T> head = m.head(d1);  // [K, H/4, W/4]
    out.noise_est = sigmoid(slice_channels(head, 0, 1));
    Var<T> fused = m.fuse(relu(slice_channels(head, 1, kHeadChannels)));
    out.pred = sigmoid(upsample_bilinear(fused, h, w));
    return out;
}

// Phase-2 trainable set: everything in theta_n except the stem. w1/w2 and the
// stem stay frozen so the noise ground truth is stable.
template <class T>
std::vector<Var<T>> freeze_for_phase2(const SodModel<T>& m) {
    std::vector<Var<T>> out;
    for (const ConvLayer<T>* l : {&m.enc1, &m.enc2, &m.enc3, &m.dec3, &m.dec2, &m.dec1, &m.side3,
                                  &m.side2, &m.side1, &m.head, &m.fuse}) {
        out.push_back(l->w);
        out.push_back(l->b);
    }
    return out;
}

using SodModelF = SodModel<float>;
using SodModelD = SodModel<double>;

} // namespace leno
