#include "doctest.h"

#include "leno/gradcheck.hpp"
#include "leno/ops.hpp"

using namespace leno;

namespace {

// Direct convolution oracle, no shared code with conv2d_forward's loop nest.
TensorD conv_oracle(const TensorD& in, const TensorD& w, const TensorD& b, int stride, int pad) {
    const int cin = in.dim(0), h = in.dim(1), wd = in.dim(2);
    const int cout = w.dim(0), k = w.dim(2);
    const int ho = (h + 2 * pad - k) / stride + 1;
    const int wo = (wd + 2 * pad - k) / stride + 1;
    TensorD out({cout, ho, wo});
    for (int oc = 0; oc < cout; ++oc)
        for (int oy = 0; oy < ho; ++oy)
            for (int ox = 0; ox < wo; ++ox) {
                double acc = b[oc];
                for (int ic = 0; ic < cin; ++ic)
                    for (int ky = 0; ky < k; ++ky)
                        for (int kx = 0; kx < k; ++kx) {
                            const int iy = oy * stride + ky - pad, ix = ox * stride + kx - pad;
                            if (iy >= 0 && iy < h && ix >= 0 && ix < wd)
                                acc += in.at3(ic, iy, ix) *
                                       w.data[((static_cast<std::size_t>(oc) * cin + ic) * k + ky) * k + kx];
                        }
                out.at3(oc, oy, ox) = acc;
            }
    return out;
}

} // namespace

TEST_CASE("conv2d all-ones 3x3 matches hand values") {
    VarD in(TensorD({1, 3, 3}, 1.0));
    VarD w(TensorD({1, 1, 3, 3}, 1.0));
    VarD b(TensorD({1}, 0.0));
    VarD out = conv2d(in, w, b, 1, 1);
    CHECK(out.value().at3(0, 1, 1) == doctest::Approx(9.0));
    CHECK(out.value().at3(0, 0, 0) == doctest::Approx(4.0));
    CHECK(out.value().at3(0, 2, 2) == doctest::Approx(4.0));
    CHECK(out.value().at3(0, 0, 1) == doctest::Approx(6.0));
}

TEST_CASE("conv2d identity kernel passes input through") {
    Rng rng(7);
    TensorD x({2, 4, 4});
    rng.fill_uniform(x, -1.0, 1.0);
    TensorD w({2, 2, 1, 1}, 0.0);
    w.data[0] = 1.0;  // oc0<-ic0
    w.data[3] = 1.0;  // oc1<-ic1
    VarD out = conv2d(VarD(x), VarD(w), VarD(TensorD({2}, 0.0)), 1, 0);
    for (std::size_t i = 0; i < x.numel(); ++i) CHECK(out.value()[i] == x[i]);
}

TEST_CASE("conv2d zero weight yields bias everywhere") {
    VarD out = conv2d(VarD(TensorD({1, 4, 4}, 3.0)), VarD(TensorD({2, 1, 3, 3}, 0.0)),
                      VarD(TensorD({2}, std::vector<double>{0.5, -1.0})), 1, 1);
    for (int y = 0; y < 4; ++y)
        for (int x = 0; x < 4; ++x) {
            CHECK(out.value().at3(0, y, x) == 0.5);
            CHECK(out.value().at3(1, y, x) == -1.0);
        }
}

TEST_CASE("conv2d matches independent oracle on random shapes") {
    Rng rng(42);
    for (int stride : {1, 2}) {
        TensorD in({3, 6, 8});
        TensorD w({4, 3, 3, 3});
        TensorD b({4});
        rng.fill_gaussian(in, 0.0, 1.0);
        rng.fill_gaussian(w, 0.0, 1.0);
        rng.fill_gaussian(b, 0.0, 1.0);
        VarD out = conv2d(VarD(in), VarD(w), VarD(b), stride, 1);
        TensorD want = conv_oracle(in, w, b, stride, 1);
        REQUIRE(out.value().shape == want.shape);
        for (std::size_t i = 0; i < want.numel(); ++i)
            CHECK(out.value()[i] == doctest::Approx(want[i]).epsilon(1e-12));
    }
}

TEST_CASE("conv2d rejects bad shapes") {
    CHECK_THROWS_AS(conv2d(VarD(TensorD({1, 3, 3})), VarD(TensorD({1, 2, 3, 3})),
                           VarD(TensorD({1})), 1, 1),
                    DimensionError);
    CHECK_THROWS_AS(conv2d(VarD(TensorD({1, 3, 3})), VarD(TensorD({1, 1, 3, 3})),
                           VarD(TensorD({1})), 3, 1),
                    DimensionError);
}

TEST_CASE("elementwise primitives") {
    VarD r = relu(VarD(TensorD({3}, std::vector<double>{-1, 0, 2})));
    CHECK(r.value().data == std::vector<double>{0, 0, 2});

    VarD mp = maxpool2(VarD(TensorD({1, 2, 2}, std::vector<double>{1, 2, 3, 4})));
    CHECK(mp.value().numel() == 1);
    CHECK(mp.value()[0] == 4.0);

    VarD s = sigmoid(VarD(TensorD({1}, 0.0)));
    CHECK(s.value()[0] == doctest::Approx(0.5));

    CHECK_THROWS_AS(maxpool2(VarD(TensorD({1, 3, 4}))), DimensionError);
    CHECK_THROWS_AS(add(VarD(TensorD({2})), VarD(TensorD({3}))), DimensionError);
}

TEST_CASE("bce, mse, mean_channels values") {
    VarD half(TensorD({4}, 0.5));
    VarD t(TensorD({4}, std::vector<double>{0, 1, 1, 0.3}));
    CHECK(bce(half, t).value()[0] == doctest::Approx(std::log(2.0)));

    CHECK(mse(t, t).value()[0] == 0.0);

    VarD mc = mean_channels(VarD(TensorD({2, 1, 2}, std::vector<double>{1, 3, 3, 5})));
    CHECK(mc.value().data == std::vector<double>{2, 4});

    CHECK_THROWS_AS(bce(half, VarD(TensorD({4}, 1.5))), DomainError);
}

TEST_CASE("backward computes analytic gradients") {
    SUBCASE("sum of squares") {
        VarD x(TensorD({2}, std::vector<double>{1, 2}), true);
        backward(sum_all(mul(x, x)));
        CHECK(x.grad().data == std::vector<double>{2, 4});
    }
    SUBCASE("constant loss leaves zero grads") {
        VarD x(TensorD({3}, 5.0), true);
        backward(dot_const(x, TensorD({3}, 0.0)));
        CHECK(x.grad().data == std::vector<double>{0, 0, 0});
    }
    SUBCASE("non-scalar loss rejected") {
        VarD x(TensorD({2}, 1.0), true);
        CHECK_THROWS_AS(backward(mul(x, x)), ContractError);
    }
    SUBCASE("fan-out accumulates additively") {
        VarD x(TensorD({1}, 3.0), true);
        VarD y = add(x, x);  // dy/dx = 2
        backward(sum_all(y));
        CHECK(x.grad()[0] == 2.0);
    }
}

TEST_CASE("gradcheck over every primitive chain") {
    Rng rng(123);

    SUBCASE("conv2d on 2x4x4 seeded input") {
        TensorD in({2, 4, 4}), w({3, 2, 3, 3}), b({3});
        rng.fill_gaussian(in, 0.0, 1.0);
        rng.fill_gaussian(w, 0.0, 0.5);
        rng.fill_gaussian(b, 0.0, 0.5);
        VarD vin(in, true), vw(w, true), vb(b, true);
        auto loss = [&] { return sum_all(mul(conv2d(vin, vw, vb, 1, 1), conv2d(vin, vw, vb, 1, 1))); };
        auto res = gradcheck(loss, {vin, vw, vb});
        CHECK(res.max_rel_error < 1e-4);
    }

    SUBCASE("relu probed away from zero") {
        TensorD x({16});
        for (int i = 0; i < 16; ++i) x[i] = (i % 2 ? 1 : -1) * (0.2 + 0.1 * i);
        VarD vx(x, true);
        auto loss = [&] { return sum_all(mul(relu(vx), relu(vx))); };
        CHECK(gradcheck(loss, {vx}).max_rel_error < 1e-6);
    }

    SUBCASE("sigmoid, bce, mse, mean_channels, upsample chain") {
        TensorD x({2, 4, 4}), t({1, 6, 6});
        rng.fill_gaussian(x, 0.0, 1.0);
        rng.fill_uniform(t, 0.0, 1.0);
        VarD vx(x, true);
        VarD vt(t, false);
        auto loss = [&] {
            VarD p = sigmoid(upsample_bilinear(mean_channels(vx), 6, 6));
            return add(bce(p, vt), scale(mse(p, vt), 0.1));
        };
        CHECK(gradcheck(loss, {vx}).max_rel_error < 1e-4);
    }

    SUBCASE("maxpool2 and embed2d") {
        TensorD x({2, 4, 4});
        rng.fill_gaussian(x, 0.0, 1.0);
        VarD vx(x, true);
        auto loss = [&] {
            return sum_all(mul(maxpool2(embed2d(vx, 8, 8, 2, 1)), maxpool2(embed2d(vx, 8, 8, 2, 1))));
        };
        CHECK(gradcheck(loss, {vx}).max_rel_error < 1e-4);
    }

    SUBCASE("slice_channels and dot_const") {
        TensorD x({3, 2, 2}), wmap({2, 2, 2});
        rng.fill_gaussian(x, 0.0, 1.0);
        rng.fill_gaussian(wmap, 0.0, 1.0);
        VarD vx(x, true);
        auto loss = [&] { return dot_const(slice_channels(vx, 1, 3), wmap); };
        CHECK(gradcheck(loss, {vx}).max_rel_error < 1e-6);
    }
}

TEST_CASE("maxpool2 backward conserves gradient mass") {
    Rng rng(5);
    TensorD x({3, 6, 6});
    rng.fill_gaussian(x, 0.0, 1.0);
    VarD vx(x, true);
    VarD pooled = maxpool2(vx);
    backward(sum_all(pooled));
    double in_sum = 0, out_sum = static_cast<double>(pooled.value().numel());
    for (double g : vx.grad().data) in_sum += g;
    CHECK(in_sum == doctest::Approx(out_sum));
}

TEST_CASE("maxpool2 tie-break routes to first index in row-major order") {
    VarD vx(TensorD({1, 2, 2}, 1.0), true);  // all tied
    backward(sum_all(maxpool2(vx)));
    CHECK(vx.grad().data == std::vector<double>{1, 0, 0, 0});
}

TEST_CASE("add and mul commute bitwise in reference mode") {
    Rng rng(9);
    TensorD a({64}), b({64});
    rng.fill_gaussian(a, 0.0, 10.0);
    rng.fill_gaussian(b, 0.0, 10.0);
    VarD va(a), vb(b);
    CHECK(add(va, vb).value().data == add(vb, va).value().data);
    CHECK(mul(va, vb).value().data == mul(vb, va).value().data);
}

TEST_CASE("forward results are deterministic given identical inputs") {
    Rng rng(11);
    TensorD in({2, 8, 8}), w({4, 2, 3, 3}), b({4});
    rng.fill_gaussian(in, 0.0, 1.0);
    rng.fill_gaussian(w, 0.0, 1.0);
    rng.fill_gaussian(b, 0.0, 1.0);
    VarD o1 = conv2d(VarD(in), VarD(w), VarD(b), 2, 1);
    VarD o2 = conv2d(VarD(in), VarD(w), VarD(b), 2, 1);
    CHECK(o1.value().data == o2.value().data);
}

TEST_CASE("sgd_step") {
    SUBCASE("basic update") {
        VarD p(TensorD({1}, 1.0), true);
        p.node()->grad = TensorD({1}, 2.0);
        sgd_step<double>({p}, 0.1);
        CHECK(p.value()[0] == doctest::Approx(0.8));
    }
    SUBCASE("zero grad leaves param unchanged") {
        VarD p(TensorD({2}, 1.5), true);
        p.node()->grad = TensorD({2}, 0.0);
        sgd_step<double>({p}, 0.3);
        CHECK(p.value().data == std::vector<double>{1.5, 1.5});
    }
    SUBCASE("tensor outside the partition is untouched") {
        VarD p(TensorD({1}, 1.0), true);
        VarD frozen(TensorD({1}, 7.0), true);
        p.node()->grad = TensorD({1}, 1.0);
        frozen.node()->grad = TensorD({1}, 1.0);
        sgd_step<double>({p}, 0.1);
        CHECK(frozen.value()[0] == 7.0);
    }
    SUBCASE("non-positive lr rejected") {
        VarD p(TensorD({1}, 1.0), true);
        CHECK_THROWS_AS(sgd_step<double>({p}, 0.0), ConfigError);
    }
}

TEST_CASE("NoGradGuard suppresses graph recording") {
    VarD x(TensorD({2}, 2.0), true);
    NoGradGuard guard;
    VarD y = mul(x, x);
    CHECK_FALSE(y.requires_grad());
}
