#include <doctest.h>

#include <cmath>
#include <random>

#include "affectkit/autograd.hpp"
#include "affectkit/errors.hpp"
#include "affectkit/tensor.hpp"
#include "test_support.hpp"

using namespace affectkit;
using affectkit::testing::gradient_check;
using affectkit::testing::probe_loss;
using affectkit::testing::random_tensor;

namespace {

// Direct seven-loop convolution used as the reference for the im2col path.
Tensor naive_conv(const Tensor& x, const Tensor& w, const Tensor* bias, ag::ConvSpec spec) {
    const std::size_t n = x.dim(0), cin = x.dim(1), h = x.dim(2), wd = x.dim(3);
    const std::size_t cout = w.dim(0), cpg = w.dim(1), kh = w.dim(2), kw = w.dim(3);
    const std::size_t oh = (h + 2 * spec.padding - kh) / spec.stride + 1;
    const std::size_t ow = (wd + 2 * spec.padding - kw) / spec.stride + 1;
    const std::size_t out_per_group = cout / spec.groups;
    (void)cin;
    Tensor y({n, cout, oh, ow});
    for (std::size_t b = 0; b < n; ++b)
        for (std::size_t o = 0; o < cout; ++o) {
            const std::size_t g = o / out_per_group;
            for (std::size_t i = 0; i < oh; ++i)
                for (std::size_t j = 0; j < ow; ++j) {
                    double acc = bias ? (*bias)[o] : 0.0;
                    for (std::size_t c = 0; c < cpg; ++c)
                        for (std::size_t u = 0; u < kh; ++u)
                            for (std::size_t v = 0; v < kw; ++v) {
                                const long r = static_cast<long>(i * spec.stride + u) - static_cast<long>(spec.padding);
                                const long s = static_cast<long>(j * spec.stride + v) - static_cast<long>(spec.padding);
                                if (r < 0 || s < 0 || r >= static_cast<long>(h) || s >= static_cast<long>(wd)) continue;
                                acc += x.at(b, g * cpg + c, r, s) * w.at(o, c, u, v);
                            }
                    y.at(b, o, i, j) = acc;
                }
        }
    return y;
}

}  // namespace

TEST_CASE("tensor reshape, rows and shape checks") {
    Tensor t({2, 3}, {1, 2, 3, 4, 5, 6});
    CHECK(t.at(1, 2) == 6);
    const Tensor r = t.reshaped({3, 2});
    CHECK(r.shape() == Shape{3, 2});
    CHECK(r.at(2, 0) == 5);
    CHECK_THROWS(t.reshaped({4, 2}));
    const Tensor second = t.rows(1, 2);
    CHECK(second.shape() == Shape{1, 3});
    CHECK(second[0] == 4);
    CHECK_THROWS(Tensor({2, 2}, {1, 2, 3}));
    t[0] = std::nan("");
    CHECK_FALSE(t.all_finite());
}

TEST_CASE("conv2d matches a direct loop for stride, padding and groups") {
    std::mt19937_64 rng(3);
    struct Case {
        std::size_t cin, cout, k;
        ag::ConvSpec spec;
        bool bias;
    };
    const Case cases[] = {
        {3, 4, 3, {1, 1, 1}, true},
        {4, 6, 3, {2, 1, 2}, false},
        {4, 4, 3, {1, 1, 4}, false},  // depthwise
        {2, 5, 1, {1, 0, 1}, true},
        {3, 3, 5, {1, 0, 3}, false},  // kernel covering the map
    };
    for (const auto& c : cases) {
        const Tensor x = random_tensor({2, c.cin, 5, 5}, rng);
        const Tensor w = random_tensor({c.cout, c.cin / c.spec.groups, c.k, c.k}, rng);
        const Tensor b = random_tensor({c.cout}, rng);
        std::optional<ag::Var> bias;
        if (c.bias) bias = ag::Var(b);
        const Tensor got = ag::conv2d(ag::Var(x), ag::Var(w), bias, c.spec).value();
        const Tensor want = naive_conv(x, w, c.bias ? &b : nullptr, c.spec);
        REQUIRE(got.shape() == want.shape());
        for (std::size_t i = 0; i < got.size(); ++i) CHECK(got[i] == doctest::Approx(want[i]).epsilon(1e-12));
    }
}

TEST_CASE("conv2d rejects mismatched channels") {
    ag::Var x(Tensor({1, 3, 4, 4}));
    ag::Var w(Tensor({2, 2, 3, 3}));
    CHECK_THROWS_AS(ag::conv2d(x, w, std::nullopt, {}), ContractViolation);
}

TEST_CASE("elementwise ops forward values") {
    ag::Var x(Tensor({1, 4}, {-2.0, -0.5, 0.5, 4.0}));
    const Tensor hs = ag::hard_swish(x).value();
    CHECK(hs[0] == doctest::Approx(-2.0 * 1.0 / 6.0));
    CHECK(hs[3] == doctest::Approx(4.0));
    const Tensor r = ag::relu(x).value();
    CHECK(r[0] == 0.0);
    CHECK(r[2] == 0.5);
    CHECK(ag::sigmoid(x).value()[2] == doctest::Approx(1.0 / (1.0 + std::exp(-0.5))));

    ag::Var a(Tensor({1, 2, 1, 1}, {1.0, 1.0}));
    ag::Var y(Tensor({1, 2, 1, 1}, {-1.0, -1.0}));
    ag::Var alpha(Tensor({2}, {0.1, 0.3}));
    const Tensor p = ag::prelu(y, alpha).value();
    CHECK(p[0] == doctest::Approx(-0.1));
    CHECK(p[1] == doctest::Approx(-0.3));
    CHECK(ag::prelu(a, alpha).value()[1] == 1.0);
}

TEST_CASE("broadcasting add and mul") {
    ag::Var a(Tensor({2, 3}, {1, 2, 3, 4, 5, 6}));
    ag::Var b(Tensor({1, 3}, {10, 20, 30}));
    const Tensor s = ag::add(a, b).value();
    CHECK(s.at(1, 2) == 36);
    ag::Var c(Tensor({2, 1}, {2, 3}));
    const Tensor m = ag::mul(a, c).value();
    CHECK(m.at(0, 1) == 4);
    CHECK(m.at(1, 0) == 12);
    CHECK_THROWS_AS(ag::add(a, ag::Var(Tensor({2, 2}))), ContractViolation);
}

TEST_CASE("maximum ties resolve to the first argument") {
    ag::Var a(Tensor({1, 2}, {1.0, 2.0}), true);
    ag::Var b(Tensor({1, 2}, {1.0, 3.0}), true);
    ag::sum_all(ag::maximum(a, b)).backward();
    CHECK(a.grad()[0] == 1.0);
    CHECK(b.grad()[0] == 0.0);
    CHECK(b.grad()[1] == 1.0);
}

TEST_CASE("no-grad guard records nothing") {
    ag::Var w(Tensor({2, 2}, 1.0), true);
    {
        ag::NoGradGuard guard;
        CHECK_FALSE(ag::grad_enabled());
        const ag::Var y = ag::mul(w, w);
        CHECK_FALSE(y.requires_grad());
    }
    CHECK(ag::grad_enabled());
    CHECK(ag::mul(w, w).requires_grad());
}

TEST_CASE("gradients accumulate across shared uses") {
    ag::Var x(Tensor({1, 1}, {3.0}), true);
    ag::sum_all(ag::add(ag::mul(x, x), x)).backward();
    CHECK(x.grad()[0] == doctest::Approx(7.0));
}

TEST_CASE("op gradients agree with finite differences") {
    std::mt19937_64 rng(11);
    ag::Var x(random_tensor({2, 3, 5, 5}, rng), true);
    ag::Var w(random_tensor({4, 3, 3, 3}, rng), true);
    ag::Var b(random_tensor({4}, rng), true);
    ag::Var dw(random_tensor({4, 1, 3, 3}, rng), true);
    ag::Var alpha(random_tensor({4}, rng, 0.1, 0.4), true);
    ag::Var lw(random_tensor({3, 4}, rng), true);
    const Tensor probe = random_tensor({2, 3}, rng);
    nn::ParameterList params{{"x", &x}, {"w", &w}, {"b", &b}, {"dw", &dw}, {"alpha", &alpha}, {"lw", &lw}};
    auto loss = [&] {
        ag::Var h = ag::conv2d(x, w, b, {2, 1, 1});
        h = ag::prelu(h, alpha);
        h = ag::conv2d(h, dw, std::nullopt, {1, 1, 4});
        h = ag::hard_swish(h);
        ag::Var v = ag::mul(ag::mean_axis(h, 3), ag::sigmoid(ag::mean_axis(h, 2)));
        v = ag::reshape(ag::mean_axis(ag::mean_axis(v, 3), 2), {2, 4});
        v = ag::tanh(ag::linear(v, lw, std::nullopt));
        return probe_loss(v, probe);
    };
    const auto r = gradient_check(params, loss);
    CHECK(r.checked > 0);
    CHECK(r.kinked < r.checked / 4);
    CHECK(r.max_relative_error < 1e-4);
}

TEST_CASE("row helpers route gradients to the right rows") {
    ag::Var x(Tensor({3, 2}, {1, 2, 3, 4, 5, 6}), true);
    const ag::Var picked = ag::select_rows(x, {2, 0, 2});
    CHECK(picked.value().at(0, 1) == 6);
    ag::sum_all(picked).backward();
    CHECK(x.grad().at(2, 0) == 2.0);
    CHECK(x.grad().at(1, 0) == 0.0);
    CHECK(x.grad().at(0, 1) == 1.0);

    ag::Var y(Tensor({2, 4}, {1, 2, 3, 4, 5, 6, 7, 8}), true);
    const ag::Var cols = ag::slice_cols(y, 1, 3);
    CHECK(cols.value().shape() == Shape{2, 2});
    CHECK(cols.value().at(1, 1) == 7);
    const ag::Var both = ag::concat_rows({cols, cols});
    CHECK(both.value().dim(0) == 4);
}

TEST_CASE("external node forwards supplied gradients") {
    ag::Var p(Tensor({2}, {1.0, 2.0}), true);
    const ag::Var l = ag::external(5.0, {p}, {Tensor({2}, {0.5, -1.0})});
    CHECK(l.value()[0] == 5.0);
    ag::sum_all(ag::scale(l, 2.0)).backward();
    CHECK(p.grad()[0] == 1.0);
    CHECK(p.grad()[1] == -2.0);
}
