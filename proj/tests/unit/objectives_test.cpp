#include <doctest.h>

#include <cmath>
#include <numeric>
#include <random>

#include "affectkit/errors.hpp"
#include "affectkit/objectives.hpp"
#include "test_support.hpp"

using namespace affectkit;
using namespace affectkit::objectives;
using affectkit::testing::oracle_ccc;
using affectkit::testing::random_tensor;

namespace {

// Central-difference gradient of f at every entry of x.
template <typename F>
Tensor numeric_gradient(Tensor x, F f, double h = 1e-6) {
    Tensor g(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double saved = x[i];
        x[i] = saved + h;
        const double up = f(x);
        x[i] = saved - h;
        const double down = f(x);
        x[i] = saved;
        g[i] = (up - down) / (2 * h);
    }
    return g;
}

void check_close(const Tensor& a, const Tensor& b, double tol) {
    REQUIRE(a.shape() == b.shape());
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(std::abs(a[i] - b[i]) <= tol * std::max(1.0, std::abs(b[i])));
}

}  // namespace

TEST_CASE("ccc examples") {
    const std::vector<double> x{1, 2, 3, 4};
    CHECK(ccc(x, x) == doctest::Approx(1.0));
    const std::vector<double> mirrored{4, 3, 2, 1};
    CHECK(ccc(x, mirrored) == doctest::Approx(-1.0));
    // Negation also moves the mean: -2 * 1.25 / (2.5 + 25)
    const std::vector<double> neg{-1, -2, -3, -4};
    CHECK(ccc(x, neg) == doctest::Approx(-2.5 / 27.5));
    const std::vector<double> shifted{2, 3, 4, 5};
    // var 1.25 each, mean gap 1: 2.5 / 3.5
    CHECK(ccc(x, shifted) == doctest::Approx(2.5 / 3.5));
    const std::vector<double> flat{0.5, 0.5, 0.5, 0.5};
    CHECK(ccc(flat, flat) == 0.0);
    CHECK(ccc(x, flat) == 0.0);
    CHECK_THROWS_AS(ccc(std::vector<double>{1.0}, std::vector<double>{1.0}), ContractViolation);
    CHECK_THROWS_AS(ccc(x, std::vector<double>{1, 2}), ContractViolation);
}

TEST_CASE("ccc is symmetric, bounded and matches a two-pass oracle") {
    std::mt19937_64 rng(5);
    std::normal_distribution<double> d;
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<double> x(10), y(10);
        for (auto& v : x) v = d(rng);
        for (auto& v : y) v = d(rng) + 0.3;
        const double c = ccc(x, y);
        CHECK(c == doctest::Approx(ccc(y, x)).epsilon(1e-12));
        CHECK(std::abs(c) <= 1.0 + 1e-12);
        CHECK(c == doctest::Approx(oracle_ccc(x, y)).epsilon(1e-10));
    }
}

TEST_CASE("ccc gradient matches finite differences") {
    std::mt19937_64 rng(6);
    const Tensor xt = random_tensor({7}, rng);
    const Tensor yt = random_tensor({7}, rng);
    const std::vector<double> y(yt.values().begin(), yt.values().end());
    const std::vector<double> x(xt.values().begin(), xt.values().end());
    const auto g = ccc_gradient(x, y);
    const Tensor num = numeric_gradient(xt, [&](const Tensor& t) { return ccc(t.values(), y); });
    check_close(Tensor({7}, g), num, 1e-6);
}

TEST_CASE("ccc loss examples") {
    // Zero column means, so negation is a perfect anti-concordance.
    const Tensor target({3, 2}, {0.1, -0.2, 0.3, -0.4, -0.4, 0.6});
    CHECK(ccc_loss(target, target).value == doctest::Approx(0.0));
    Tensor flipped = target;
    for (double& v : flipped.values()) v = -v;
    CHECK(ccc_loss(flipped, target).value == doctest::Approx(2.0));
    CHECK(ccc_loss(Tensor({3, 2}), target).value == doctest::Approx(1.0));
    CHECK_THROWS_AS(ccc_loss(Tensor({3, 3}), Tensor({3, 3})), ContractViolation);
}

TEST_CASE("ccc loss gradient matches finite differences") {
    std::mt19937_64 rng(7);
    const Tensor pred = random_tensor({6, 2}, rng);
    const Tensor target = random_tensor({6, 2}, rng);
    const auto l = ccc_loss(pred, target);
    check_close(l.grad, numeric_gradient(pred, [&](const Tensor& p) { return ccc_loss(p, target).value; }), 1e-6);
}

TEST_CASE("cross entropy of uniform logits is ln 8") {
    const std::vector<double> logits(8, 0.3);
    for (int label = 0; label < 8; ++label) CHECK(cross_entropy(logits, label) == doctest::Approx(std::log(8.0)));
    CHECK_THROWS_AS(cross_entropy(logits, 8), ContractViolation);
    CHECK_THROWS_AS(cross_entropy(logits, -1), ContractViolation);
}

TEST_CASE("cross entropy falls as the true logit rises") {
    std::vector<double> logits(8, 0.0);
    double previous = cross_entropy(logits, 2);
    for (int step = 1; step <= 10; ++step) {
        logits[2] = step;
        const double now = cross_entropy(logits, 2);
        CHECK(now < previous);
        CHECK(now > 0.0);
        previous = now;
    }
    // Large logits stay finite.
    logits[2] = 1000.0;
    CHECK(std::isfinite(cross_entropy(logits, 5)));
}

TEST_CASE("batched cross entropy gradient matches finite differences") {
    std::mt19937_64 rng(8);
    const Tensor logits = random_tensor({4, 8}, rng, -2, 2);
    const std::vector<int> labels{0, 7, 3, 3};
    const auto l = cross_entropy(logits, labels);
    double mean = 0.0;
    for (std::size_t n = 0; n < 4; ++n)
        mean += cross_entropy(std::span<const double>(logits.data() + n * 8, 8), labels[n]) / 4.0;
    CHECK(l.value == doctest::Approx(mean));
    check_close(l.grad, numeric_gradient(logits, [&](const Tensor& t) { return cross_entropy(t, labels).value; }),
                1e-6);
}

TEST_CASE("binary cross entropy examples") {
    AuBits ones;
    ones.fill(1);
    AuBits zeros{};
    const std::vector<double> half(12, 0.5);
    CHECK(binary_cross_entropy(half, ones) == doctest::Approx(std::log(2.0)));
    CHECK(binary_cross_entropy(half, zeros) == doctest::Approx(std::log(2.0)));
    const std::vector<double> sure(12, 1.0);
    CHECK(binary_cross_entropy(sure, ones) == doctest::Approx(-std::log(1.0 - kBceEpsilon)));
    // A confident miss is clamped rather than infinite.
    CHECK(binary_cross_entropy(sure, zeros) == doctest::Approx(-std::log(kBceEpsilon)));
}

TEST_CASE("batched binary cross entropy gradient matches finite differences") {
    std::mt19937_64 rng(9);
    const Tensor probs = random_tensor({3, 12}, rng, 0.05, 0.95);
    std::vector<AuBits> labels(3);
    std::bernoulli_distribution coin(0.4);
    for (auto& l : labels)
        for (int& v : l) v = coin(rng) ? 1 : 0;
    const auto l = binary_cross_entropy(probs, labels);
    check_close(l.grad, numeric_gradient(probs, [&](const Tensor& t) { return binary_cross_entropy(t, labels).value; }),
                1e-6);
}

TEST_CASE("contrastive loss on matched orthonormal pairs") {
    const Tensor eye({2, 2}, {1, 0, 0, 1});
    const auto l = contrastive_loss(eye, eye);
    const double want = -std::log(std::exp(1.0) / (std::exp(1.0) + 1.0));
    CHECK(l.image == doctest::Approx(want));
    CHECK(l.text == doctest::Approx(want));
    CHECK(l.combined == doctest::Approx(want));
    // Lower temperature sharpens the match.
    CHECK(contrastive_loss(eye, eye, 0.1).combined < l.combined);
    CHECK_THROWS_AS(contrastive_loss(eye, eye, 0.0), ContractViolation);
    CHECK_THROWS_AS(contrastive_loss(eye, Tensor({3, 2}, 1.0)), ContractViolation);
}

TEST_CASE("contrastive loss gradients match finite differences") {
    std::mt19937_64 rng(10);
    const Tensor images = random_tensor({4, 5}, rng);
    const Tensor texts = random_tensor({4, 5}, rng);
    const auto l = contrastive_loss(images, texts, 0.5);
    check_close(l.grad_image,
                numeric_gradient(images, [&](const Tensor& t) { return contrastive_loss(t, texts, 0.5).combined; }),
                1e-6);
    check_close(l.grad_text,
                numeric_gradient(texts, [&](const Tensor& t) { return contrastive_loss(images, t, 0.5).combined; }),
                1e-6);
}
