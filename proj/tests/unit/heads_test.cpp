#include <doctest.h>

#include <cmath>
#include <random>

#include "affectkit/errors.hpp"
#include "affectkit/heads.hpp"
#include "test_support.hpp"

using namespace affectkit;
using namespace affectkit::heads;
using affectkit::testing::random_tensor;

namespace {

double sigmoid(double v) { return 1.0 / (1.0 + std::exp(-v)); }

void zero_all(nn::ParameterList& params) {
    for (auto& p : params) p.var->mutable_value().fill(0.0);
}

}  // namespace

TEST_CASE("fc heads with zero weights give neutral outputs") {
    nn::Rng rng(1);
    ag::NoGradGuard guard;
    const Var x(Tensor({3, 5}, 0.7));
    for (Task task : {Task::VA, Task::EXPR, Task::AU}) {
        FcHead head(task, 5, rng);
        nn::ParameterList params;
        head.collect("h", params);
        zero_all(params);
        const Tensor out = head(x).value();
        REQUIRE(out.shape() == Shape{3, output_width(task)});
        const double expected = task == Task::AU ? 0.5 : 0.0;
        for (double v : out.values()) CHECK(v == expected);
    }
}

TEST_CASE("fc head output is the activated dot product") {
    nn::Rng rng(2);
    std::mt19937_64 data(3);
    const Tensor x = random_tensor({2, 4}, data);
    for (Task task : {Task::VA, Task::EXPR, Task::AU}) {
        FcHead head(task, 4, rng);
        ag::NoGradGuard guard;
        const Tensor out = head(Var(x)).value();
        const Tensor& w = head.linear().weight.value();
        const Tensor& b = head.linear().bias->value();
        for (std::size_t n = 0; n < 2; ++n)
            for (std::size_t o = 0; o < output_width(task); ++o) {
                double z = b[o];
                for (std::size_t i = 0; i < 4; ++i) z += w.at(o, i) * x.at(n, i);
                const double want = task == Task::VA ? std::tanh(z) : task == Task::AU ? sigmoid(z) : z;
                CHECK(out.at(n, o) == doctest::Approx(want).epsilon(1e-12));
            }
    }
}

TEST_CASE("unit VA range switches the head to a logistic") {
    CHECK(activation_for(Task::VA) == OutputActivation::Tanh);
    CHECK(activation_for(Task::VA, true) == OutputActivation::Logistic);
    CHECK(activation_for(Task::EXPR) == OutputActivation::Identity);
    CHECK(activation_for(Task::AU) == OutputActivation::Logistic);
}

TEST_CASE("fc head rejects a wrong input width") {
    nn::Rng rng(1);
    FcHead head(Task::VA, 4, rng);
    ag::NoGradGuard guard;
    CHECK_THROWS_AS(head(Var(Tensor({2, 5}))), ContractViolation);
}

TEST_CASE("lstm with window 1 matches a single cell step") {
    nn::Rng rng(4);
    LstmHead head(3, 2, 2, OutputActivation::Identity, rng);
    std::mt19937_64 data(5);
    const Tensor x = random_tensor({1, 1, 3}, data);
    const Tensor& wi = head.input_weights().value();
    const Tensor& b = head.gate_bias().value();
    double gates[8];
    for (std::size_t r = 0; r < 8; ++r) {
        gates[r] = b[r];
        for (std::size_t i = 0; i < 3; ++i) gates[r] += wi.at(r, i) * x[i];
    }
    double h[2];
    for (std::size_t k = 0; k < 2; ++k) {
        const double in = sigmoid(gates[k]);
        const double cell = std::tanh(gates[4 + k]);
        const double out = sigmoid(gates[6 + k]);
        // The forget gate multiplies a zero initial state.
        h[k] = out * std::tanh(in * cell);
    }
    const Tensor& wo = head.output().weight.value();
    const Tensor& bo = head.output().bias->value();
    ag::NoGradGuard guard;
    const Tensor y = head({Var(x), {1}}).value();
    REQUIRE(y.shape() == Shape{1, 2});
    for (std::size_t o = 0; o < 2; ++o) {
        const double want = bo[o] + wo.at(o, 0) * h[0] + wo.at(o, 1) * h[1];
        CHECK(y.at(0, o) == doctest::Approx(want).epsilon(1e-12));
    }
}

TEST_CASE("lstm output depends on frame order") {
    nn::Rng rng(6);
    LstmHead head(Task::VA, 4, 5, rng);
    std::mt19937_64 data(7);
    const Tensor x = random_tensor({1, 3, 4}, data);
    Tensor reversed({1, 3, 4});
    for (std::size_t t = 0; t < 3; ++t)
        for (std::size_t d = 0; d < 4; ++d) reversed[t * 4 + d] = x[(2 - t) * 4 + d];
    ag::NoGradGuard guard;
    const Tensor a = head({Var(x), {3}}).value();
    const Tensor b = head({Var(reversed), {3}}).value();
    // The last step sees the same frame set in a different order.
    CHECK(std::abs(a.at(2, 0) - b.at(2, 0)) > 1e-6);
}

TEST_CASE("lstm rows follow valid lengths sample by sample") {
    nn::Rng rng(8);
    LstmHead head(Task::AU, 3, 4, rng);
    std::mt19937_64 data(9);
    const Tensor x = random_tensor({2, 4, 3}, data);
    ag::NoGradGuard guard;
    const Tensor y = head({Var(x), {4, 2}}).value();
    CHECK(y.shape() == Shape{6, 12});
    // Sample 1 run alone gives the same two rows: padding never leaks in.
    const Tensor alone = head({Var(x.rows(1, 2).reshaped({1, 4, 3})), {2}}).value();
    for (std::size_t j = 0; j < 2 * 12; ++j) CHECK(alone[j] == doctest::Approx(y[4 * 12 + j]).epsilon(1e-12));
    for (double v : y.values()) CHECK((v > 0.0 && v < 1.0));
}

TEST_CASE("lstm rejects zero or oversized lengths") {
    nn::Rng rng(1);
    LstmHead head(Task::VA, 3, 4, rng);
    ag::NoGradGuard guard;
    const Var x(Tensor({2, 3, 3}));
    CHECK_THROWS_AS(head({x, {3, 0}}), ContractViolation);
    CHECK_THROWS_AS(head({x, {3, 4}}), ContractViolation);
    CHECK_THROWS_AS(head({x, {3}}), ContractViolation);
}

TEST_CASE("lstm settles on a constant input") {
    nn::Rng rng(10);
    LstmHead head(Task::VA, 2, 3, rng);
    const std::size_t steps = 60;
    Tensor x({1, steps, 2});
    for (std::size_t t = 0; t < steps; ++t) {
        x[t * 2] = 0.3;
        x[t * 2 + 1] = -0.2;
    }
    ag::NoGradGuard guard;
    const Tensor y = head({Var(x), {steps}}).value();
    CHECK(std::abs(y.at(steps - 1, 0) - y.at(steps - 2, 0)) < 1e-4);
    CHECK(std::abs(y.at(steps - 1, 1) - y.at(steps - 2, 1)) < 1e-4);
}
