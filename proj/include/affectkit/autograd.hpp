#pragma once

// Minimal reverse-mode automatic differentiation over Tensor.
//
// A Var is a handle to a graph node. Ops record their inputs and a backward
// closure only when gradient recording is enabled on the calling thread and at
// least one input requires a gradient; otherwise they return detached leaves,
// which keeps inference free of shared mutable state.

#include <cstddef>
#include <functional>
#include <memory>
#include <optional>
#include <vector>

#include "affectkit/tensor.hpp"

namespace affectkit::ag {

struct Node {
    Tensor value;
    Tensor grad;  // empty until something flows into it
    bool requires_grad = false;
    std::vector<std::shared_ptr<Node>> inputs;
    std::function<void(Node&)> backward;

    void accumulate(const Tensor& g);
    void accumulate(std::size_t i, double g);
    bool has_grad() const noexcept { return !grad.empty(); }
};

class Var {
public:
    Var() = default;
    explicit Var(Tensor value, bool requires_grad = false);

    const Tensor& value() const { return node_->value; }
    // Direct write access for optimizers and weight loading. Never call while a
    // graph that reads this node is still pending backward().
    Tensor& mutable_value() { return node_->value; }
    const Shape& shape() const { return node_->value.shape(); }

    bool requires_grad() const { return node_ && node_->requires_grad; }
    void set_requires_grad(bool on) { node_->requires_grad = on; }
    bool has_grad() const { return node_->has_grad(); }
    // Zero tensor of the value's shape when no gradient has arrived yet.
    Tensor grad() const;
    void zero_grad() { node_->grad = Tensor(); }

    bool defined() const noexcept { return static_cast<bool>(node_); }
    const std::shared_ptr<Node>& node() const noexcept { return node_; }

    // Scalar roots are seeded with 1; otherwise pass an explicit seed.
    void backward() const;
    void backward(const Tensor& seed) const;

    static Var from_node(std::shared_ptr<Node> node);

private:
    std::shared_ptr<Node> node_;
};

bool grad_enabled() noexcept;

class NoGradGuard {
public:
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool previous_;
};

// Builds a graph node. The closure reads self.grad and pushes into
// self.inputs[i] (skipping inputs that do not require grad).
Var make_result(Tensor value, std::vector<Var> inputs, std::function<void(Node&)> backward);

// ---- ops -----------------------------------------------------------------

struct ConvSpec {
    std::size_t stride = 1;
    std::size_t padding = 0;
    std::size_t groups = 1;
};

// x: (N, Cin, H, W); weight: (Cout, Cin/groups, kh, kw); bias: (Cout) or absent.
Var conv2d(const Var& x, const Var& weight, const std::optional<Var>& bias, ConvSpec spec);
// x: (N, In); weight: (Out, In); bias: (Out) or absent.
Var linear(const Var& x, const Var& weight, const std::optional<Var>& bias);

// Same-rank broadcasting element-wise ops (a dim of 1 broadcasts).
Var add(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
// Ties resolve to `a`.
Var maximum(const Var& a, const Var& b);
Var scale(const Var& x, double factor);

Var sigmoid(const Var& x);
Var tanh(const Var& x);
Var relu(const Var& x);
Var hard_swish(const Var& x);
// Per-channel slope on axis 1; alpha has shape (C).
Var prelu(const Var& x, const Var& alpha);

// Mean along one axis, keeping it with extent 1.
Var mean_axis(const Var& x, std::size_t axis);
Var reshape(const Var& x, Shape shape);
Var sum_all(const Var& x);

// 2-D helpers.
Var slice_cols(const Var& x, std::size_t begin, std::size_t end);
Var select_rows(const Var& x, const std::vector<std::size_t>& rows);
Var concat_rows(const std::vector<Var>& parts);
// (B, T, D) -> (B, D) at time t.
Var time_step(const Var& x, std::size_t t);

// Scalar node whose value and input gradients were computed elsewhere, e.g. a
// loss with a closed-form derivative. grads[i] has the shape of inputs[i].
Var external(double value, std::vector<Var> inputs, std::vector<Tensor> grads);

}  // namespace affectkit::ag
