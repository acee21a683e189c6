#pragma once

// Task heads: a per-frame fully connected layer and a single-layer LSTM over
// frame windows. Output nonlinearity depends on the task:
//   VA   -> tanh (or logistic when the label range is [0, 1])
//   EXPR -> raw logits
//   AU   -> logistic
// The LSTM head also serves the contrastive path with an identity output.

#include <cstddef>
#include <vector>

#include "affectkit/nn.hpp"
#include "affectkit/task.hpp"

namespace affectkit::heads {

using ag::Var;

enum class OutputActivation { Identity, Tanh, Logistic };

// Activation for a task's predictions; `unit_va_range` selects logistic for VA.
OutputActivation activation_for(Task task, bool unit_va_range = false);
Var apply_activation(const Var& x, OutputActivation act);

class FcHead {
public:
    FcHead() = default;
    FcHead(Task task, std::size_t in_width, nn::Rng& rng, bool unit_va_range = false);

    // (N, in_width) -> (N, 2 | 8 | 12)
    Var operator()(const Var& embedding) const;
    void collect(const std::string& prefix, nn::ParameterList& out);

    Task task() const { return task_; }
    nn::Linear& linear() { return linear_; }

private:
    Task task_ = Task::EXPR;
    OutputActivation activation_ = OutputActivation::Identity;
    nn::Linear linear_;
};

struct SequenceBatch {
    Var data;                          // (B, T, D)
    std::vector<std::size_t> lengths;  // per-sample valid steps, each in [1, T]
};

class LstmHead {
public:
    LstmHead() = default;
    LstmHead(std::size_t in_width, std::size_t hidden, std::size_t out_width, OutputActivation activation,
             nn::Rng& rng);
    // Task-shaped convenience constructor.
    LstmHead(Task task, std::size_t in_width, std::size_t hidden, nn::Rng& rng, bool unit_va_range = false);

    // Returns one row per valid frame, ordered sample-major then by time:
    // (sum(lengths), out_width). State starts at zero for every sample.
    Var operator()(const SequenceBatch& batch) const;

    void collect(const std::string& prefix, nn::ParameterList& out);

    std::size_t hidden() const { return hidden_; }
    std::size_t in_width() const { return w_ih_.shape()[1]; }
    std::size_t out_width() const { return output_.out_features(); }

    Var& input_weights() { return w_ih_; }
    Var& recurrent_weights() { return w_hh_; }
    Var& gate_bias() { return bias_; }
    nn::Linear& output() { return output_; }

private:
    std::size_t hidden_ = 0;
    OutputActivation activation_ = OutputActivation::Identity;
    Var w_ih_;  // (4H, D), gate order input, forget, cell, output
    Var w_hh_;  // (4H, H)
    Var bias_;  // (4H)
    nn::Linear output_;
};

}  // namespace affectkit::heads
