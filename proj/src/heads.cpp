#include "affectkit/heads.hpp"

#include <algorithm>
#include <cmath>

#include "affectkit/errors.hpp"

namespace affectkit::heads {

OutputActivation activation_for(Task task, bool unit_va_range) {
    switch (task) {
        case Task::VA: return unit_va_range ? OutputActivation::Logistic : OutputActivation::Tanh;
        case Task::EXPR: return OutputActivation::Identity;
        case Task::AU: return OutputActivation::Logistic;
    }
    throw ContractViolation("unknown task");
}

Var apply_activation(const Var& x, OutputActivation act) {
    switch (act) {
        case OutputActivation::Identity: return x;
        case OutputActivation::Tanh: return ag::tanh(x);
        case OutputActivation::Logistic: return ag::sigmoid(x);
    }
    return x;
}

FcHead::FcHead(Task task, std::size_t in_width, nn::Rng& rng, bool unit_va_range)
    : task_(task), activation_(activation_for(task, unit_va_range)), linear_(in_width, output_width(task), rng) {}

Var FcHead::operator()(const Var& embedding) const {
    const Shape& s = embedding.shape();
    if (s.size() != 2 || s[1] != linear_.in_features()) {
        throw ContractViolation("fc head: expected (N, " + std::to_string(linear_.in_features()) + "), got " +
                                to_string(s));
    }
    return apply_activation(linear_(embedding), activation_);
}

void FcHead::collect(const std::string& prefix, nn::ParameterList& out) { linear_.collect(prefix + ".fc", out); }

LstmHead::LstmHead(std::size_t in_width, std::size_t hidden, std::size_t out_width, OutputActivation activation,
                   nn::Rng& rng)
    : hidden_(hidden), activation_(activation) {
    if (in_width == 0 || hidden == 0 || out_width == 0) throw ContractViolation("lstm head: zero width");
    const double bound = 1.0 / std::sqrt(static_cast<double>(hidden));
    w_ih_ = Var(nn::uniform_init({4 * hidden, in_width}, bound, rng), true);
    w_hh_ = Var(nn::uniform_init({4 * hidden, hidden}, bound, rng), true);
    bias_ = Var(nn::uniform_init({4 * hidden}, bound, rng), true);
    output_ = nn::Linear(hidden, out_width, rng);
}

LstmHead::LstmHead(Task task, std::size_t in_width, std::size_t hidden, nn::Rng& rng, bool unit_va_range)
    : LstmHead(in_width, hidden, output_width(task), activation_for(task, unit_va_range), rng) {}

Var LstmHead::operator()(const SequenceBatch& batch) const {
    const Shape& s = batch.data.shape();
    if (s.size() != 3 || s[2] != in_width()) {
        throw ContractViolation("lstm head: expected (B, T, " + std::to_string(in_width()) + "), got " + to_string(s));
    }
    const std::size_t b = s[0];
    const std::size_t steps = s[1];
    if (b == 0 || steps == 0) throw ContractViolation("lstm head: zero-length sequence");
    if (batch.lengths.size() != b) throw ContractViolation("lstm head: one length per sample required");
    for (std::size_t len : batch.lengths) {
        if (len == 0 || len > steps) throw ContractViolation("lstm head: sequence length out of [1, T]");
    }
    const std::size_t longest = *std::max_element(batch.lengths.begin(), batch.lengths.end());

    const std::size_t h = hidden_;
    Var hidden_state(Tensor({b, h}));
    Var cell(Tensor({b, h}));
    std::vector<Var> outputs;
    outputs.reserve(longest);
    for (std::size_t t = 0; t < longest; ++t) {
        Var x = ag::time_step(batch.data, t);
        Var gates = ag::add(ag::linear(x, w_ih_, bias_), ag::linear(hidden_state, w_hh_, std::nullopt));
        Var input_gate = ag::sigmoid(ag::slice_cols(gates, 0, h));
        Var forget_gate = ag::sigmoid(ag::slice_cols(gates, h, 2 * h));
        Var candidate = ag::tanh(ag::slice_cols(gates, 2 * h, 3 * h));
        Var output_gate = ag::sigmoid(ag::slice_cols(gates, 3 * h, 4 * h));
        cell = ag::add(ag::mul(forget_gate, cell), ag::mul(input_gate, candidate));
        hidden_state = ag::mul(output_gate, ag::tanh(cell));
        outputs.push_back(hidden_state);
    }

    // concat_rows lays rows out time-major (t * B + sample).
    Var stacked = ag::concat_rows(outputs);
    std::vector<std::size_t> rows;
    for (std::size_t i = 0; i < b; ++i)
        for (std::size_t t = 0; t < batch.lengths[i]; ++t) rows.push_back(t * b + i);
    return apply_activation(output_(ag::select_rows(stacked, rows)), activation_);
}

void LstmHead::collect(const std::string& prefix, nn::ParameterList& out) {
    out.push_back({prefix + ".lstm.w_ih", &w_ih_});
    out.push_back({prefix + ".lstm.w_hh", &w_hh_});
    out.push_back({prefix + ".lstm.bias", &bias_});
    output_.collect(prefix + ".lstm.out", out);
}

}  // namespace affectkit::heads
