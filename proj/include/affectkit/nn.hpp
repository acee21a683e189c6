#pragma once

// Parameterised building blocks shared by the backbone, heads and adapter.

#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "affectkit/autograd.hpp"

namespace affectkit::nn {

using ag::Var;
using Rng = std::mt19937_64;

struct NamedParameter {
    std::string name;
    Var* var;
};
using ParameterList = std::vector<NamedParameter>;

void set_trainable(const ParameterList& params, bool trainable);
std::size_t parameter_count(const ParameterList& params);

// Initialisers round to float32 so that checkpoints (float32 payloads) restore
// exactly the values a model was built with.
double round_to_float(double v);
Tensor normal_init(Shape shape, double stddev, Rng& rng);
Tensor uniform_init(Shape shape, double bound, Rng& rng);

class Linear {
public:
    Linear() = default;
    Linear(std::size_t in, std::size_t out, Rng& rng, bool bias = true);

    Var operator()(const Var& x) const;
    void collect(const std::string& prefix, ParameterList& out);

    std::size_t in_features() const { return weight.shape()[1]; }
    std::size_t out_features() const { return weight.shape()[0]; }

    Var weight;  // (out, in)
    std::optional<Var> bias;
};

class Conv2d {
public:
    Conv2d() = default;
    // He-style normal init scaled by fan-in (in/groups * k * k).
    Conv2d(std::size_t in, std::size_t out, std::size_t kernel, ag::ConvSpec spec, Rng& rng, bool bias = false);

    Var operator()(const Var& x) const;
    void collect(const std::string& prefix, ParameterList& out);

    std::size_t out_channels() const { return weight.shape()[0]; }

    Var weight;
    std::optional<Var> bias;
    ag::ConvSpec spec;
};

class PRelu {
public:
    PRelu() = default;
    explicit PRelu(std::size_t channels, double init = 0.25);

    Var operator()(const Var& x) const { return ag::prelu(x, alpha); }
    void collect(const std::string& prefix, ParameterList& out);

    Var alpha;
};

}  // namespace affectkit::nn
