#include "affectkit/nn.hpp"

#include <cmath>

namespace affectkit::nn {

void set_trainable(const ParameterList& params, bool trainable) {
    for (const auto& p : params) p.var->set_requires_grad(trainable);
}

std::size_t parameter_count(const ParameterList& params) {
    std::size_t n = 0;
    for (const auto& p : params) n += p.var->value().size();
    return n;
}

double round_to_float(double v) { return static_cast<double>(static_cast<float>(v)); }

Tensor normal_init(Shape shape, double stddev, Rng& rng) {
    Tensor t(std::move(shape));
    std::normal_distribution<double> dist(0.0, stddev);
    for (auto& v : t.values()) v = round_to_float(dist(rng));
    return t;
}

Tensor uniform_init(Shape shape, double bound, Rng& rng) {
    Tensor t(std::move(shape));
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (auto& v : t.values()) v = round_to_float(dist(rng));
    return t;
}

Linear::Linear(std::size_t in, std::size_t out, Rng& rng, bool with_bias) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(in));
    weight = Var(uniform_init({out, in}, bound, rng), true);
    if (with_bias) bias = Var(uniform_init({out}, bound, rng), true);
}

Var Linear::operator()(const Var& x) const { return ag::linear(x, weight, bias); }

void Linear::collect(const std::string& prefix, ParameterList& out) {
    out.push_back({prefix + ".weight", &weight});
    if (bias) out.push_back({prefix + ".bias", &*bias});
}

Conv2d::Conv2d(std::size_t in, std::size_t out, std::size_t kernel, ag::ConvSpec s, Rng& rng, bool with_bias)
    : spec(s) {
    const std::size_t fan_in = (in / s.groups) * kernel * kernel;
    weight = Var(normal_init({out, in / s.groups, kernel, kernel}, std::sqrt(2.0 / static_cast<double>(fan_in)), rng),
                 true);
    if (with_bias) bias = Var(Tensor({out}), true);
}

Var Conv2d::operator()(const Var& x) const { return ag::conv2d(x, weight, bias, spec); }

void Conv2d::collect(const std::string& prefix, ParameterList& out) {
    out.push_back({prefix + ".weight", &weight});
    if (bias) out.push_back({prefix + ".bias", &*bias});
}

PRelu::PRelu(std::size_t channels, double init) : alpha(Tensor({channels}, init), true) {}

void PRelu::collect(const std::string& prefix, ParameterList& out) { out.push_back({prefix + ".alpha", &alpha}); }

}  // namespace affectkit::nn
