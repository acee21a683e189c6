#pragma once

// Helpers shared by the unit and acceptance tests: random tensors, a central
// finite-difference gradient checker and brute-force metric oracles.

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "affectkit/autograd.hpp"
#include "affectkit/nn.hpp"
#include "affectkit/task.hpp"
#include "affectkit/tensor.hpp"

namespace affectkit::testing {

inline Tensor random_tensor(Shape shape, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
    Tensor t(std::move(shape));
    std::uniform_real_distribution<double> d(lo, hi);
    for (double& v : t.values()) v = d(rng);
    return t;
}

struct GradCheckResult {
    double max_relative_error = 0.0;
    std::string worst;  // "<parameter>[<index>]"
    std::size_t checked = 0;
    // Entries whose stencil [w - h, w + h] straddles a kink (ReLU/PReLU, max,
    // hard-swish corners), detected without looking at the analytic gradient.
    std::size_t kinked = 0;
};

// Relative error |a - n| / max(|a|, |n|, floor). The floor keeps entries whose
// true derivative is ~0 from dominating through cancellation noise.
inline constexpr double kGradFloor = 1e-6;
inline constexpr double kGradStep = 1e-3;
// Central differences at h and h/2 agree to O(h^2) on smooth stretches; a kink
// inside the stencil breaks that agreement by O(1).
inline constexpr double kKinkTolerance = 1e-4;

// `loss` rebuilds the scalar objective from the current parameter values.
// Every element of every listed parameter is perturbed when max_per_tensor is
// 0; otherwise an evenly spaced subset of that size.
inline GradCheckResult gradient_check(const nn::ParameterList& params, const std::function<ag::Var()>& loss,
                                      std::size_t max_per_tensor = 0, double step = kGradStep,
                                      double floor = kGradFloor) {
    for (const auto& p : params) p.var->zero_grad();
    loss().backward();
    std::vector<Tensor> analytic;
    for (const auto& p : params) analytic.push_back(p.var->grad());

    auto value = [&] {
        ag::NoGradGuard guard;
        return loss().value()[0];
    };
    GradCheckResult result;
    for (std::size_t k = 0; k < params.size(); ++k) {
        Tensor& w = params[k].var->mutable_value();
        const std::size_t n = w.size();
        const std::size_t stride = (max_per_tensor == 0 || n <= max_per_tensor) ? 1 : n / max_per_tensor;
        for (std::size_t i = 0; i < n; i += stride) {
            const double saved = w[i];
            auto at = [&](double delta) {
                w[i] = saved + delta;
                const double f = value();
                w[i] = saved;
                return f;
            };
            const double numeric = (at(step) - at(-step)) / (2.0 * step);
            const double half = (at(step / 2) - at(-step / 2)) / step;
            ++result.checked;
            const double scale = std::max({std::abs(numeric), std::abs(half), floor});
            if (std::abs(numeric - half) / scale > kKinkTolerance) {
                ++result.kinked;
                continue;
            }
            const double a = analytic[k][i];
            const double rel = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), floor});
            if (rel > result.max_relative_error) {
                result.max_relative_error = rel;
                result.worst = params[k].name + "[" + std::to_string(i) + "]";
            }
        }
    }
    return result;
}

// Fixed random linear functional of an output, so every output entry
// contributes a distinct gradient.
inline ag::Var probe_loss(const ag::Var& out, const Tensor& weights) {
    return ag::sum_all(ag::mul(out, ag::Var(weights)));
}

// ---- brute-force metric oracles ----------------------------------------------

inline double oracle_f1(const std::vector<int>& pred, const std::vector<int>& truth) {
    double tp = 0, fp = 0, fn = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        if (pred[i] && truth[i]) tp += 1;
        if (pred[i] && !truth[i]) fp += 1;
        if (!pred[i] && truth[i]) fn += 1;
    }
    const double denom = 2 * tp + fp + fn;
    return denom == 0 ? 0.0 : 2 * tp / denom;
}

// Macro F1 over 8 categories via an explicit confusion matrix.
inline double oracle_macro_f1_expr(const std::vector<int>& pred, const std::vector<int>& truth) {
    double confusion[kExpressionCount][kExpressionCount] = {};
    for (std::size_t i = 0; i < pred.size(); ++i) confusion[truth[i]][pred[i]] += 1;
    double sum = 0.0;
    for (std::size_t c = 0; c < kExpressionCount; ++c) {
        double tp = confusion[c][c], fp = 0, fn = 0;
        for (std::size_t o = 0; o < kExpressionCount; ++o) {
            if (o == c) continue;
            fp += confusion[o][c];
            fn += confusion[c][o];
        }
        const double denom = 2 * tp + fp + fn;
        sum += denom == 0 ? 0.0 : 2 * tp / denom;
    }
    return sum / kExpressionCount;
}

inline double oracle_macro_f1_au(const Tensor& probs, const std::vector<AuBits>& labels,
                                 const std::vector<double>& thresholds) {
    double sum = 0.0;
    for (std::size_t a = 0; a < kActionUnitCount; ++a) {
        std::vector<int> pred, truth;
        for (std::size_t i = 0; i < labels.size(); ++i) {
            pred.push_back(probs.at(i, a) >= thresholds[a] ? 1 : 0);
            truth.push_back(labels[i][a]);
        }
        sum += oracle_f1(pred, truth);
    }
    return sum / kActionUnitCount;
}

// Lin's CCC written out with two-pass sums.
inline double oracle_ccc(const std::vector<double>& x, const std::vector<double>& y) {
    const double n = static_cast<double>(x.size());
    double mx = 0, my = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        mx += x[i];
        my += y[i];
    }
    mx /= n;
    my /= n;
    double vx = 0, vy = 0, c = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        vx += (x[i] - mx) * (x[i] - mx);
        vy += (y[i] - my) * (y[i] - my);
        c += (x[i] - mx) * (y[i] - my);
    }
    vx /= n;
    vy /= n;
    c /= n;
    const double denom = vx + vy + (mx - my) * (mx - my);
    return denom == 0 ? 0.0 : 2 * c / denom;
}

}  // namespace affectkit::testing
