#include "affectkit/objectives.hpp"

#include <algorithm>
#include <cmath>

#include "affectkit/errors.hpp"

namespace affectkit::objectives {

namespace {

void require_series(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size()) {
        throw ContractViolation("ccc: length mismatch (" + std::to_string(x.size()) + " vs " +
                                std::to_string(y.size()) + ")");
    }
    if (x.size() < 2) throw ContractViolation("ccc: series must have at least 2 elements");
}

double denominator(const CCCStats& s) {
    const double d = s.mean_x - s.mean_y;
    return s.var_x + s.var_y + d * d;
}

std::vector<double> column(const Tensor& t, std::size_t c) {
    std::vector<double> out(t.dim(0));
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = t.at(i, c);
    return out;
}

void require_au_labels(const AuBits& labels) {
    for (int v : labels) {
        if (v != 0 && v != 1) throw ContractViolation("binary cross-entropy: AU labels must be 0 or 1");
    }
}

}  // namespace

CCCStats ccc_stats(std::span<const double> x, std::span<const double> y) {
    require_series(x, y);
    const double n = static_cast<double>(x.size());
    CCCStats s;
    for (std::size_t i = 0; i < x.size(); ++i) {
        s.mean_x += x[i];
        s.mean_y += y[i];
    }
    s.mean_x /= n;
    s.mean_y /= n;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double dx = x[i] - s.mean_x;
        const double dy = y[i] - s.mean_y;
        s.var_x += dx * dx;
        s.var_y += dy * dy;
        s.cov += dx * dy;
    }
    s.var_x /= n;
    s.var_y /= n;
    s.cov /= n;
    return s;
}

double ccc(std::span<const double> x, std::span<const double> y) {
    const CCCStats s = ccc_stats(x, y);
    const double den = denominator(s);
    if (den == 0.0) return 0.0;
    return std::clamp(2.0 * s.cov / den, -1.0, 1.0);
}

std::vector<double> ccc_gradient(std::span<const double> x, std::span<const double> y) {
    const CCCStats s = ccc_stats(x, y);
    const double den = denominator(s);
    std::vector<double> g(x.size(), 0.0);
    if (den == 0.0) return g;
    const double n = static_cast<double>(x.size());
    const double num = 2.0 * s.cov;
    const double gap = s.mean_x - s.mean_y;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double d_num = 2.0 * (y[i] - s.mean_y) / n;
        const double d_den = 2.0 * (x[i] - s.mean_x) / n + 2.0 * gap / n;
        g[i] = (d_num * den - num * d_den) / (den * den);
    }
    return g;
}

LossValue ccc_loss(const Tensor& pred, const Tensor& target) {
    if (pred.rank() != 2 || pred.dim(1) != 2 || pred.shape() != target.shape()) {
        throw ContractViolation("ccc_loss: expected matching (N, 2) tensors, got " + to_string(pred.shape()) +
                                " and " + to_string(target.shape()));
    }
    LossValue out{0.0, Tensor(pred.shape())};
    double total = 0.0;
    for (std::size_t c = 0; c < 2; ++c) {
        const auto x = column(pred, c);
        const auto y = column(target, c);
        total += ccc(x, y);
        const auto g = ccc_gradient(x, y);
        for (std::size_t i = 0; i < g.size(); ++i) out.grad.at(i, c) = -0.5 * g[i];
    }
    out.value = 1.0 - total / 2.0;
    return out;
}

double cross_entropy(std::span<const double> logits, int label) {
    if (label < 0 || static_cast<std::size_t>(label) >= logits.size()) {
        throw ContractViolation("cross_entropy: label " + std::to_string(label) + " out of range");
    }
    const double peak = *std::max_element(logits.begin(), logits.end());
    double sum = 0.0;
    for (double v : logits) sum += std::exp(v - peak);
    return std::log(sum) + peak - logits[static_cast<std::size_t>(label)];
}

LossValue cross_entropy(const Tensor& logits, std::span<const int> labels) {
    if (logits.rank() != 2 || logits.dim(0) != labels.size() || labels.empty()) {
        throw ContractViolation("cross_entropy: logits " + to_string(logits.shape()) + " vs " +
                                std::to_string(labels.size()) + " labels");
    }
    const std::size_t n = logits.dim(0);
    const std::size_t k = logits.dim(1);
    LossValue out{0.0, Tensor(logits.shape())};
    for (std::size_t i = 0; i < n; ++i) {
        std::span<const double> row(logits.data() + i * k, k);
        out.value += cross_entropy(row, labels[i]);
        const double peak = *std::max_element(row.begin(), row.end());
        double sum = 0.0;
        for (double v : row) sum += std::exp(v - peak);
        for (std::size_t j = 0; j < k; ++j) {
            const double p = std::exp(row[j] - peak) / sum;
            out.grad.at(i, j) = (p - (static_cast<int>(j) == labels[i] ? 1.0 : 0.0)) / static_cast<double>(n);
        }
    }
    out.value /= static_cast<double>(n);
    return out;
}

double binary_cross_entropy(std::span<const double> probs, const AuBits& labels) {
    if (probs.size() != labels.size()) throw ContractViolation("binary cross-entropy: expected 12 probabilities");
    require_au_labels(labels);
    double total = 0.0;
    for (std::size_t a = 0; a < probs.size(); ++a) {
        const double p = std::clamp(probs[a], kBceEpsilon, 1.0 - kBceEpsilon);
        total -= labels[a] == 1 ? std::log(p) : std::log(1.0 - p);
    }
    return total / static_cast<double>(probs.size());
}

LossValue binary_cross_entropy(const Tensor& probs, std::span<const AuBits> labels) {
    if (probs.rank() != 2 || probs.dim(1) != kActionUnitCount || probs.dim(0) != labels.size() || labels.empty()) {
        throw ContractViolation("binary cross-entropy: probs " + to_string(probs.shape()) + " vs " +
                                std::to_string(labels.size()) + " label vectors");
    }
    const std::size_t n = probs.dim(0);
    const double scale = 1.0 / static_cast<double>(n * kActionUnitCount);
    LossValue out{0.0, Tensor(probs.shape())};
    for (std::size_t i = 0; i < n; ++i) {
        std::span<const double> row(probs.data() + i * kActionUnitCount, kActionUnitCount);
        out.value += binary_cross_entropy(row, labels[i]);
        for (std::size_t a = 0; a < kActionUnitCount; ++a) {
            const double raw = row[a];
            if (raw < kBceEpsilon || raw > 1.0 - kBceEpsilon) continue;  // clamp is flat there
            out.grad.at(i, a) = (labels[i][a] == 1 ? -1.0 / raw : 1.0 / (1.0 - raw)) * scale;
        }
    }
    out.value /= static_cast<double>(n);
    return out;
}

}  // namespace affectkit::objectives
