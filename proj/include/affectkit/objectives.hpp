#pragma once

// Training losses. Each batched loss returns its value together with the
// gradient with respect to the predictions so it can be attached to a graph
// through ag::external.

#include <span>
#include <vector>

#include "affectkit/clip_align.hpp"
#include "affectkit/task.hpp"
#include "affectkit/tensor.hpp"

namespace affectkit::objectives {

inline constexpr double kBceEpsilon = 1e-7;

// Population (1/N) moments.
struct CCCStats {
    double mean_x = 0.0;
    double mean_y = 0.0;
    double var_x = 0.0;
    double var_y = 0.0;
    double cov = 0.0;
};

CCCStats ccc_stats(std::span<const double> x, std::span<const double> y);

// Lin's concordance: 2 cov / (var_x + var_y + (mean_x - mean_y)^2); 0 when the
// denominator vanishes. Requires equal lengths >= 2.
double ccc(std::span<const double> x, std::span<const double> y);
// d ccc(x, y) / d x
std::vector<double> ccc_gradient(std::span<const double> x, std::span<const double> y);

struct LossValue {
    double value = 0.0;
    Tensor grad;  // same shape as the predictions
};

// pred, target: (N, 2) valence/arousal columns. 1 - (CCC_v + CCC_a) / 2.
LossValue ccc_loss(const Tensor& pred, const Tensor& target);

// -log softmax(logits)[label]
double cross_entropy(std::span<const double> logits, int label);
// logits (N, 8); mean over the batch.
LossValue cross_entropy(const Tensor& logits, std::span<const int> labels);

// Mean over AUs of the binary cross-entropy, probabilities clamped to [eps, 1 - eps].
double binary_cross_entropy(std::span<const double> probs, const AuBits& labels);
// probs (N, 12); mean over frames and AUs.
LossValue binary_cross_entropy(const Tensor& probs, std::span<const AuBits> labels);

using clip::contrastive_loss;
using clip::ContrastiveLoss;

}  // namespace affectkit::objectives
