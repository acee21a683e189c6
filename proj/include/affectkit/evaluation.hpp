#pragma once

// Challenge metrics:
//   VA   P = (CCC_V + CCC_A) / 2
//   EXPR P = mean of the 8 one-vs-rest F1 scores
//   AU   P = mean of the 12 per-AU binary F1 scores
// F1 = 2TP / (2TP + FP + FN), scored 0 when the denominator is 0.

#include <array>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "affectkit/task.hpp"
#include "affectkit/tensor.hpp"

namespace affectkit::evaluation {

struct ThresholdVector {
    std::array<double, kActionUnitCount> values{};

    static ThresholdVector uniform(double t = 0.5);
    friend bool operator==(const ThresholdVector&, const ThresholdVector&) = default;
};

struct MetricReport {
    Task task = Task::VA;
    double score = 0.0;
    std::vector<std::string> labels;  // names of the breakdown entries
    std::vector<double> breakdown;    // (CCC_V, CCC_A) | 8 F1 | 12 F1
    std::size_t frames = 0;

    // AU only.
    std::optional<ThresholdVector> thresholds;
    std::optional<double> optimized_score;
    std::vector<double> optimized_breakdown;
    std::optional<ThresholdVector> optimized_thresholds;
};

double f1_score(std::size_t tp, std::size_t fp, std::size_t fn);

// pred, target: (N, 2), N >= 2.
MetricReport metric_va(const Tensor& pred, const Tensor& target);
MetricReport metric_expr(std::span<const int> predicted, std::span<const int> truth);
// probs (N, 12); predicted positive iff prob >= threshold.
MetricReport metric_au(const Tensor& probs, std::span<const AuBits> labels, const ThresholdVector& thresholds);

// {0.05, 0.10, ..., 0.95}
std::vector<double> default_threshold_grid();

// Per-AU independent sweep; ties resolve to the lowest grid value. The grid
// must be non-empty, strictly increasing and inside (0, 1).
ThresholdVector optimize_thresholds(const Tensor& probs, std::span<const AuBits> labels,
                                    std::span<const double> grid);

// Copies metric_au's results at `optimized` into the optimized_* fields.
void attach_optimized(MetricReport& report, const Tensor& probs, std::span<const AuBits> labels,
                      const ThresholdVector& optimized);

nlohmann::json to_json(const MetricReport& report);
MetricReport report_from_json(const nlohmann::json& j);

struct ResultsRow {
    std::string architecture;
    std::optional<double> ccc_va;
    std::optional<double> f1_expr;
    std::optional<double> f1_au;
    std::optional<double> f1_au_opt;
};

// Columns: Architecture | CCC_VA | F1_Expr | F1_AU | F1_AUopt ("-" when absent).
std::string render_results_table(std::span<const ResultsRow> rows);

}  // namespace affectkit::evaluation
