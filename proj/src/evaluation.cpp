#include "affectkit/evaluation.hpp"

#include <algorithm>
#include <numeric>

#include <fmt/format.h>

#include "affectkit/errors.hpp"
#include "affectkit/objectives.hpp"

namespace affectkit::evaluation {

namespace {

const std::array<const char*, kActionUnitCount> kAuNames{"AU1",  "AU2",  "AU4",  "AU6",  "AU7",  "AU10",
                                                         "AU12", "AU15", "AU23", "AU24", "AU25", "AU26"};

double mean(const std::vector<double>& v) {
    return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

void require_au_inputs(const Tensor& probs, std::span<const AuBits> labels) {
    if (probs.rank() != 2 || probs.dim(1) != kActionUnitCount || probs.dim(0) != labels.size()) {
        throw ContractViolation("metric_au: probs " + to_string(probs.shape()) + " vs " +
                                std::to_string(labels.size()) + " label vectors");
    }
    for (const auto& row : labels)
        for (int v : row)
            if (v != 0 && v != 1) throw ContractViolation("metric_au: labels must be 0 or 1");
}

double au_f1(const Tensor& probs, std::span<const AuBits> labels, std::size_t au, double threshold) {
    std::size_t tp = 0, fp = 0, fn = 0;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        const bool predicted = probs.at(i, au) >= threshold;
        const bool actual = labels[i][au] == 1;
        tp += predicted && actual;
        fp += predicted && !actual;
        fn += !predicted && actual;
    }
    return f1_score(tp, fp, fn);
}

std::string cell(const std::optional<double>& v) { return v ? fmt::format("{:.3f}", *v) : std::string("-"); }

}  // namespace

ThresholdVector ThresholdVector::uniform(double t) {
    ThresholdVector v;
    v.values.fill(t);
    return v;
}

double f1_score(std::size_t tp, std::size_t fp, std::size_t fn) {
    const std::size_t den = 2 * tp + fp + fn;
    return den == 0 ? 0.0 : 2.0 * static_cast<double>(tp) / static_cast<double>(den);
}

MetricReport metric_va(const Tensor& pred, const Tensor& target) {
    if (pred.rank() != 2 || pred.dim(1) != 2 || pred.shape() != target.shape()) {
        throw ContractViolation("metric_va: expected matching (N, 2) tensors, got " + to_string(pred.shape()) +
                                " and " + to_string(target.shape()));
    }
    MetricReport r;
    r.task = Task::VA;
    r.frames = pred.dim(0);
    r.labels = {"CCC_V", "CCC_A"};
    for (std::size_t c = 0; c < 2; ++c) {
        std::vector<double> x(r.frames), y(r.frames);
        for (std::size_t i = 0; i < r.frames; ++i) {
            x[i] = pred.at(i, c);
            y[i] = target.at(i, c);
        }
        r.breakdown.push_back(objectives::ccc(x, y));
    }
    r.score = mean(r.breakdown);
    return r;
}

MetricReport metric_expr(std::span<const int> predicted, std::span<const int> truth) {
    if (predicted.size() != truth.size()) throw ContractViolation("metric_expr: length mismatch");
    constexpr int k = static_cast<int>(kExpressionCount);
    std::array<std::size_t, kExpressionCount> tp{}, fp{}, fn{};
    for (std::size_t i = 0; i < truth.size(); ++i) {
        const int p = predicted[i];
        const int t = truth[i];
        if (p < 0 || p >= k || t < 0 || t >= k) throw ContractViolation("metric_expr: label out of {0..7}");
        if (p == t) {
            ++tp[static_cast<std::size_t>(p)];
        } else {
            ++fp[static_cast<std::size_t>(p)];
            ++fn[static_cast<std::size_t>(t)];
        }
    }
    MetricReport r;
    r.task = Task::EXPR;
    r.frames = truth.size();
    for (std::size_t c = 0; c < kExpressionCount; ++c) {
        r.labels.push_back("F1_" + std::to_string(c));
        r.breakdown.push_back(f1_score(tp[c], fp[c], fn[c]));
    }
    r.score = mean(r.breakdown);
    return r;
}

MetricReport metric_au(const Tensor& probs, std::span<const AuBits> labels, const ThresholdVector& thresholds) {
    require_au_inputs(probs, labels);
    MetricReport r;
    r.task = Task::AU;
    r.frames = labels.size();
    r.thresholds = thresholds;
    for (std::size_t a = 0; a < kActionUnitCount; ++a) {
        r.labels.emplace_back(kAuNames[a]);
        r.breakdown.push_back(au_f1(probs, labels, a, thresholds.values[a]));
    }
    r.score = mean(r.breakdown);
    return r;
}

std::vector<double> default_threshold_grid() {
    std::vector<double> grid;
    for (int k = 1; k <= 19; ++k) grid.push_back(k / 20.0);
    return grid;
}

ThresholdVector optimize_thresholds(const Tensor& probs, std::span<const AuBits> labels,
                                    std::span<const double> grid) {
    if (grid.empty()) throw ContractViolation("optimize_thresholds: empty grid");
    for (std::size_t i = 0; i < grid.size(); ++i) {
        if (!(grid[i] > 0.0 && grid[i] < 1.0)) throw ContractViolation("optimize_thresholds: grid outside (0, 1)");
        if (i && !(grid[i] > grid[i - 1])) throw ContractViolation("optimize_thresholds: grid not strictly increasing");
    }
    require_au_inputs(probs, labels);
    ThresholdVector best;
    for (std::size_t a = 0; a < kActionUnitCount; ++a) {
        double best_f1 = -1.0;
        for (double t : grid) {
            const double f1 = au_f1(probs, labels, a, t);
            if (f1 > best_f1) {
                best_f1 = f1;
                best.values[a] = t;
            }
        }
    }
    return best;
}

void attach_optimized(MetricReport& report, const Tensor& probs, std::span<const AuBits> labels,
                      const ThresholdVector& optimized) {
    const MetricReport opt = metric_au(probs, labels, optimized);
    report.optimized_score = opt.score;
    report.optimized_breakdown = opt.breakdown;
    report.optimized_thresholds = optimized;
}

nlohmann::json to_json(const MetricReport& r) {
    nlohmann::json j{{"task", task_name(r.task)},
                     {"P", r.score},
                     {"labels", r.labels},
                     {"breakdown", r.breakdown},
                     {"frames", r.frames},
                     {"conventions", {{"f1_zero_denominator", 0.0}, {"binarize", ">= threshold"}}}};
    if (r.thresholds) j["thresholds"] = r.thresholds->values;
    if (r.optimized_score) {
        j["P_opt"] = *r.optimized_score;
        j["breakdown_opt"] = r.optimized_breakdown;
        j["thresholds_opt"] = r.optimized_thresholds->values;
    }
    return j;
}

MetricReport report_from_json(const nlohmann::json& j) {
    MetricReport r;
    r.task = parse_task(j.at("task").get<std::string>());
    r.score = j.at("P").get<double>();
    r.labels = j.at("labels").get<std::vector<std::string>>();
    r.breakdown = j.at("breakdown").get<std::vector<double>>();
    r.frames = j.at("frames").get<std::size_t>();
    if (j.contains("thresholds")) r.thresholds = ThresholdVector{j.at("thresholds").get<std::array<double, 12>>()};
    if (j.contains("P_opt")) {
        r.optimized_score = j.at("P_opt").get<double>();
        r.optimized_breakdown = j.at("breakdown_opt").get<std::vector<double>>();
        r.optimized_thresholds = ThresholdVector{j.at("thresholds_opt").get<std::array<double, 12>>()};
    }
    return r;
}

std::string render_results_table(std::span<const ResultsRow> rows) {
    std::size_t name_width = std::string_view("Architecture").size();
    for (const auto& row : rows) name_width = std::max(name_width, row.architecture.size());
    std::string out = fmt::format("{:<{}}  {:>8}  {:>8}  {:>8}  {:>8}\n", "Architecture", name_width, "CCC_VA",
                                  "F1_Expr", "F1_AU", "F1_AUopt");
    out += std::string(name_width + 4 * 10, '-') + "\n";
    for (const auto& row : rows) {
        out += fmt::format("{:<{}}  {:>8}  {:>8}  {:>8}  {:>8}\n", row.architecture, name_width, cell(row.ccc_va),
                           cell(row.f1_expr), cell(row.f1_au), cell(row.f1_au_opt));
    }
    return out;
}

}  // namespace affectkit::evaluation
