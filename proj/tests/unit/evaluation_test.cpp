#include <doctest.h>

#include <algorithm>
#include <random>

#include "affectkit/errors.hpp"
#include "affectkit/evaluation.hpp"
#include "test_support.hpp"

using namespace affectkit;
using namespace affectkit::evaluation;
using namespace affectkit::testing;

namespace {

Tensor au_column(const std::vector<double>& p) {
    Tensor t({p.size(), kActionUnitCount}, 0.0);
    for (std::size_t i = 0; i < p.size(); ++i)
        for (std::size_t a = 0; a < kActionUnitCount; ++a) t.at(i, a) = p[i];
    return t;
}

std::vector<AuBits> au_labels(const std::vector<int>& bits) {
    std::vector<AuBits> out(bits.size());
    for (std::size_t i = 0; i < bits.size(); ++i) out[i].fill(bits[i]);
    return out;
}

}  // namespace

TEST_CASE("f1 score and its zero-denominator convention") {
    CHECK(f1_score(0, 0, 0) == 0.0);
    CHECK(f1_score(1, 0, 0) == 1.0);
    CHECK(f1_score(1, 1, 0) == doctest::Approx(2.0 / 3.0));
    CHECK(f1_score(0, 3, 2) == 0.0);
}

TEST_CASE("expression macro f1 with two frames") {
    const std::vector<int> truth{0, 1};
    const std::vector<int> pred{0, 0};
    const MetricReport r = metric_expr(pred, truth);
    CHECK(r.score == doctest::Approx(1.0 / 12.0));
    REQUIRE(r.breakdown.size() == 8);
    CHECK(r.breakdown[0] == doctest::Approx(2.0 / 3.0));
    CHECK(r.frames == 2);
    CHECK_THROWS_AS(metric_expr(std::vector<int>{8}, std::vector<int>{0}), ContractViolation);
    CHECK_THROWS_AS(metric_expr(std::vector<int>{0}, std::vector<int>{0, 1}), ContractViolation);
}

TEST_CASE("metrics agree with brute-force oracles on random data") {
    std::mt19937_64 rng(12);
    std::uniform_int_distribution<int> label(0, 7);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<int> pred(40), truth(40);
        for (auto& v : pred) v = label(rng);
        for (auto& v : truth) v = label(rng);
        CHECK(metric_expr(pred, truth).score == doctest::Approx(oracle_macro_f1_expr(pred, truth)).epsilon(1e-12));

        Tensor probs({30, 12});
        for (double& v : probs.values()) v = unit(rng);
        std::vector<AuBits> labels(30);
        for (auto& l : labels)
            for (int& v : l) v = unit(rng) < 0.3 ? 1 : 0;
        std::vector<double> t(12);
        for (auto& v : t) v = unit(rng);
        ThresholdVector tv;
        std::copy(t.begin(), t.end(), tv.values.begin());
        CHECK(metric_au(probs, labels, tv).score == doctest::Approx(oracle_macro_f1_au(probs, labels, t)).epsilon(1e-12));

        Tensor va_pred({25, 2}), va_true({25, 2});
        for (double& v : va_pred.values()) v = unit(rng) * 2 - 1;
        for (double& v : va_true.values()) v = unit(rng) * 2 - 1;
        std::vector<double> pv, pa, tvv, ta;
        for (std::size_t i = 0; i < 25; ++i) {
            pv.push_back(va_pred.at(i, 0));
            pa.push_back(va_pred.at(i, 1));
            tvv.push_back(va_true.at(i, 0));
            ta.push_back(va_true.at(i, 1));
        }
        const MetricReport va = metric_va(va_pred, va_true);
        CHECK(va.score == doctest::Approx((oracle_ccc(pv, tvv) + oracle_ccc(pa, ta)) / 2).epsilon(1e-12));
    }
}

TEST_CASE("metrics are invariant to a joint permutation of frames") {
    std::mt19937_64 rng(13);
    std::uniform_int_distribution<int> label(0, 7);
    std::vector<int> pred(50), truth(50);
    for (auto& v : pred) v = label(rng);
    for (auto& v : truth) v = label(rng);
    std::vector<std::size_t> order(50);
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    std::vector<int> pp, tp;
    for (auto i : order) {
        pp.push_back(pred[i]);
        tp.push_back(truth[i]);
    }
    CHECK(metric_expr(pred, truth).score == doctest::Approx(metric_expr(pp, tp).score).epsilon(1e-14));

    Tensor va_pred = random_tensor({50, 2}, rng), va_true = random_tensor({50, 2}, rng);
    Tensor sp({50, 2}), st({50, 2});
    for (std::size_t i = 0; i < 50; ++i)
        for (std::size_t c = 0; c < 2; ++c) {
            sp.at(i, c) = va_pred.at(order[i], c);
            st.at(i, c) = va_true.at(order[i], c);
        }
    CHECK(metric_va(va_pred, va_true).score == doctest::Approx(metric_va(sp, st).score).epsilon(1e-12));
}

TEST_CASE("va metric checks shapes and reports both axes") {
    const Tensor t({3, 2}, {0.1, 0.2, 0.3, -0.1, -0.5, 0.4});
    const MetricReport r = metric_va(t, t);
    CHECK(r.score == doctest::Approx(1.0));
    CHECK(r.breakdown.size() == 2);
    CHECK_THROWS_AS(metric_va(Tensor({1, 2}), Tensor({1, 2})), ContractViolation);
    CHECK_THROWS_AS(metric_va(Tensor({3, 2}), Tensor({3, 3})), ContractViolation);
}

TEST_CASE("threshold sweep finds the separating threshold") {
    const Tensor probs = au_column({0.1, 0.4, 0.6, 0.9});
    const auto labels = au_labels({0, 0, 1, 1});
    const auto grid = default_threshold_grid();
    REQUIRE(grid.size() == 19);
    const ThresholdVector t = optimize_thresholds(probs, labels, grid);
    for (double v : t.values) CHECK(v == doctest::Approx(0.45));
    CHECK(metric_au(probs, labels, t).score == doctest::Approx(1.0));
}

TEST_CASE("all-positive labels pick the lowest grid value") {
    const Tensor probs = au_column({0.2, 0.5, 0.7});
    const auto labels = au_labels({1, 1, 1});
    const ThresholdVector t = optimize_thresholds(probs, labels, default_threshold_grid());
    for (double v : t.values) CHECK(v == doctest::Approx(0.05));
}

TEST_CASE("optimized thresholds never score below 0.5") {
    std::mt19937_64 rng(14);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    for (int trial = 0; trial < 10; ++trial) {
        Tensor probs({40, 12});
        for (double& v : probs.values()) v = unit(rng);
        std::vector<AuBits> labels(40);
        for (auto& l : labels)
            for (int& v : l) v = unit(rng) < 0.4 ? 1 : 0;
        const auto t = optimize_thresholds(probs, labels, default_threshold_grid());
        CHECK(metric_au(probs, labels, t).score >= metric_au(probs, labels, ThresholdVector::uniform()).score);
    }
}

TEST_CASE("threshold grid is validated") {
    const Tensor probs = au_column({0.5});
    const auto labels = au_labels({1});
    CHECK_THROWS_AS(optimize_thresholds(probs, labels, std::vector<double>{}), ContractViolation);
    CHECK_THROWS_AS(optimize_thresholds(probs, labels, std::vector<double>{0.5, 0.4}), ContractViolation);
    CHECK_THROWS_AS(optimize_thresholds(probs, labels, std::vector<double>{0.0, 0.5}), ContractViolation);
    CHECK_THROWS_AS(metric_au(probs, au_labels({2}), ThresholdVector::uniform()), ContractViolation);
}

TEST_CASE("metric report JSON round trip") {
    const Tensor probs = au_column({0.1, 0.4, 0.6, 0.9});
    const auto labels = au_labels({0, 1, 1, 1});
    MetricReport r = metric_au(probs, labels, ThresholdVector::uniform());
    attach_optimized(r, probs, labels, optimize_thresholds(probs, labels, default_threshold_grid()));
    const MetricReport back = report_from_json(to_json(r));
    CHECK(back.task == Task::AU);
    CHECK(back.score == r.score);
    CHECK(back.breakdown == r.breakdown);
    CHECK(back.labels == r.labels);
    CHECK(back.frames == 4);
    CHECK(back.thresholds == r.thresholds);
    CHECK(back.optimized_score == r.optimized_score);
    CHECK(back.optimized_thresholds == r.optimized_thresholds);
    CHECK(*back.optimized_score >= back.score);
}

TEST_CASE("results table layout") {
    const std::vector<ResultsRow> rows{{"DDAMFN+Fc", 0.5123, 0.25, 0.4, 0.45}, {"CLIP+Fc", std::nullopt, 0.3, {}, {}}};
    const std::string table = render_results_table(rows);
    std::istringstream in(table);
    std::string header, rule, first, second;
    std::getline(in, header);
    std::getline(in, rule);
    std::getline(in, first);
    std::getline(in, second);
    const auto pos = [&](const std::string& s) { return header.find(s); };
    CHECK(pos("Architecture") == 0);
    CHECK(pos("CCC_VA") < pos("F1_Expr"));
    CHECK(pos("F1_Expr") < pos("F1_AU "));
    CHECK(pos("F1_AU ") < pos("F1_AUopt"));
    CHECK(first.rfind("DDAMFN+Fc", 0) == 0);
    CHECK(first.find("0.512") != std::string::npos);
    CHECK(second.find(" -") != std::string::npos);
    CHECK(second.find("0.300") != std::string::npos);
}
