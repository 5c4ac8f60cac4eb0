// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <sstream>
#include <string>

#include "acceptance/oracles.hpp"
#include "debias/error.hpp"
#include "debias/eval.hpp"
#include "debias/rng.hpp"

using namespace debias;
using namespace debias::eval;

namespace {

PredictionSet make_set(Scheme scheme, std::initializer_list<std::tuple<Label, Label, Dialect>> rows) {
    PredictionSet p;
    p.scheme = scheme;
    for (const auto& [gold, pred, z] : rows) p.items.push_back({"i" + std::to_string(p.items.size()), gold, pred, z});
    return p;
}

// AAE: one true positive, one false positive, one true negative for abusive.
// WAE: one false negative, one true negative.
PredictionSet hand_set() {
    return make_set(Scheme::two_class, {{Label::abusive, Label::abusive, Dialect::aae},
                                        {Label::normal, Label::abusive, Dialect::aae},
                                        {Label::normal, Label::normal, Dialect::aae},
                                        {Label::abusive, Label::normal, Dialect::wae},
                                        {Label::normal, Label::normal, Dialect::wae}});
}

}  // namespace

TEST(Metrics, HandComputedSubgroupValues) {
    const auto p = hand_set();
    EXPECT_DOUBLE_EQ(*per_class_fpr(confusion(p, Dialect::aae), Label::abusive), 0.5);
    EXPECT_DOUBLE_EQ(*per_class_fpr(confusion(p, Dialect::wae), Label::abusive), 0.0);
    EXPECT_DOUBLE_EQ(*prob_true(p, Label::abusive, Dialect::aae), 2.0 / 3.0);
    EXPECT_DOUBLE_EQ(*prob_true(p, Label::abusive, Dialect::wae), 0.0);
    EXPECT_DOUBLE_EQ(*parity_gap(p, Label::abusive), 2.0 / 3.0);
    EXPECT_DOUBLE_EQ(*equality_gap(p, Label::abusive), 1.0);
    EXPECT_DOUBLE_EQ(*equality_gap(p, Label::normal), 0.5 - 1.0);
}

TEST(Metrics, HandComputedStandardValues) {
    const auto m = standard_metrics(hand_set());
    EXPECT_DOUBLE_EQ(m.accuracy, 3.0 / 5.0);
    // abusive: TP 1, FP 1, FN 1; normal: TP 2, FP 1, FN 1
    EXPECT_DOUBLE_EQ(*m.per_class[1].precision, 0.5);
    EXPECT_DOUBLE_EQ(*m.per_class[1].recall, 0.5);
    EXPECT_DOUBLE_EQ(*m.per_class[1].f1, 0.5);
    EXPECT_DOUBLE_EQ(*m.per_class[0].f1, 4.0 / 6.0);
    EXPECT_EQ(m.per_class[0].support, 3u);
    EXPECT_DOUBLE_EQ(*m.macro_f1, (0.5 + 4.0 / 6.0) / 2.0);
}

TEST(Metrics, IdenticalSubgroupBehaviourHasZeroGaps) {
    const auto p = make_set(Scheme::four_class, {{Label::spam, Label::spam, Dialect::aae},
                                                 {Label::hateful, Label::normal, Dialect::aae},
                                                 {Label::spam, Label::spam, Dialect::wae},
                                                 {Label::hateful, Label::normal, Dialect::wae}});
    for (Label y : kFourClassLabels) {
        if (auto g = parity_gap(p, y)) EXPECT_EQ(*g, 0.0);
        if (auto g = equality_gap(p, y)) EXPECT_EQ(*g, 0.0);
    }
    EXPECT_FALSE(equality_gap(p, Label::abusive).has_value());
    EXPECT_EQ(*parity_gap(p, Label::abusive), 0.0);
}

TEST(Metrics, AbsentValues) {
    const auto only_aae = make_set(Scheme::two_class, {{Label::normal, Label::normal, Dialect::aae}});
    EXPECT_FALSE(prob_true(only_aae, Label::normal, Dialect::wae).has_value());
    EXPECT_FALSE(parity_gap(only_aae, Label::normal).has_value());
    EXPECT_FALSE(per_class_fpr(confusion(only_aae), Label::normal).has_value());
    EXPECT_EQ(*per_class_fpr(confusion(only_aae), Label::abusive), 0.0);
    EXPECT_THROW(confusion(only_aae, Dialect::wae), ValidationError);
    const auto r = build_report(only_aae, std::nullopt, {});
    EXPECT_FALSE(r.wae.has_value());
    EXPECT_FALSE(r.mean_abs_parity_gap().has_value());
    const auto m = r.standard;
    EXPECT_FALSE(m.per_class[1].precision.has_value());
    EXPECT_FALSE(m.per_class[1].recall.has_value());
    EXPECT_FALSE(m.per_class[1].f1.has_value());
    EXPECT_DOUBLE_EQ(*m.macro_recall, 1.0);
    EXPECT_THROW(standard_metrics(PredictionSet{}), ValidationError);
}

TEST(Metrics, InvalidSetsRejected) {
    auto dup = hand_set();
    dup.items[1].id = dup.items[0].id;
    EXPECT_THROW(build_report(dup, std::nullopt, {}), ValidationError);
    auto out_of_scheme = hand_set();
    out_of_scheme.items[0].predicted = Label::spam;
    EXPECT_THROW(build_report(out_of_scheme, std::nullopt, {}), ValidationError);
}

TEST(Metrics, PropertyMatchesBruteForceOracle) {
    Rng rng(73);
    for (int trial = 0; trial < 300; ++trial) {
        const Scheme s = rng.bernoulli(0.5) ? Scheme::four_class : Scheme::two_class;
        const auto p = oracle::random_predictions(rng, s, 1 + rng.below(120));
        const std::string err = oracle::check_report(p);
        ASSERT_EQ(err, "") << "trial " << trial;
    }
}

TEST(Metrics, ConfusionSubgroupsSumToOverall) {
    Rng rng(79);
    for (int trial = 0; trial < 50; ++trial) {
        auto p = oracle::random_predictions(rng, Scheme::four_class, 2 + rng.below(50));
        p.items[0].dialect = Dialect::aae;
        p.items[1].dialect = Dialect::wae;
        ConfusionMatrix sum = confusion(p, Dialect::aae);
        sum += confusion(p, Dialect::wae);
        EXPECT_EQ(sum, confusion(p));
        EXPECT_EQ(sum.total(), p.items.size());
    }
}

TEST(Report, JsonKeyOrderAndNulls) {
    const auto only_aae = make_set(Scheme::two_class, {{Label::normal, Label::normal, Dialect::aae}});
    const std::string j = to_json(build_report(only_aae, std::nullopt, {{"model", "m"}, {"seed", "3"}}));
    std::size_t last = 0;
    for (const char* key : {"\"format\"", "\"z_convention\"", "\"metadata\"", "\"scheme\"", "\"labels\"",
                            "\"examples\"", "\"standard\"", "\"confusion\"", "\"fairness\"", "\"summary\"",
                            "\"probe\""}) {
        const auto at = j.find(key);
        ASSERT_NE(at, std::string::npos) << key;
        EXPECT_GT(at, last) << key;
        last = at;
    }
    EXPECT_NE(j.find("\"report-v1\""), std::string::npos);
    EXPECT_NE(j.find("\"mean_abs_parity_gap\": null"), std::string::npos) << j;
    EXPECT_NE(j.find("\"WAE\": null"), std::string::npos) << j;
    EXPECT_LT(j.find("\"model\""), j.find("\"seed\""));
}

TEST(Report, JsonRoundTrip) {
    Rng rng(83);
    for (int trial = 0; trial < 30; ++trial) {
        const Scheme s = trial % 2 ? Scheme::four_class : Scheme::two_class;
        const auto p = oracle::random_predictions(rng, s, 1 + rng.below(80));
        std::optional<ProbeResult> probe;
        if (trial % 3 == 0) {
            probe = ProbeResult{0.75, 0.6, {0.5, std::nullopt, 0.25, 4}, {1.0 / 3.0, 0.1, 0.2, 6}, 10};
        }
        const auto report = build_report(p, probe, {{"trial", std::to_string(trial)}});
        const std::string j = to_json(report);
        const auto back = report_from_json(j);
        EXPECT_EQ(to_json(back), j);
        EXPECT_EQ(back.overall, report.overall);
        EXPECT_EQ(back.metadata, report.metadata);
        EXPECT_EQ(back.standard.accuracy, report.standard.accuracy);
    }
    EXPECT_THROW(report_from_json("{\"format\":\"report-v0\"}"), ValidationError);
    EXPECT_THROW(report_from_json("]"), ValidationError);
}

TEST(Compare, DeltasDirectionsAndCsv) {
    const auto a = build_report(hand_set(), std::nullopt, {});
    auto better = hand_set();
    better.items[1].predicted = Label::normal;  // removes the AAE false positive
    const auto b = build_report(better, std::nullopt, {});
    const auto rows = compare_reports(a, b);
    auto find = [&](const std::string& name) {
        for (const auto& r : rows) {
            if (r.metric == name) return r;
        }
        ADD_FAILURE() << "missing " << name;
        return MetricDelta{};
    };
    const auto acc = find("accuracy");
    EXPECT_DOUBLE_EQ(*acc.delta, 0.2);
    EXPECT_TRUE(*acc.improved);
    const auto fpr = find("fpr.abusive.AAE");
    EXPECT_DOUBLE_EQ(*fpr.delta, -0.5);
    EXPECT_TRUE(*fpr.improved);
    const auto pg = find("parity_gap.abusive");
    EXPECT_TRUE(*pg.improved);
    const auto probe = find("probe.accuracy");
    EXPECT_FALSE(probe.delta.has_value());
    EXPECT_FALSE(probe.improved.has_value());

    std::istringstream csv(compare_csv(rows));
    std::string line;
    std::getline(csv, line);
    EXPECT_EQ(line, "metric,model_a,model_b,delta,improved");
    std::getline(csv, line);
    EXPECT_EQ(line.rfind("accuracy,0.6,0.8,", 0), 0u) << line;
    EXPECT_EQ(line.substr(line.size() - 4), ",yes");

    const auto four = build_report(make_set(Scheme::four_class, {{Label::spam, Label::spam, Dialect::aae}}),
                                   std::nullopt, {});
    EXPECT_THROW(compare_reports(a, four), ValidationError);
}
