// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "debias/labels.hpp"

namespace debias::eval {

struct Prediction {
    std::string id;
    Label gold = Label::normal;
    Label predicted = Label::normal;
    Dialect dialect = Dialect::wae;
};

struct PredictionSet {
    Scheme scheme = Scheme::four_class;
    std::vector<Prediction> items;

    /// Unique ids and every label inside the scheme.
    void validate() const;
};

/// Counts indexed [gold][predicted] in the scheme's label order.
class ConfusionMatrix {
public:
    explicit ConfusionMatrix(Scheme scheme = Scheme::four_class);

    Scheme scheme() const { return scheme_; }
    std::size_t size() const { return n_; }
    std::size_t at(std::size_t gold, std::size_t predicted) const { return counts_[gold * n_ + predicted]; }
    std::size_t& at(std::size_t gold, std::size_t predicted) { return counts_[gold * n_ + predicted]; }
    std::size_t total() const;

    ConfusionMatrix& operator+=(const ConfusionMatrix& other);
    friend bool operator==(const ConfusionMatrix&, const ConfusionMatrix&) = default;

private:
    Scheme scheme_;
    std::size_t n_;
    std::vector<std::size_t> counts_;
};

/// Confusion over all predictions or one dialect subgroup. Throws
/// ValidationError when the filtered subset is empty.
ConfusionMatrix confusion(const PredictionSet& preds, std::optional<Dialect> subgroup = std::nullopt);

/// One-vs-rest FPR; absent when no example has a gold label other than `label`.
std::optional<double> per_class_fpr(const ConfusionMatrix& cm, Label label);

/// P(pred = y | z); absent for an empty subgroup.
std::optional<double> prob_true(const PredictionSet& preds, Label y, Dialect z);
/// P(pred = y | gold = y, z), i.e. subgroup recall; absent without gold-y examples.
std::optional<double> prob_correct(const PredictionSet& preds, Label y, Dialect z);

/// Value at z=1 (AAE) minus value at z=0 (WAE); absent if either side is.
std::optional<double> parity_gap(const PredictionSet& preds, Label y);
std::optional<double> equality_gap(const PredictionSet& preds, Label y);

struct ClassMetrics {
    std::optional<double> precision;  // absent when the class is never predicted
    std::optional<double> recall;     // absent when the class never occurs in gold
    std::optional<double> f1;         // 2TP / (2TP + FP + FN), absent when that is 0/0
    std::size_t support = 0;
};

struct StandardMetrics {
    double accuracy = 0.0;
    std::vector<ClassMetrics> per_class;  // scheme label order
    /// Means over classes present in gold whose value is defined.
    std::optional<double> macro_precision;
    std::optional<double> macro_recall;
    std::optional<double> macro_f1;
};

/// Throws ValidationError on an empty prediction set.
StandardMetrics standard_metrics(const PredictionSet& preds);

struct SubgroupClassMetrics {
    std::optional<double> fpr;
    std::optional<double> prob_true;
    std::optional<double> prob_correct;
};

struct ClassFairness {
    std::optional<double> parity_gap;
    std::optional<double> equality_gap;
    SubgroupClassMetrics aae;
    SubgroupClassMetrics wae;
};

struct DialectMetrics {
    std::optional<double> precision;
    std::optional<double> recall;
    std::optional<double> f1;
    std::size_t support = 0;
};

/// Held-out performance of a dialect classifier trained on a frozen encoder.
struct ProbeResult {
    double accuracy = 0.0;
    /// Share of the most frequent dialect in the evaluation data.
    double majority_rate = 0.0;
    DialectMetrics aae;
    DialectMetrics wae;
    std::size_t examples = 0;
};

struct FairnessReport {
    /// Free-form run description (model name, technique, seed, ...).
    std::vector<std::pair<std::string, std::string>> metadata;
    Scheme scheme = Scheme::four_class;
    std::size_t examples = 0;
    StandardMetrics standard;
    ConfusionMatrix overall{Scheme::four_class};
    std::optional<ConfusionMatrix> aae;
    std::optional<ConfusionMatrix> wae;
    std::vector<ClassFairness> per_class;  // scheme label order
    std::optional<ProbeResult> probe;

    /// Mean |gap| over classes whose gap is defined.
    std::optional<double> mean_abs_parity_gap() const;
    std::optional<double> mean_abs_equality_gap() const;
};

FairnessReport build_report(const PredictionSet& preds, std::optional<ProbeResult> probe,
                            std::vector<std::pair<std::string, std::string>> metadata);

inline constexpr std::string_view kZConvention = "z=1:AAE z=0:WAE; gap = value(AAE) - value(WAE)";

/// "report-v1" JSON with a fixed key order; absent values are null.
std::string to_json(const FairnessReport& report);
FairnessReport report_from_json(std::string_view json);

enum class Direction { higher_better, lower_better, closer_to_zero, none };

struct MetricDelta {
    std::string metric;
    std::optional<double> a;
    std::optional<double> b;
    std::optional<double> delta;  // b - a
    std::optional<bool> improved;
};

/// Per-metric b - a. Gaps count as improved when |b| < |a|. Throws
/// ValidationError when the schemes differ.
std::vector<MetricDelta> compare_reports(const FairnessReport& a, const FairnessReport& b);
/// metric,model_a,model_b,delta,improved
std::string compare_csv(const std::vector<MetricDelta>& rows);

}  // namespace debias::eval
