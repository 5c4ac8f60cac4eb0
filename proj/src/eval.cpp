// SPDX-License-Identifier: Apache-2.0
#include "debias/eval.hpp"

#include <cmath>
#include <unordered_set>

#include <json.hpp>

#include "debias/csv.hpp"
#include "debias/error.hpp"

namespace debias::eval {

using ojson = nlohmann::ordered_json;

void PredictionSet::validate() const {
    std::unordered_set<std::string> seen;
    for (const auto& p : items) {
        if (!seen.insert(p.id).second) throw ValidationError("duplicate prediction id '" + p.id + "'");
        if (!in_scheme(p.gold, scheme) || !in_scheme(p.predicted, scheme)) {
            throw ValidationError("prediction '" + p.id + "' uses a label outside the " +
                                  std::string(to_string(scheme)) + " scheme");
        }
    }
}

ConfusionMatrix::ConfusionMatrix(Scheme scheme)
    : scheme_(scheme), n_(class_count(scheme)), counts_(n_ * n_, 0) {}

std::size_t ConfusionMatrix::total() const {
    std::size_t n = 0;
    for (auto c : counts_) n += c;
    return n;
}

ConfusionMatrix& ConfusionMatrix::operator+=(const ConfusionMatrix& other) {
    if (other.scheme_ != scheme_) throw ValidationError("cannot add confusion matrices of different schemes");
    for (std::size_t i = 0; i < counts_.size(); ++i) counts_[i] += other.counts_[i];
    return *this;
}

ConfusionMatrix confusion(const PredictionSet& preds, std::optional<Dialect> subgroup) {
    ConfusionMatrix cm(preds.scheme);
    for (const auto& p : preds.items) {
        if (subgroup && p.dialect != *subgroup) continue;
        ++cm.at(class_index(p.gold, preds.scheme), class_index(p.predicted, preds.scheme));
    }
    if (cm.total() == 0) {
        throw ValidationError(subgroup ? "no predictions in subgroup " + std::string(to_string(*subgroup))
                                       : std::string("no predictions to score"));
    }
    return cm;
}

namespace {

std::optional<double> ratio(std::size_t num, std::size_t den) {
    if (den == 0) return std::nullopt;
    return static_cast<double>(num) / static_cast<double>(den);
}

std::optional<double> difference(std::optional<double> a, std::optional<double> b) {
    if (!a || !b) return std::nullopt;
    return *a - *b;
}

}  // namespace

std::optional<double> per_class_fpr(const ConfusionMatrix& cm, Label label) {
    const std::size_t y = class_index(label, cm.scheme());
    std::size_t negatives = 0, false_pos = 0;
    for (std::size_t g = 0; g < cm.size(); ++g) {
        if (g == y) continue;
        for (std::size_t p = 0; p < cm.size(); ++p) negatives += cm.at(g, p);
        false_pos += cm.at(g, y);
    }
    return ratio(false_pos, negatives);
}

std::optional<double> prob_true(const PredictionSet& preds, Label y, Dialect z) {
    std::size_t hits = 0, group = 0;
    for (const auto& p : preds.items) {
        if (p.dialect != z) continue;
        ++group;
        hits += p.predicted == y;
    }
    return ratio(hits, group);
}

std::optional<double> prob_correct(const PredictionSet& preds, Label y, Dialect z) {
    std::size_t hits = 0, group = 0;
    for (const auto& p : preds.items) {
        if (p.dialect != z || p.gold != y) continue;
        ++group;
        hits += p.predicted == y;
    }
    return ratio(hits, group);
}

std::optional<double> parity_gap(const PredictionSet& preds, Label y) {
    return difference(prob_true(preds, y, Dialect::aae), prob_true(preds, y, Dialect::wae));
}

std::optional<double> equality_gap(const PredictionSet& preds, Label y) {
    return difference(prob_correct(preds, y, Dialect::aae), prob_correct(preds, y, Dialect::wae));
}

StandardMetrics standard_metrics(const PredictionSet& preds) {
    if (preds.items.empty()) throw ValidationError("standard metrics need at least one prediction");
    const ConfusionMatrix cm = confusion(preds);
    const std::size_t n = cm.size();
    StandardMetrics m;
    std::size_t correct = 0;
    for (std::size_t c = 0; c < n; ++c) correct += cm.at(c, c);
    m.accuracy = static_cast<double>(correct) / static_cast<double>(cm.total());

    double sum_p = 0, sum_r = 0, sum_f = 0;
    std::size_t n_p = 0, n_r = 0, n_f = 0;
    for (std::size_t c = 0; c < n; ++c) {
        std::size_t predicted = 0, gold = 0;
        for (std::size_t k = 0; k < n; ++k) {
            predicted += cm.at(k, c);
            gold += cm.at(c, k);
        }
        const std::size_t tp = cm.at(c, c);
        ClassMetrics cls;
        cls.support = gold;
        cls.precision = ratio(tp, predicted);
        cls.recall = ratio(tp, gold);
        cls.f1 = ratio(2 * tp, 2 * tp + (predicted - tp) + (gold - tp));
        if (gold > 0) {
            if (cls.precision) sum_p += *cls.precision, ++n_p;
            if (cls.recall) sum_r += *cls.recall, ++n_r;
            if (cls.f1) sum_f += *cls.f1, ++n_f;
        }
        m.per_class.push_back(cls);
    }
    if (n_p) m.macro_precision = sum_p / static_cast<double>(n_p);
    if (n_r) m.macro_recall = sum_r / static_cast<double>(n_r);
    if (n_f) m.macro_f1 = sum_f / static_cast<double>(n_f);
    return m;
}

namespace {

std::optional<double> mean_abs(const std::vector<ClassFairness>& rows, std::optional<double> ClassFairness::*field) {
    double total = 0.0;
    std::size_t n = 0;
    for (const auto& r : rows) {
        if (const auto& v = r.*field) {
            total += std::abs(*v);
            ++n;
        }
    }
    if (n == 0) return std::nullopt;
    return total / static_cast<double>(n);
}

}  // namespace

std::optional<double> FairnessReport::mean_abs_parity_gap() const { return mean_abs(per_class, &ClassFairness::parity_gap); }

std::optional<double> FairnessReport::mean_abs_equality_gap() const {
    return mean_abs(per_class, &ClassFairness::equality_gap);
}

FairnessReport build_report(const PredictionSet& preds, std::optional<ProbeResult> probe,
                            std::vector<std::pair<std::string, std::string>> metadata) {
    preds.validate();
    FairnessReport r;
    r.metadata = std::move(metadata);
    r.scheme = preds.scheme;
    r.examples = preds.items.size();
    r.standard = standard_metrics(preds);
    r.overall = confusion(preds);
    bool has[2] = {false, false};
    for (const auto& p : preds.items) has[dialect_index(p.dialect)] = true;
    if (has[0]) r.aae = confusion(preds, Dialect::aae);
    if (has[1]) r.wae = confusion(preds, Dialect::wae);
    for (Label y : labels_for(preds.scheme)) {
        ClassFairness f;
        f.parity_gap = parity_gap(preds, y);
        f.equality_gap = equality_gap(preds, y);
        if (r.aae) f.aae.fpr = per_class_fpr(*r.aae, y);
        if (r.wae) f.wae.fpr = per_class_fpr(*r.wae, y);
        f.aae.prob_true = prob_true(preds, y, Dialect::aae);
        f.wae.prob_true = prob_true(preds, y, Dialect::wae);
        f.aae.prob_correct = prob_correct(preds, y, Dialect::aae);
        f.wae.prob_correct = prob_correct(preds, y, Dialect::wae);
        r.per_class.push_back(f);
    }
    r.probe = std::move(probe);
    return r;
}

namespace {

ojson opt(std::optional<double> v) { return v ? ojson(*v) : ojson(nullptr); }

std::optional<double> read_opt(const ojson& j, const char* key) {
    const auto& v = j.at(key);
    if (v.is_null()) return std::nullopt;
    return v.get<double>();
}

ojson matrix_json(const std::optional<ConfusionMatrix>& cm) {
    if (!cm) return nullptr;
    ojson rows = ojson::array();
    for (std::size_t g = 0; g < cm->size(); ++g) {
        ojson row = ojson::array();
        for (std::size_t p = 0; p < cm->size(); ++p) row.push_back(cm->at(g, p));
        rows.push_back(row);
    }
    return rows;
}

std::optional<ConfusionMatrix> read_matrix(const ojson& j, Scheme scheme) {
    if (j.is_null()) return std::nullopt;
    ConfusionMatrix cm(scheme);
    if (j.size() != cm.size()) throw ValidationError("report: confusion matrix has the wrong size");
    for (std::size_t g = 0; g < cm.size(); ++g) {
        if (j[g].size() != cm.size()) throw ValidationError("report: confusion matrix has the wrong size");
        for (std::size_t p = 0; p < cm.size(); ++p) cm.at(g, p) = j[g][p].get<std::size_t>();
    }
    return cm;
}

ojson dialect_metrics_json(const DialectMetrics& m) {
    ojson j;
    j["precision"] = opt(m.precision);
    j["recall"] = opt(m.recall);
    j["f1"] = opt(m.f1);
    j["support"] = m.support;
    return j;
}

DialectMetrics read_dialect_metrics(const ojson& j) {
    return DialectMetrics{read_opt(j, "precision"), read_opt(j, "recall"), read_opt(j, "f1"),
                          j.at("support").get<std::size_t>()};
}

ojson subgroup_json(const SubgroupClassMetrics& m) {
    ojson j;
    j["fpr"] = opt(m.fpr);
    j["prob_true"] = opt(m.prob_true);
    j["prob_correct"] = opt(m.prob_correct);
    return j;
}

SubgroupClassMetrics read_subgroup(const ojson& j) {
    return SubgroupClassMetrics{read_opt(j, "fpr"), read_opt(j, "prob_true"), read_opt(j, "prob_correct")};
}

}  // namespace

std::string to_json(const FairnessReport& r) {
    ojson j;
    j["format"] = "report-v1";
    j["z_convention"] = kZConvention;
    ojson meta = ojson::object();
    for (const auto& [k, v] : r.metadata) meta[k] = v;
    j["metadata"] = meta;
    j["scheme"] = to_string(r.scheme);
    ojson labels = ojson::array();
    for (Label l : labels_for(r.scheme)) labels.push_back(to_string(l));
    j["labels"] = labels;
    j["examples"] = r.examples;

    ojson standard;
    standard["accuracy"] = r.standard.accuracy;
    standard["macro_precision"] = opt(r.standard.macro_precision);
    standard["macro_recall"] = opt(r.standard.macro_recall);
    standard["macro_f1"] = opt(r.standard.macro_f1);
    ojson per_class = ojson::object();
    for (std::size_t c = 0; c < r.standard.per_class.size(); ++c) {
        const auto& m = r.standard.per_class[c];
        ojson cls;
        cls["precision"] = opt(m.precision);
        cls["recall"] = opt(m.recall);
        cls["f1"] = opt(m.f1);
        cls["support"] = m.support;
        per_class[std::string(to_string(label_at(c, r.scheme)))] = cls;
    }
    standard["per_class"] = per_class;
    j["standard"] = standard;

    ojson confusion_j;
    confusion_j["overall"] = matrix_json(r.overall);
    confusion_j["AAE"] = matrix_json(r.aae);
    confusion_j["WAE"] = matrix_json(r.wae);
    j["confusion"] = confusion_j;

    ojson fairness = ojson::object();
    for (std::size_t c = 0; c < r.per_class.size(); ++c) {
        const auto& f = r.per_class[c];
        ojson cls;
        cls["parity_gap"] = opt(f.parity_gap);
        cls["equality_gap"] = opt(f.equality_gap);
        cls["AAE"] = subgroup_json(f.aae);
        cls["WAE"] = subgroup_json(f.wae);
        fairness[std::string(to_string(label_at(c, r.scheme)))] = cls;
    }
    j["fairness"] = fairness;

    ojson summary;
    summary["mean_abs_parity_gap"] = opt(r.mean_abs_parity_gap());
    summary["mean_abs_equality_gap"] = opt(r.mean_abs_equality_gap());
    j["summary"] = summary;

    if (r.probe) {
        ojson p;
        p["accuracy"] = r.probe->accuracy;
        p["majority_rate"] = r.probe->majority_rate;
        p["examples"] = r.probe->examples;
        p["AAE"] = dialect_metrics_json(r.probe->aae);
        p["WAE"] = dialect_metrics_json(r.probe->wae);
        j["probe"] = p;
    } else {
        j["probe"] = nullptr;
    }
    return j.dump(2) + "\n";
}

FairnessReport report_from_json(std::string_view text) {
    ojson j;
    try {
        j = ojson::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw ValidationError(std::string("report: invalid JSON: ") + e.what());
    }
    try {
        if (j.at("format").get<std::string>() != "report-v1") throw ValidationError("report: expected format report-v1");
        FairnessReport r;
        const auto scheme = parse_scheme(j.at("scheme").get<std::string>());
        if (!scheme) throw ValidationError("report: unknown scheme");
        r.scheme = *scheme;
        for (const auto& [k, v] : j.at("metadata").items()) r.metadata.emplace_back(k, v.get<std::string>());
        r.examples = j.at("examples").get<std::size_t>();
        const auto& s = j.at("standard");
        r.standard.accuracy = s.at("accuracy").get<double>();
        r.standard.macro_precision = read_opt(s, "macro_precision");
        r.standard.macro_recall = read_opt(s, "macro_recall");
        r.standard.macro_f1 = read_opt(s, "macro_f1");
        for (Label l : labels_for(r.scheme)) {
            const auto& c = s.at("per_class").at(std::string(to_string(l)));
            r.standard.per_class.push_back(ClassMetrics{read_opt(c, "precision"), read_opt(c, "recall"),
                                                        read_opt(c, "f1"), c.at("support").get<std::size_t>()});
            const auto& f = j.at("fairness").at(std::string(to_string(l)));
            r.per_class.push_back(ClassFairness{read_opt(f, "parity_gap"), read_opt(f, "equality_gap"),
                                                read_subgroup(f.at("AAE")), read_subgroup(f.at("WAE"))});
        }
        const auto& cm = j.at("confusion");
        auto overall = read_matrix(cm.at("overall"), r.scheme);
        if (!overall) throw ValidationError("report: missing overall confusion matrix");
        r.overall = *overall;
        r.aae = read_matrix(cm.at("AAE"), r.scheme);
        r.wae = read_matrix(cm.at("WAE"), r.scheme);
        if (const auto& p = j.at("probe"); !p.is_null()) {
            ProbeResult probe;
            probe.accuracy = p.at("accuracy").get<double>();
            probe.majority_rate = p.at("majority_rate").get<double>();
            probe.examples = p.at("examples").get<std::size_t>();
            probe.aae = read_dialect_metrics(p.at("AAE"));
            probe.wae = read_dialect_metrics(p.at("WAE"));
            r.probe = probe;
        }
        return r;
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(std::string("report: ") + e.what());
    }
}

namespace {

struct Metric {
    std::string name;
    Direction direction;
    std::optional<double> value;
};

std::vector<Metric> flatten(const FairnessReport& r) {
    std::vector<Metric> out;
    out.push_back({"accuracy", Direction::higher_better, r.standard.accuracy});
    out.push_back({"macro_precision", Direction::higher_better, r.standard.macro_precision});
    out.push_back({"macro_recall", Direction::higher_better, r.standard.macro_recall});
    out.push_back({"macro_f1", Direction::higher_better, r.standard.macro_f1});
    const auto labels = labels_for(r.scheme);
    for (std::size_t c = 0; c < labels.size(); ++c) {
        const std::string l(to_string(labels[c]));
        const auto& m = r.standard.per_class[c];
        out.push_back({"precision." + l, Direction::higher_better, m.precision});
        out.push_back({"recall." + l, Direction::higher_better, m.recall});
        out.push_back({"f1." + l, Direction::higher_better, m.f1});
    }
    for (std::size_t c = 0; c < labels.size(); ++c) {
        const std::string l(to_string(labels[c]));
        const auto& f = r.per_class[c];
        out.push_back({"fpr." + l + ".AAE", Direction::lower_better, f.aae.fpr});
        out.push_back({"fpr." + l + ".WAE", Direction::lower_better, f.wae.fpr});
        out.push_back({"prob_true." + l + ".AAE", Direction::none, f.aae.prob_true});
        out.push_back({"prob_true." + l + ".WAE", Direction::none, f.wae.prob_true});
        out.push_back({"prob_correct." + l + ".AAE", Direction::higher_better, f.aae.prob_correct});
        out.push_back({"prob_correct." + l + ".WAE", Direction::higher_better, f.wae.prob_correct});
        out.push_back({"parity_gap." + l, Direction::closer_to_zero, f.parity_gap});
        out.push_back({"equality_gap." + l, Direction::closer_to_zero, f.equality_gap});
    }
    out.push_back({"mean_abs_parity_gap", Direction::lower_better, r.mean_abs_parity_gap()});
    out.push_back({"mean_abs_equality_gap", Direction::lower_better, r.mean_abs_equality_gap()});
    const auto probe = [&](auto get) -> std::optional<double> {
        if (!r.probe) return std::nullopt;
        return get(*r.probe);
    };
    out.push_back({"probe.accuracy", Direction::lower_better, probe([](const ProbeResult& p) -> std::optional<double> { return p.accuracy; })});
    out.push_back({"probe.f1.AAE", Direction::none, probe([](const ProbeResult& p) { return p.aae.f1; })});
    out.push_back({"probe.f1.WAE", Direction::none, probe([](const ProbeResult& p) { return p.wae.f1; })});
    return out;
}

}  // namespace

std::vector<MetricDelta> compare_reports(const FairnessReport& a, const FairnessReport& b) {
    if (a.scheme != b.scheme) throw ValidationError("cannot compare reports with different label schemes");
    const auto fa = flatten(a), fb = flatten(b);
    std::vector<MetricDelta> rows;
    for (std::size_t i = 0; i < fa.size(); ++i) {
        MetricDelta d{fa[i].name, fa[i].value, fb[i].value, std::nullopt, std::nullopt};
        if (d.a && d.b) {
            d.delta = *d.b - *d.a;
            switch (fa[i].direction) {
                case Direction::higher_better: d.improved = *d.b > *d.a; break;
                case Direction::lower_better: d.improved = *d.b < *d.a; break;
                case Direction::closer_to_zero: d.improved = std::abs(*d.b) < std::abs(*d.a); break;
                case Direction::none: break;
            }
        }
        rows.push_back(std::move(d));
    }
    return rows;
}

std::string compare_csv(const std::vector<MetricDelta>& rows) {
    std::string out = "metric,model_a,model_b,delta,improved\n";
    auto num = [](std::optional<double> v) { return v ? format_double(*v) : std::string(); };
    for (const auto& r : rows) {
        const std::string fields[] = {r.metric, num(r.a), num(r.b), num(r.delta),
                                      r.improved ? (*r.improved ? "yes" : "no") : ""};
        out += csv::format_row(fields);
    }
    return out;
}

}  // namespace debias::eval
