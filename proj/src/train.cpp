// SPDX-License-Identifier: Apache-2.0
#include "debias/train.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "debias/csv.hpp"
#include "debias/error.hpp"
#include "debias/rng.hpp"

namespace debias::train {

using ad::Tape;
using ad::Tensor;
using model::Component;
using model::ModelBundle;

std::string_view to_string(Technique t) {
    switch (t) {
        case Technique::baseline: return "baseline";
        case Technique::alternating: return "alternating";
        case Technique::gradient_negation: return "gradient-negation";
    }
    return "?";
}

std::optional<Technique> parse_technique(std::string_view text) {
    for (auto t : {Technique::baseline, Technique::alternating, Technique::gradient_negation}) {
        if (to_string(t) == text) return t;
    }
    return std::nullopt;
}

void TrainConfig::validate() const {
    if (!(alpha > 0.0 && alpha <= 1.0)) throw ValidationError("alpha must be in (0, 1]");
    if (!(lambda >= 0.0 && lambda <= 2.0)) throw ValidationError("lambda must be in [0, 2]");
    if (technique == Technique::alternating && rounds < 1) throw ValidationError("rounds must be at least 1");
    if (epochs < 1 || epochs_per_phase < 1) throw ValidationError("epoch counts must be at least 1");
    if (batch_size < 1) throw ValidationError("batch_size must be at least 1");
    if (!(learning_rate > 0.0)) throw ValidationError("learning_rate must be positive");
    if (probe_epochs < 1 || !(probe_learning_rate > 0.0)) throw ValidationError("probe settings must be positive");
}

Examples make_examples(const corpus::Dataset& d, const text::Vocabulary& vocab, std::size_t max_len) {
    Examples ex;
    ex.scheme = d.scheme;
    ex.ids.reserve(d.size());
    ex.inputs.reserve(d.size());
    for (const auto& r : d.records) {
        ex.ids.push_back(r.id);
        ex.inputs.push_back(text::encode_text(r.text, vocab, max_len));
        ex.targets.push_back(class_index(r.label, d.scheme));
        ex.dialects.push_back(dialect_index(r.dialect));
    }
    return ex;
}

text::Vocabulary build_vocabulary(const corpus::Dataset& train, std::size_t max_size, std::size_t min_frequency) {
    std::vector<std::vector<std::string>> docs;
    docs.reserve(train.size());
    for (const auto& r : train.records) docs.push_back(text::tokenize(text::preprocess(r.text)));
    return text::Vocabulary::build(docs, max_size, min_frequency);
}

std::string TrainTrace::to_csv() const {
    std::string out = "phase,round,epoch,cls_loss,adv_loss,cls_acc,adv_acc\n";
    for (const auto& p : points) {
        const std::string fields[] = {p.phase,
                                      std::to_string(p.round),
                                      std::to_string(p.epoch),
                                      format_double(p.cls_loss),
                                      format_double(p.adv_loss),
                                      format_double(p.cls_acc),
                                      format_double(p.adv_acc)};
        out += csv::format_row(fields);
    }
    return out;
}

namespace {

struct Batch {
    std::vector<text::EncodedText> inputs;
    std::vector<std::size_t> targets;
    std::vector<std::size_t> dialects;
};

Batch slice(const Examples& data, std::span<const std::size_t> rows) {
    Batch b;
    b.inputs.reserve(rows.size());
    for (auto i : rows) {
        b.inputs.push_back(data.inputs[i]);
        b.targets.push_back(data.targets[i]);
        b.dialects.push_back(data.dialects[i]);
    }
    return b;
}

/// Representations with no history on any tape the caller backpropagates through.
Tensor detached_reps(const ModelBundle& bundle, std::span<const text::EncodedText> inputs) {
    Tape scratch;
    Tensor reps = model::encode_batch(bundle, scratch, inputs);
    return Tensor::from(reps.shape(), std::vector<double>(reps.values().begin(), reps.values().end()));
}

/// Shared state of one training run: optimizer, epoch counter for the
/// shuffle seeds, and the trace being written.
class Run {
public:
    Run(ModelBundle& bundle, const Examples& data, const TrainConfig& cfg, const Examples* monitor)
        : bundle_(bundle),
          data_(data),
          cfg_(cfg),
          monitor_(monitor && monitor->size() ? *monitor : data),
          optimizer_(cfg.optimizer, cfg.learning_rate),
          saved_{bundle.frozen(Component::encoder), bundle.frozen(Component::classifier),
                 bundle.frozen(Component::adversary)} {
        cfg.validate();
        if (data.size() == 0) throw ValidationError("training data is empty");
        if (data.scheme != cfg.label_scheme) throw ValidationError("training data scheme does not match label_scheme");
        if (class_count(data.scheme) != bundle.n_classes) {
            throw ValidationError("model has " + std::to_string(bundle.n_classes) + " classes but data has " +
                                  std::to_string(class_count(data.scheme)));
        }
    }

    ~Run() {
        bundle_.set_frozen({Component::encoder}, saved_[0]);
        bundle_.set_frozen({Component::classifier}, saved_[1]);
        bundle_.set_frozen({Component::adversary}, saved_[2]);
    }

    Run(const Run&) = delete;
    Run& operator=(const Run&) = delete;

    void only_train(std::initializer_list<Component> active) {
        bundle_.set_frozen({Component::encoder, Component::classifier, Component::adversary}, true);
        bundle_.set_frozen(active, false);
    }

    /// One epoch: shuffle with seed + epoch index, then one optimizer step per batch.
    template <typename Objective>
    void epoch(const std::string& phase, std::size_t round, std::size_t epoch_in_phase, Objective objective) {
        std::vector<std::size_t> order(data_.size());
        std::iota(order.begin(), order.end(), 0);
        Rng rng(cfg_.seed + epoch_counter_++);
        rng.shuffle(std::span(order));
        for (std::size_t start = 0; start < order.size(); start += cfg_.batch_size) {
            const auto rows = std::span(order).subspan(start, std::min(cfg_.batch_size, order.size() - start));
            const Batch batch = slice(data_, rows);
            bundle_.zero_grad();
            Tape tape;
            Tensor loss = objective(tape, batch);
            if (!std::isfinite(loss.item())) {
                throw std::runtime_error("training diverged: non-finite loss in phase " + phase + ", epoch " +
                                         std::to_string(epoch_in_phase));
            }
            tape.backward(loss);
            auto params = bundle_.trainable_parameters();
            optimizer_.step(params);
        }
        bundle_.zero_grad();
        const HeadScores s = score(bundle_, monitor_);
        trace_.points.push_back(TracePoint{phase, round, epoch_in_phase, s.cls_loss, s.adv_loss, s.cls_acc, s.adv_acc});
        if (cfg_.on_epoch) cfg_.on_epoch(trace_.points.back(), bundle_);
    }

    TrainTrace finish() { return std::move(trace_); }

private:
    ModelBundle& bundle_;
    const Examples& data_;
    const TrainConfig& cfg_;
    const Examples& monitor_;
    ad::Optimizer optimizer_;
    std::array<bool, 3> saved_;
    std::size_t epoch_counter_ = 0;
    TrainTrace trace_;
};

}  // namespace

Tensor classifier_objective(const ModelBundle& bundle, Tape& tape, std::span<const text::EncodedText> inputs,
                            std::span<const std::size_t> targets) {
    Tensor reps = model::encode_batch(bundle, tape, inputs);
    return ad::softmax_cross_entropy(tape, model::classify(bundle, tape, reps), targets);
}

Tensor debias_objective(const ModelBundle& bundle, Tape& tape, std::span<const text::EncodedText> inputs,
                        std::span<const std::size_t> targets, double alpha) {
    Tensor reps = model::encode_batch(bundle, tape, inputs);
    Tensor cls = ad::softmax_cross_entropy(tape, model::classify(bundle, tape, reps), targets);
    const auto uniform = ad::uniform_targets(inputs.size(), 2);
    Tensor adv = ad::softmax_cross_entropy(tape, model::adversary_predict(bundle, tape, reps), uniform);
    return ad::add(tape, ad::scale(tape, cls, alpha), ad::scale(tape, adv, 1.0 - alpha));
}

Tensor negation_objective(const ModelBundle& bundle, Tape& tape, std::span<const text::EncodedText> inputs,
                          std::span<const std::size_t> targets, std::span<const std::size_t> dialects,
                          double lambda) {
    Tensor reps = model::encode_batch(bundle, tape, inputs);
    Tensor cls = ad::softmax_cross_entropy(tape, model::classify(bundle, tape, reps), targets);
    Tensor reversed = ad::gradient_reversal(tape, reps, lambda);
    Tensor adv = ad::softmax_cross_entropy(tape, model::adversary_predict(bundle, tape, reversed), dialects);
    return ad::add(tape, cls, adv);
}

HeadScores score(const ModelBundle& bundle, const Examples& data, std::size_t batch_size) {
    HeadScores s;
    if (data.size() == 0) return s;
    double cls_loss = 0, adv_loss = 0;
    std::size_t cls_hits = 0, adv_hits = 0;
    for (std::size_t start = 0; start < data.size(); start += batch_size) {
        const std::size_t n = std::min(batch_size, data.size() - start);
        Tape tape;
        const auto inputs = std::span(data.inputs).subspan(start, n);
        const auto targets = std::span(data.targets).subspan(start, n);
        const auto dialects = std::span(data.dialects).subspan(start, n);
        Tensor reps = model::encode_batch(bundle, tape, inputs);
        Tensor cls_logits = model::classify(bundle, tape, reps);
        Tensor adv_logits = model::adversary_predict(bundle, tape, reps);
        cls_loss += ad::softmax_cross_entropy(tape, cls_logits, targets).item() * static_cast<double>(n);
        adv_loss += ad::softmax_cross_entropy(tape, adv_logits, dialects).item() * static_cast<double>(n);
        const auto cls_pred = model::argmax_rows(cls_logits);
        const auto adv_pred = model::argmax_rows(adv_logits);
        for (std::size_t i = 0; i < n; ++i) {
            cls_hits += cls_pred[i] == targets[i];
            adv_hits += adv_pred[i] == dialects[i];
        }
    }
    const auto total = static_cast<double>(data.size());
    s.cls_loss = cls_loss / total;
    s.adv_loss = adv_loss / total;
    s.cls_acc = static_cast<double>(cls_hits) / total;
    s.adv_acc = static_cast<double>(adv_hits) / total;
    return s;
}

TrainTrace train_baseline(ModelBundle& bundle, const Examples& data, const TrainConfig& cfg, const Examples* monitor) {
    Run run(bundle, data, cfg, monitor);
    run.only_train({Component::encoder, Component::classifier});
    for (std::size_t e = 1; e <= cfg.epochs; ++e) {
        run.epoch("baseline", 0, e, [&](Tape& tape, const Batch& b) {
            return classifier_objective(bundle, tape, b.inputs, b.targets);
        });
    }
    return run.finish();
}

TrainTrace train_alternating(ModelBundle& bundle, const Examples& data, const TrainConfig& cfg, const Examples* monitor) {
    Run run(bundle, data, cfg, monitor);
    if (cfg.rounds < 1) throw ValidationError("rounds must be at least 1");

    run.only_train({Component::encoder, Component::classifier});
    for (std::size_t e = 1; e <= cfg.epochs; ++e) {
        run.epoch("classifier", 0, e, [&](Tape& tape, const Batch& b) {
            return classifier_objective(bundle, tape, b.inputs, b.targets);
        });
    }

    for (std::size_t round = 1; round <= cfg.rounds; ++round) {
        if (cfg.reset_adversary) {
            bundle.adversary = model::init_dense(bundle.config.representation_dim, 2, cfg.seed + 7919 * round);
        }
        run.only_train({Component::adversary});
        for (std::size_t e = 1; e <= cfg.epochs_per_phase; ++e) {
            run.epoch("adversary", round, e, [&](Tape& tape, const Batch& b) {
                Tensor reps = detached_reps(bundle, b.inputs);
                return ad::softmax_cross_entropy(tape, model::adversary_predict(bundle, tape, reps), b.dialects);
            });
        }

        run.only_train({Component::encoder, Component::classifier});
        for (std::size_t e = 1; e <= cfg.epochs_per_phase; ++e) {
            run.epoch("debias", round, e, [&](Tape& tape, const Batch& b) {
                return debias_objective(bundle, tape, b.inputs, b.targets, cfg.alpha);
            });
        }
    }
    return run.finish();
}

TrainTrace train_gradient_negation(ModelBundle& bundle, const Examples& data, const TrainConfig& cfg,
                                   const Examples* monitor) {
    Run run(bundle, data, cfg, monitor);
    run.only_train({Component::encoder, Component::classifier, Component::adversary});
    for (std::size_t e = 1; e <= cfg.epochs; ++e) {
        run.epoch("joint", 0, e, [&](Tape& tape, const Batch& b) {
            return negation_objective(bundle, tape, b.inputs, b.targets, b.dialects, cfg.lambda);
        });
    }
    return run.finish();
}

TrainTrace train(ModelBundle& bundle, const Examples& data, const TrainConfig& cfg, const Examples* monitor) {
    switch (cfg.technique) {
        case Technique::baseline: return train_baseline(bundle, data, cfg, monitor);
        case Technique::alternating: return train_alternating(bundle, data, cfg, monitor);
        case Technique::gradient_negation: return train_gradient_negation(bundle, data, cfg, monitor);
    }
    throw ValidationError("unknown technique");
}

namespace {

Tensor representations(const ModelBundle& bundle, const Examples& data) {
    const std::size_t width = bundle.config.representation_dim;
    std::vector<double> values;
    values.reserve(data.size() * width);
    for (std::size_t start = 0; start < data.size(); start += 256) {
        const std::size_t n = std::min<std::size_t>(256, data.size() - start);
        Tensor reps = detached_reps(bundle, std::span(data.inputs).subspan(start, n));
        values.insert(values.end(), reps.values().begin(), reps.values().end());
    }
    return Tensor::from({data.size(), width}, std::move(values));
}

// Per-feature z-scoring with training statistics, so the probe sees the
// information in the representation regardless of its scale.
void standardize(Tensor& x, std::span<const double> mean, std::span<const double> inv_std) {
    const std::size_t width = mean.size();
    for (std::size_t i = 0; i < x.size(); ++i) x[i] = (x[i] - mean[i % width]) * inv_std[i % width];
}

eval::DialectMetrics dialect_metrics(std::size_t tp, std::size_t fp, std::size_t fn) {
    auto ratio = [](std::size_t a, std::size_t b) -> std::optional<double> {
        if (b == 0) return std::nullopt;
        return static_cast<double>(a) / static_cast<double>(b);
    };
    return eval::DialectMetrics{ratio(tp, tp + fp), ratio(tp, tp + fn), ratio(2 * tp, 2 * tp + fp + fn), tp + fn};
}

}  // namespace

eval::ProbeResult probe_dialect(const ModelBundle& bundle, const Examples& train_data, const Examples& eval_data,
                                const TrainConfig& cfg) {
    cfg.validate();
    if (train_data.size() == 0 || eval_data.size() == 0) throw ValidationError("probe needs training and evaluation data");
    const std::size_t width = bundle.config.representation_dim;

    Tensor train_x = representations(bundle, train_data);
    Tensor eval_x = representations(bundle, eval_data);
    std::vector<double> mean(width, 0.0), inv_std(width, 1.0);
    const auto n_train = static_cast<double>(train_data.size());
    for (std::size_t i = 0; i < train_x.size(); ++i) mean[i % width] += train_x[i] / n_train;
    std::vector<double> var(width, 0.0);
    for (std::size_t i = 0; i < train_x.size(); ++i) {
        const double d = train_x[i] - mean[i % width];
        var[i % width] += d * d / n_train;
    }
    for (std::size_t k = 0; k < width; ++k) inv_std[k] = var[k] > 1e-24 ? 1.0 / std::sqrt(var[k]) : 0.0;
    standardize(train_x, mean, inv_std);
    standardize(eval_x, mean, inv_std);

    model::Dense head = model::init_dense(width, 2, cfg.seed ^ 0x9E3779B97F4A7C15ULL);
    ad::Optimizer opt(ad::OptimizerKind::sgd, cfg.probe_learning_rate);
    std::vector<std::size_t> order(train_data.size());
    for (std::size_t e = 0; e < cfg.probe_epochs; ++e) {
        std::iota(order.begin(), order.end(), 0);
        Rng rng(cfg.seed + e);
        rng.shuffle(std::span(order));
        for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
            const std::size_t n = std::min(cfg.batch_size, order.size() - start);
            std::vector<double> xs;
            std::vector<std::size_t> zs;
            xs.reserve(n * width);
            for (std::size_t k = 0; k < n; ++k) {
                const std::size_t row = order[start + k];
                xs.insert(xs.end(), train_x.values().begin() + static_cast<std::ptrdiff_t>(row * width),
                          train_x.values().begin() + static_cast<std::ptrdiff_t>((row + 1) * width));
                zs.push_back(train_data.dialects[row]);
            }
            Tape tape;
            Tensor x = Tensor::from({n, width}, std::move(xs));
            Tensor loss = ad::softmax_cross_entropy(tape, model::apply(head, tape, x), zs);
            tape.backward(loss);
            std::array<Tensor, 2> params{head.weight, head.bias};
            opt.step(params);
        }
    }

    Tape tape;
    const auto pred = model::argmax_rows(model::apply(head, tape, eval_x));
    std::array<std::size_t, 2> tp{0, 0}, fp{0, 0}, fn{0, 0}, support{0, 0};
    std::size_t hits = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const std::size_t gold = eval_data.dialects[i];
        ++support[gold];
        if (pred[i] == gold) {
            ++hits;
            ++tp[gold];
        } else {
            ++fp[pred[i]];
            ++fn[gold];
        }
    }
    eval::ProbeResult r;
    r.examples = pred.size();
    r.accuracy = static_cast<double>(hits) / static_cast<double>(pred.size());
    r.majority_rate = static_cast<double>(std::max(support[0], support[1])) / static_cast<double>(pred.size());
    r.aae = dialect_metrics(tp[0], fp[0], fn[0]);
    r.wae = dialect_metrics(tp[1], fp[1], fn[1]);
    return r;
}

eval::PredictionSet predict(const ModelBundle& bundle, const Examples& data, std::size_t batch_size) {
    eval::PredictionSet preds;
    preds.scheme = data.scheme;
    preds.items.reserve(data.size());
    for (std::size_t start = 0; start < data.size(); start += batch_size) {
        const std::size_t n = std::min(batch_size, data.size() - start);
        Tape tape;
        Tensor reps = model::encode_batch(bundle, tape, std::span(data.inputs).subspan(start, n));
        const auto classes = model::argmax_rows(model::classify(bundle, tape, reps));
        for (std::size_t i = 0; i < n; ++i) {
            const std::size_t row = start + i;
            preds.items.push_back(eval::Prediction{data.ids[row], label_at(data.targets[row], data.scheme),
                                                   label_at(classes[i], data.scheme),
                                                   static_cast<Dialect>(data.dialects[row])});
        }
    }
    return preds;
}

}  // namespace debias::train
