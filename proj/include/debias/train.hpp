// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "debias/autodiff.hpp"
#include "debias/corpus.hpp"
#include "debias/eval.hpp"
#include "debias/model.hpp"
#include "debias/text.hpp"

namespace debias::train {

enum class Technique { baseline, alternating, gradient_negation };

std::string_view to_string(Technique t);
std::optional<Technique> parse_technique(std::string_view text);

struct TracePoint {
    std::string phase;
    std::size_t round = 0;
    std::size_t epoch = 0;
    double cls_loss = 0.0;
    double adv_loss = 0.0;
    double cls_acc = 0.0;
    double adv_acc = 0.0;
};

struct TrainConfig {
    Technique technique = Technique::baseline;
    double alpha = 0.05;   // classifier weight in the debias phase (alternating)
    double lambda = 1.0;   // reversal strength (gradient negation)
    std::size_t rounds = 10;
    /// Epochs of the joint loop for baseline and gradient negation, and of
    /// the initial classifier phase of alternating training.
    std::size_t epochs = 30;
    /// Epochs of each adversary / debias phase of alternating training.
    std::size_t epochs_per_phase = 1;
    std::size_t batch_size = 32;
    double learning_rate = 0.05;
    ad::OptimizerKind optimizer = ad::OptimizerKind::sgd;
    /// Re-initialise the adversary before every adversary phase.
    bool reset_adversary = false;
    std::uint64_t seed = 0;
    Scheme label_scheme = Scheme::four_class;

    /// Probe head training.
    std::size_t probe_epochs = 30;
    double probe_learning_rate = 0.1;

    /// Called after every recorded trace point with the bundle in its
    /// post-epoch state. Optional.
    std::function<void(const TracePoint&, const model::ModelBundle&)> on_epoch;

    void validate() const;
};

/// Encoded inputs with class indices for the target and the dialect.
struct Examples {
    std::vector<std::string> ids;
    std::vector<text::EncodedText> inputs;
    std::vector<std::size_t> targets;   // class index in the scheme
    std::vector<std::size_t> dialects;  // 0 = AAE, 1 = WAE
    Scheme scheme = Scheme::four_class;

    std::size_t size() const { return inputs.size(); }
};

Examples make_examples(const corpus::Dataset& d, const text::Vocabulary& vocab, std::size_t max_len);
/// Vocabulary over the preprocessed, tokenized text of a (training) dataset.
text::Vocabulary build_vocabulary(const corpus::Dataset& train, std::size_t max_size = 20000,
                                  std::size_t min_frequency = 2);


struct TrainTrace {
    std::vector<TracePoint> points;

    /// phase,round,epoch,cls_loss,adv_loss,cls_acc,adv_acc
    std::string to_csv() const;
};

/// Cross-entropy losses and argmax accuracies of both heads on a data slice.
struct HeadScores {
    double cls_loss = 0.0;
    double adv_loss = 0.0;
    double cls_acc = 0.0;
    double adv_acc = 0.0;
};

HeadScores score(const model::ModelBundle& bundle, const Examples& data, std::size_t batch_size = 256);

/// Classifier cross-entropy only; the adversary head is left untouched.
/// The trace is taken on `monitor` (or on the training data when it is empty).
TrainTrace train_baseline(model::ModelBundle& bundle, const Examples& data, const TrainConfig& cfg,
                          const Examples* monitor = nullptr);

/// Classifier phase, then `rounds` of (adversary phase with E and C frozen,
/// debias phase with A frozen). The debias objective is
/// alpha * CE(C(E(x)), y) + (1 - alpha) * CE(A(E(x)), uniform).
TrainTrace train_alternating(model::ModelBundle& bundle, const Examples& data, const TrainConfig& cfg,
                             const Examples* monitor = nullptr);

/// Joint loop on CE(C(E(x)), y) + CE(A(rev(E(x))), z), where rev scales the
/// adversary gradient reaching E by -lambda. lambda = 0 leaves E and C
/// exactly as in train_baseline.
TrainTrace train_gradient_negation(model::ModelBundle& bundle, const Examples& data, const TrainConfig& cfg,
                                   const Examples* monitor = nullptr);

/// Dispatches on cfg.technique.
TrainTrace train(model::ModelBundle& bundle, const Examples& data, const TrainConfig& cfg,
                 const Examples* monitor = nullptr);

/// Loss of the debias objective on one batch (exposed for checks).
ad::Tensor debias_objective(const model::ModelBundle& bundle, ad::Tape& tape, std::span<const text::EncodedText> inputs,
                            std::span<const std::size_t> targets, double alpha);
/// Loss of the classifier phase on one batch.
ad::Tensor classifier_objective(const model::ModelBundle& bundle, ad::Tape& tape,
                                std::span<const text::EncodedText> inputs, std::span<const std::size_t> targets);
/// Loss of the joint gradient-negation objective on one batch.
ad::Tensor negation_objective(const model::ModelBundle& bundle, ad::Tape& tape, std::span<const text::EncodedText> inputs,
                              std::span<const std::size_t> targets, std::span<const std::size_t> dialects,
                              double lambda);

/// Trains a fresh adversary-shaped head on the bundle's frozen encoder
/// output and scores it on `eval_data`. The bundle is not modified.
eval::ProbeResult probe_dialect(const model::ModelBundle& bundle, const Examples& train_data, const Examples& eval_data,
                                const TrainConfig& cfg);

/// Argmax predictions of the classifier head.
eval::PredictionSet predict(const model::ModelBundle& bundle, const Examples& data, std::size_t batch_size = 256);

}  // namespace debias::train
