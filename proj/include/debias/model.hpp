// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <initializer_list>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "debias/autodiff.hpp"
#include "debias/text.hpp"

namespace debias::model {

struct EncoderConfig {
    std::size_t vocab_size = 0;
    std::size_t embedding_dim = 64;
    std::vector<std::size_t> hidden_dims{128, 64};
    std::size_t representation_dim = 64;
    std::size_t max_len = 64;
    std::uint64_t seed = 0;

    void validate() const;
    friend bool operator==(const EncoderConfig&, const EncoderConfig&) = default;
};

/// Encoder E, classifier head C and adversary head A.
enum class Component { encoder = 0, classifier = 1, adversary = 2 };

std::string_view to_string(Component c);

struct Dense {
    ad::Tensor weight;  // [in x out]
    ad::Tensor bias;    // [out]
};

/// Shared encoder (embedding -> masked mean -> relu MLP) feeding a target
/// classifier and a two-way dialect adversary.
///
/// Copying a bundle copies its parameters; the copy shares nothing with the
/// original.
class ModelBundle {
public:
    ModelBundle() = default;
    ModelBundle(const ModelBundle& other);
    ModelBundle& operator=(const ModelBundle& other);
    ModelBundle(ModelBundle&&) noexcept = default;
    ModelBundle& operator=(ModelBundle&&) noexcept = default;

    EncoderConfig config;
    std::size_t n_classes = 0;
    ad::Tensor embedding;  // [vocab x embedding_dim]
    std::vector<Dense> encoder_layers;
    Dense classifier;
    Dense adversary;

    std::vector<ad::Tensor> parameters(Component c) const;
    std::vector<ad::Tensor> all_parameters() const;
    /// Parameters of every component that is not frozen, in E, C, A order.
    std::vector<ad::Tensor> trainable_parameters() const;

    void set_frozen(std::initializer_list<Component> components, bool frozen);
    bool frozen(Component c) const { return frozen_[static_cast<std::size_t>(c)]; }

    void zero_grad();

    /// Raw little-endian bytes of a component's parameter values.
    std::string component_bytes(Component c) const;

private:
    std::array<bool, 3> frozen_{false, false, false};
};

/// Scaled-uniform weights (bound sqrt(6 / (fan_in + fan_out))), zero biases.
ModelBundle init_model(const EncoderConfig& cfg, std::size_t n_target_classes, std::uint64_t seed);

/// Fresh adversary-shaped head for a bundle's representation width.
Dense init_dense(std::size_t in, std::size_t out, std::uint64_t seed);

/// E(x): [batch x representation_dim]. Throws ValidationError when an id is
/// outside the vocabulary.
ad::Tensor encode_batch(const ModelBundle& bundle, ad::Tape& tape, std::span<const text::EncodedText> batch);
ad::Tensor apply(const Dense& layer, ad::Tape& tape, const ad::Tensor& input);
/// C(E(x)) logits.
ad::Tensor classify(const ModelBundle& bundle, ad::Tape& tape, const ad::Tensor& reps);
/// A(E(x)) logits, columns (AAE, WAE).
ad::Tensor adversary_predict(const ModelBundle& bundle, ad::Tape& tape, const ad::Tensor& reps);

/// Row-wise argmax; ties go to the lowest index.
std::vector<std::size_t> argmax_rows(const ad::Tensor& logits);

/// "model-v1" JSON: config, freeze flags and every tensor as {shape, values}
/// with 17 significant digits.
std::string to_checkpoint(const ModelBundle& bundle);
ModelBundle from_checkpoint(std::string_view json);
void save_checkpoint(const ModelBundle& bundle, const std::filesystem::path& path);
ModelBundle load_checkpoint(const std::filesystem::path& path);

}  // namespace debias::model
