// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

namespace debias::ad {

using Shape = std::vector<std::size_t>;

std::size_t element_count(const Shape& shape);
std::string shape_string(const Shape& shape);

/// Dense row-major float64 array with an accumulated gradient buffer.
///
/// Tensor is a handle: copies alias the same storage, which is what lets a
/// Tape hold on to operands after the forward pass returns. Use clone() for
/// an independent copy.
class Tensor {
public:
    Tensor() = default;

    static Tensor zeros(Shape shape, bool trainable = false);
    static Tensor from(Shape shape, std::vector<double> values, bool trainable = false);
    static Tensor scalar(double value);

    bool defined() const { return data_ != nullptr; }
    const Shape& shape() const { return data_->shape; }
    std::size_t size() const { return data_->values.size(); }
    std::size_t dim(std::size_t axis) const { return data_->shape.at(axis); }
    std::size_t rank() const { return data_->shape.size(); }

    // Handle semantics: const refers to the handle, not the storage.
    std::span<double> values() const { return data_->values; }
    std::span<double> grad() const { return data_->grad; }
    double& operator[](std::size_t i) const { return data_->values[i]; }

    /// Value of a one-element tensor.
    double item() const;

    bool trainable() const { return data_->trainable; }
    void set_trainable(bool on) { data_->trainable = on; }

    void zero_grad();
    Tensor clone() const;

    /// Storage identity; two handles with equal ids alias each other.
    const void* id() const { return data_.get(); }
    bool same(const Tensor& other) const { return data_ == other.data_; }

private:
    struct Storage {
        Shape shape;
        std::vector<double> values;
        std::vector<double> grad;
        bool trainable = false;
    };
    std::shared_ptr<Storage> data_;
};

/// Ordered record of forward operations. backward() replays the recorded
/// rules once each, newest first, for the operations the loss depends on.
class Tape {
public:
    using BackwardRule = std::function<void()>;

    void record(std::vector<Tensor> inputs, Tensor output, BackwardRule rule);

    /// Seeds d(loss)/d(loss) = 1 and accumulates into every reachable grad.
    /// Throws ValidationError unless loss holds exactly one element.
    void backward(const Tensor& loss);

    void clear() { nodes_.clear(); }
    std::size_t size() const { return nodes_.size(); }

private:
    struct Node {
        std::vector<Tensor> inputs;
        Tensor output;
        BackwardRule rule;
    };
    std::vector<Node> nodes_;
};

// Primitives. Each records itself on the tape and returns a fresh tensor.

/// input[B x K] * weight[K x N] + bias[N].
Tensor linear(Tape& tape, const Tensor& input, const Tensor& weight, const Tensor& bias);
Tensor relu(Tape& tape, const Tensor& x);
/// Row lookup: ids has batch*steps entries, result is [batch x steps x table.dim(1)].
Tensor embedding(Tape& tape, const Tensor& table, std::span<const std::size_t> ids,
                 std::size_t batch, std::size_t steps);
/// Mean over the steps axis of x[B x T x D], counting only positions where
/// mask is nonzero. A fully masked row yields zeros.
Tensor mean_pool(Tape& tape, const Tensor& x, std::span<const std::uint8_t> mask);
/// Identity forward; backward scales the incoming gradient by -lambda.
Tensor gradient_reversal(Tape& tape, const Tensor& x, double lambda);
Tensor add(Tape& tape, const Tensor& a, const Tensor& b);
Tensor scale(Tape& tape, const Tensor& x, double factor);
Tensor sum(Tape& tape, const Tensor& x);

/// Mean over rows of -log softmax(logits)[label].
Tensor softmax_cross_entropy(Tape& tape, const Tensor& logits, std::span<const std::size_t> labels);
/// Soft-target variant; targets is row-major [B x C], each row summing to 1.
Tensor softmax_cross_entropy(Tape& tape, const Tensor& logits, std::span<const double> targets);

/// Row-wise softmax without recording (used at prediction time).
std::vector<double> softmax_rows(const Tensor& logits);
/// B x C matrix with every entry 1/C.
std::vector<double> uniform_targets(std::size_t rows, std::size_t classes);

enum class OptimizerKind { sgd, adam };

/// Learning rate, step counter and, for adam, per-parameter moment buffers.
class Optimizer {
public:
    explicit Optimizer(OptimizerKind kind = OptimizerKind::sgd, double learning_rate = 0.05);

    /// Applies one update to each tensor, then zeroes its grad. Every tensor
    /// must be trainable.
    void step(std::span<Tensor> params);

    OptimizerKind kind() const { return kind_; }
    double learning_rate() const { return learning_rate_; }
    std::uint64_t steps() const { return steps_; }
    bool has_moments() const { return !moments_.empty(); }

private:
    struct Moments {
        std::vector<double> first;
        std::vector<double> second;
    };
    OptimizerKind kind_;
    double learning_rate_;
    std::uint64_t steps_ = 0;
    std::unordered_map<const void*, Moments> moments_;
    static constexpr double kBeta1 = 0.9;
    static constexpr double kBeta2 = 0.999;
    static constexpr double kEps = 1e-8;
};

struct GradCheckOptions {
    double epsilon = 1e-6;
    /// Number of coordinates sampled across all params; 0 checks every one.
    std::size_t coordinates = 0;
    std::uint64_t seed = 0;
};

using LossBuilder = std::function<Tensor(Tape&)>;

/// Max over checked coordinates of |analytic - central| / max(1, |central|).
/// Params' grads are zeroed before and after. Throws std::runtime_error if
/// the loss is not finite.
double finite_difference_check(const LossBuilder& build_loss, std::span<Tensor> params,
                               const GradCheckOptions& options = {});

}  // namespace debias::ad
