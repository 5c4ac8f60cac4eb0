// SPDX-License-Identifier: Apache-2.0
#include "debias/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "debias/error.hpp"
#include "debias/rng.hpp"

namespace debias::ad {

std::size_t element_count(const Shape& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_string(const Shape& shape) {
    std::ostringstream out;
    out << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) out << 'x';
        out << shape[i];
    }
    out << ']';
    return out.str();
}

Tensor Tensor::zeros(Shape shape, bool trainable) {
    const auto n = element_count(shape);
    return from(std::move(shape), std::vector<double>(n, 0.0), trainable);
}

Tensor Tensor::from(Shape shape, std::vector<double> values, bool trainable) {
    if (element_count(shape) != values.size()) {
        throw ShapeError("tensor shape " + shape_string(shape) + " does not hold " +
                         std::to_string(values.size()) + " values");
    }
    Tensor t;
    t.data_ = std::make_shared<Storage>();
    t.data_->grad.assign(values.size(), 0.0);
    t.data_->shape = std::move(shape);
    t.data_->values = std::move(values);
    t.data_->trainable = trainable;
    return t;
}

Tensor Tensor::scalar(double value) { return from({}, {value}); }

double Tensor::item() const {
    if (size() != 1) throw ShapeError("item() on tensor of shape " + shape_string(shape()));
    return data_->values[0];
}

void Tensor::zero_grad() { std::fill(data_->grad.begin(), data_->grad.end(), 0.0); }

Tensor Tensor::clone() const {
    Tensor t = from(data_->shape, data_->values, data_->trainable);
    std::copy(data_->grad.begin(), data_->grad.end(), t.data_->grad.begin());
    return t;
}

void Tape::record(std::vector<Tensor> inputs, Tensor output, BackwardRule rule) {
    nodes_.push_back(Node{std::move(inputs), std::move(output), std::move(rule)});
}

void Tape::backward(const Tensor& loss) {
    if (!loss.defined() || loss.size() != 1) {
        throw ValidationError("backward() needs a scalar loss, got shape " +
                              (loss.defined() ? shape_string(loss.shape()) : std::string("<undefined>")));
    }

    std::unordered_map<const void*, std::size_t> producer;
    producer.reserve(nodes_.size());
    for (std::size_t i = 0; i < nodes_.size(); ++i) producer[nodes_[i].output.id()] = i;

    // Mark the operations the loss depends on.
    std::vector<bool> live(nodes_.size(), false);
    std::vector<const void*> pending{loss.id()};
    while (!pending.empty()) {
        const void* id = pending.back();
        pending.pop_back();
        auto it = producer.find(id);
        if (it == producer.end() || live[it->second]) continue;
        live[it->second] = true;
        for (const auto& in : nodes_[it->second].inputs) pending.push_back(in.id());
    }

    Tensor seed = loss;
    seed.grad()[0] += 1.0;
    for (std::size_t i = nodes_.size(); i-- > 0;) {
        if (live[i]) nodes_[i].rule();
    }
}

namespace {

void require_rank(const Tensor& t, std::size_t rank, const char* what) {
    if (t.rank() != rank) {
        throw ShapeError(std::string(what) + " expects rank " + std::to_string(rank) + ", got " +
                         shape_string(t.shape()));
    }
}

}  // namespace

Tensor linear(Tape& tape, const Tensor& input, const Tensor& weight, const Tensor& bias) {
    require_rank(input, 2, "linear input");
    require_rank(weight, 2, "linear weight");
    const std::size_t rows = input.dim(0), inner = input.dim(1), cols = weight.dim(1);
    if (weight.dim(0) != inner || bias.size() != cols) {
        throw ShapeError("linear: input " + shape_string(input.shape()) + " incompatible with weight " +
                         shape_string(weight.shape()) + " and bias " + shape_string(bias.shape()));
    }
    Tensor out = Tensor::zeros({rows, cols});
    {
        auto y = out.values();
        auto x = input.values();
        auto w = weight.values();
        auto b = bias.values();
        for (std::size_t r = 0; r < rows; ++r) {
            double* yr = &y[r * cols];
            std::copy(b.begin(), b.end(), yr);
            for (std::size_t k = 0; k < inner; ++k) {
                const double xv = x[r * inner + k];
                if (xv == 0.0) continue;
                const double* wk = &w[k * cols];
                for (std::size_t c = 0; c < cols; ++c) yr[c] += xv * wk[c];
            }
        }
    }
    tape.record({input, weight, bias}, out, [input, weight, bias, out, rows, inner, cols]() mutable {
        auto gy = out.grad();
        auto x = input.values();
        auto w = weight.values();
        auto gx = input.grad();
        auto gw = weight.grad();
        auto gb = bias.grad();
        for (std::size_t r = 0; r < rows; ++r) {
            const double* gyr = &gy[r * cols];
            for (std::size_t c = 0; c < cols; ++c) gb[c] += gyr[c];
            for (std::size_t k = 0; k < inner; ++k) {
                const double* wk = &w[k * cols];
                double* gwk = &gw[k * cols];
                const double xv = x[r * inner + k];
                double acc = 0.0;
                for (std::size_t c = 0; c < cols; ++c) {
                    acc += gyr[c] * wk[c];
                    gwk[c] += xv * gyr[c];
                }
                gx[r * inner + k] += acc;
            }
        }
    });
    return out;
}

Tensor relu(Tape& tape, const Tensor& x) {
    Tensor out = Tensor::zeros(x.shape());
    auto xv = x.values();
    auto y = out.values();
    for (std::size_t i = 0; i < y.size(); ++i) y[i] = xv[i] > 0.0 ? xv[i] : 0.0;
    tape.record({x}, out, [x, out]() mutable {
        auto xv = x.values();
        auto gx = x.grad();
        auto gy = out.grad();
        for (std::size_t i = 0; i < gy.size(); ++i) {
            if (xv[i] > 0.0) gx[i] += gy[i];
        }
    });
    return out;
}

Tensor embedding(Tape& tape, const Tensor& table, std::span<const std::size_t> ids, std::size_t batch,
                 std::size_t steps) {
    require_rank(table, 2, "embedding table");
    if (ids.size() != batch * steps) {
        throw ShapeError("embedding: " + std::to_string(ids.size()) + " ids for batch " +
                         std::to_string(batch) + " x steps " + std::to_string(steps));
    }
    const std::size_t vocab = table.dim(0), width = table.dim(1);
    for (std::size_t i = 0; i < ids.size(); ++i) {
        if (ids[i] >= vocab) {
            throw ValidationError("token id " + std::to_string(ids[i]) + " out of range for vocabulary of " +
                                  std::to_string(vocab));
        }
    }
    Tensor out = Tensor::zeros({batch, steps, width});
    auto t = table.values();
    auto y = out.values();
    for (std::size_t i = 0; i < ids.size(); ++i) {
        std::copy_n(&t[ids[i] * width], width, &y[i * width]);
    }
    std::vector<std::size_t> kept(ids.begin(), ids.end());
    tape.record({table}, out, [table, out, kept = std::move(kept), width]() mutable {
        auto gt = table.grad();
        auto gy = out.grad();
        for (std::size_t i = 0; i < kept.size(); ++i) {
            double* row = &gt[kept[i] * width];
            const double* g = &gy[i * width];
            for (std::size_t d = 0; d < width; ++d) row[d] += g[d];
        }
    });
    return out;
}

Tensor mean_pool(Tape& tape, const Tensor& x, std::span<const std::uint8_t> mask) {
    require_rank(x, 3, "mean_pool input");
    const std::size_t batch = x.dim(0), steps = x.dim(1), width = x.dim(2);
    if (steps == 0) throw ShapeError("mean_pool needs at least one position");
    if (mask.size() != batch * steps) {
        throw ShapeError("mean_pool: mask of " + std::to_string(mask.size()) + " entries for input " +
                         shape_string(x.shape()));
    }
    std::vector<double> inv_count(batch, 0.0);
    for (std::size_t b = 0; b < batch; ++b) {
        std::size_t n = 0;
        for (std::size_t s = 0; s < steps; ++s) n += mask[b * steps + s] != 0;
        inv_count[b] = n ? 1.0 / static_cast<double>(n) : 0.0;
    }
    Tensor out = Tensor::zeros({batch, width});
    auto xv = x.values();
    auto y = out.values();
    for (std::size_t b = 0; b < batch; ++b) {
        if (inv_count[b] == 0.0) continue;
        for (std::size_t s = 0; s < steps; ++s) {
            if (!mask[b * steps + s]) continue;
            const double* row = &xv[(b * steps + s) * width];
            for (std::size_t d = 0; d < width; ++d) y[b * width + d] += row[d];
        }
        for (std::size_t d = 0; d < width; ++d) y[b * width + d] *= inv_count[b];
    }
    std::vector<std::uint8_t> kept(mask.begin(), mask.end());
    tape.record({x}, out, [x, out, kept = std::move(kept), inv_count, steps, width]() mutable {
        auto gx = x.grad();
        auto gy = out.grad();
        for (std::size_t b = 0; b < inv_count.size(); ++b) {
            if (inv_count[b] == 0.0) continue;
            for (std::size_t s = 0; s < steps; ++s) {
                if (!kept[b * steps + s]) continue;
                double* row = &gx[(b * steps + s) * width];
                for (std::size_t d = 0; d < width; ++d) row[d] += gy[b * width + d] * inv_count[b];
            }
        }
    });
    return out;
}

Tensor gradient_reversal(Tape& tape, const Tensor& x, double lambda) {
    if (!(lambda >= 0.0)) throw ValidationError("gradient_reversal needs lambda >= 0");
    Tensor out = Tensor::from(x.shape(), std::vector<double>(x.values().begin(), x.values().end()));
    tape.record({x}, out, [x, out, lambda]() mutable {
        auto gx = x.grad();
        auto gy = out.grad();
        for (std::size_t i = 0; i < gy.size(); ++i) gx[i] += -lambda * gy[i];
    });
    return out;
}

Tensor add(Tape& tape, const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape()) {
        throw ShapeError("add: " + shape_string(a.shape()) + " vs " + shape_string(b.shape()));
    }
    Tensor out = Tensor::zeros(a.shape());
    auto y = out.values();
    for (std::size_t i = 0; i < y.size(); ++i) y[i] = a[i] + b[i];
    tape.record({a, b}, out, [a, b, out]() mutable {
        auto gy = out.grad();
        auto ga = a.grad();
        auto gb = b.grad();
        for (std::size_t i = 0; i < gy.size(); ++i) {
            ga[i] += gy[i];
            gb[i] += gy[i];
        }
    });
    return out;
}

Tensor scale(Tape& tape, const Tensor& x, double factor) {
    Tensor out = Tensor::zeros(x.shape());
    auto y = out.values();
    for (std::size_t i = 0; i < y.size(); ++i) y[i] = factor * x[i];
    tape.record({x}, out, [x, out, factor]() mutable {
        auto gx = x.grad();
        auto gy = out.grad();
        for (std::size_t i = 0; i < gy.size(); ++i) gx[i] += factor * gy[i];
    });
    return out;
}

Tensor sum(Tape& tape, const Tensor& x) {
    double total = 0.0;
    for (double v : x.values()) total += v;
    Tensor out = Tensor::scalar(total);
    tape.record({x}, out, [x, out]() mutable {
        const double g = out.grad()[0];
        for (double& gx : x.grad()) gx += g;
    });
    return out;
}

std::vector<double> softmax_rows(const Tensor& logits) {
    require_rank(logits, 2, "softmax");
    const std::size_t rows = logits.dim(0), cols = logits.dim(1);
    std::vector<double> p(rows * cols);
    for (std::size_t r = 0; r < rows; ++r) {
        const double* z = &logits.values()[r * cols];
        const double top = *std::max_element(z, z + cols);
        double total = 0.0;
        for (std::size_t c = 0; c < cols; ++c) total += (p[r * cols + c] = std::exp(z[c] - top));
        for (std::size_t c = 0; c < cols; ++c) p[r * cols + c] /= total;
    }
    return p;
}

std::vector<double> uniform_targets(std::size_t rows, std::size_t classes) {
    return std::vector<double>(rows * classes, 1.0 / static_cast<double>(classes));
}

namespace {

// Shared by both cross-entropy variants once targets are a dense distribution.
Tensor cross_entropy_dense(Tape& tape, const Tensor& logits, std::vector<double> targets) {
    const std::size_t rows = logits.dim(0), cols = logits.dim(1);
    if (rows == 0) throw ShapeError("cross entropy over an empty batch");
    double total = 0.0;
    for (std::size_t r = 0; r < rows; ++r) {
        const double* z = &logits.values()[r * cols];
        const std::size_t arg = static_cast<std::size_t>(std::max_element(z, z + cols) - z);
        const double top = z[arg];
        // The max term contributes exactly 1; log1p keeps the rest precise.
        double rest = 0.0;
        for (std::size_t c = 0; c < cols; ++c) {
            if (c != arg) rest += std::exp(z[c] - top);
        }
        const double log_rest = std::log1p(rest);
        for (std::size_t c = 0; c < cols; ++c) {
            const double t = targets[r * cols + c];
            if (t != 0.0) total += t * ((top - z[c]) + log_rest);
        }
    }
    Tensor out = Tensor::scalar(total / static_cast<double>(rows));
    tape.record({logits}, out, [logits, out, targets = std::move(targets), rows, cols]() mutable {
        const double g = out.grad()[0] / static_cast<double>(rows);
        const auto p = softmax_rows(logits);
        auto gz = logits.grad();
        for (std::size_t i = 0; i < rows * cols; ++i) gz[i] += g * (p[i] - targets[i]);
    });
    return out;
}

}  // namespace

Tensor softmax_cross_entropy(Tape& tape, const Tensor& logits, std::span<const std::size_t> labels) {
    require_rank(logits, 2, "cross entropy logits");
    const std::size_t rows = logits.dim(0), cols = logits.dim(1);
    if (labels.size() != rows) {
        throw ShapeError("cross entropy: " + std::to_string(labels.size()) + " labels for logits " +
                         shape_string(logits.shape()));
    }
    std::vector<double> dense(rows * cols, 0.0);
    for (std::size_t r = 0; r < rows; ++r) {
        if (labels[r] >= cols) {
            throw ValidationError("cross entropy: label " + std::to_string(labels[r]) + " out of range for " +
                                  std::to_string(cols) + " classes");
        }
        dense[r * cols + labels[r]] = 1.0;
    }
    return cross_entropy_dense(tape, logits, std::move(dense));
}

Tensor softmax_cross_entropy(Tape& tape, const Tensor& logits, std::span<const double> targets) {
    require_rank(logits, 2, "cross entropy logits");
    const std::size_t rows = logits.dim(0), cols = logits.dim(1);
    if (targets.size() != rows * cols) {
        throw ShapeError("cross entropy: target distribution of " + std::to_string(targets.size()) +
                         " entries for logits " + shape_string(logits.shape()));
    }
    for (std::size_t r = 0; r < rows; ++r) {
        double total = 0.0;
        for (std::size_t c = 0; c < cols; ++c) {
            const double t = targets[r * cols + c];
            if (!(t >= 0.0)) throw ValidationError("target row " + std::to_string(r) + " has a negative entry");
            total += t;
        }
        if (std::abs(total - 1.0) > 1e-9) {
            throw ValidationError("target row " + std::to_string(r) + " sums to " + std::to_string(total) +
                                  ", expected 1");
        }
    }
    return cross_entropy_dense(tape, logits, std::vector<double>(targets.begin(), targets.end()));
}

Optimizer::Optimizer(OptimizerKind kind, double learning_rate) : kind_(kind), learning_rate_(learning_rate) {
    if (!(learning_rate > 0.0)) throw ValidationError("learning rate must be positive");
}

void Optimizer::step(std::span<Tensor> params) {
    ++steps_;
    for (Tensor& p : params) {
        if (!p.trainable()) throw ValidationError("optimizer step on a non-trainable tensor");
        auto w = p.values();
        auto g = p.grad();
        if (kind_ == OptimizerKind::sgd) {
            for (std::size_t i = 0; i < w.size(); ++i) w[i] -= learning_rate_ * g[i];
        } else {
            auto& m = moments_[p.id()];
            if (m.first.empty()) {
                m.first.assign(w.size(), 0.0);
                m.second.assign(w.size(), 0.0);
            }
            const double t = static_cast<double>(steps_);
            const double c1 = 1.0 - std::pow(kBeta1, t);
            const double c2 = 1.0 - std::pow(kBeta2, t);
            for (std::size_t i = 0; i < w.size(); ++i) {
                m.first[i] = kBeta1 * m.first[i] + (1.0 - kBeta1) * g[i];
                m.second[i] = kBeta2 * m.second[i] + (1.0 - kBeta2) * g[i] * g[i];
                w[i] -= learning_rate_ * (m.first[i] / c1) / (std::sqrt(m.second[i] / c2) + kEps);
            }
        }
        p.zero_grad();
    }
}

double finite_difference_check(const LossBuilder& build_loss, std::span<Tensor> params,
                               const GradCheckOptions& options) {
    if (!(options.epsilon > 0.0)) throw ValidationError("finite difference epsilon must be positive");
    for (auto& p : params) p.zero_grad();

    auto evaluate = [&]() {
        Tape tape;
        const double v = build_loss(tape).item();
        if (!std::isfinite(v)) throw std::runtime_error("finite difference check: loss is not finite");
        return v;
    };

    {
        Tape tape;
        Tensor loss = build_loss(tape);
        if (!std::isfinite(loss.item())) throw std::runtime_error("finite difference check: loss is not finite");
        tape.backward(loss);
    }

    std::vector<std::pair<std::size_t, std::size_t>> coords;
    for (std::size_t t = 0; t < params.size(); ++t) {
        for (std::size_t i = 0; i < params[t].size(); ++i) coords.emplace_back(t, i);
    }
    if (options.coordinates && options.coordinates < coords.size()) {
        Rng rng(options.seed);
        rng.shuffle(std::span(coords));
        coords.resize(options.coordinates);
    }

    double worst = 0.0;
    for (auto [t, i] : coords) {
        Tensor& p = params[t];
        const double original = p[i];
        p[i] = original + options.epsilon;
        const double up = evaluate();
        p[i] = original - options.epsilon;
        const double down = evaluate();
        p[i] = original;
        const double numeric = (up - down) / (2.0 * options.epsilon);
        const double analytic = p.grad()[i];
        worst = std::max(worst, std::abs(analytic - numeric) / std::max(1.0, std::abs(numeric)));
    }
    for (auto& p : params) p.zero_grad();
    return worst;
}

}  // namespace debias::ad
