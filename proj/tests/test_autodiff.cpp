// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

#include "debias/autodiff.hpp"
#include "debias/error.hpp"
#include "debias/rng.hpp"

using namespace debias;
using namespace debias::ad;

namespace {

std::vector<double> to_vec(std::span<const double> s) { return {s.begin(), s.end()}; }

Tensor random_tensor(Shape shape, Rng& rng, bool trainable = true) {
    Tensor t = Tensor::zeros(std::move(shape), trainable);
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(-2.0, 2.0);
    return t;
}

}  // namespace

TEST(Tensor, FromRejectsSizeMismatch) {
    EXPECT_THROW(Tensor::from({2, 2}, {1, 2, 3}), ShapeError);
}

TEST(Tensor, CopiesAliasAndCloneDoesNot) {
    Tensor a = Tensor::from({2}, {1, 2});
    Tensor b = a;
    b[0] = 5;
    EXPECT_EQ(a[0], 5);
    Tensor c = a.clone();
    c[0] = 9;
    EXPECT_EQ(a[0], 5);
}

TEST(Linear, IdentityWeightsReturnInput) {
    Tape tape;
    auto y = linear(tape, Tensor::from({2, 2}, {1, 2, 3, 4}), Tensor::from({2, 2}, {1, 0, 0, 1}),
                    Tensor::from({2}, {0, 0}));
    EXPECT_EQ(to_vec(y.values()), (std::vector<double>{1, 2, 3, 4}));
}

TEST(Linear, ZeroWeightsPassBiasThrough) {
    Tape tape;
    auto y = linear(tape, Tensor::from({1, 2}, {1, 0}), Tensor::zeros({2, 2}), Tensor::from({2}, {5, 7}));
    EXPECT_EQ(to_vec(y.values()), (std::vector<double>{5, 7}));
}

TEST(Linear, HandMultiplied) {
    Tape tape;
    auto y = linear(tape, Tensor::from({1, 2}, {1, 2}), Tensor::from({2, 2}, {1, 1, 1, -1}), Tensor::from({2}, {0, 0}));
    EXPECT_EQ(to_vec(y.values()), (std::vector<double>{3, -1}));
}

TEST(Linear, ShapeMismatchNamesBothShapes) {
    Tape tape;
    try {
        linear(tape, Tensor::zeros({1, 3}), Tensor::zeros({2, 2}), Tensor::zeros({2}));
        FAIL() << "expected ShapeError";
    } catch (const ShapeError& e) {
        const std::string msg = e.what();
        EXPECT_NE(msg.find("1x3"), std::string::npos) << msg;
        EXPECT_NE(msg.find("2x2"), std::string::npos) << msg;
    }
}

TEST(Linear, GradientsMatchHandDerivation) {
    // loss = sum(x W + b); dL/dW[k,n] = sum_b x[b,k], dL/dx[b,k] = sum_n W[k,n], dL/db = B.
    Tape tape;
    Tensor x = Tensor::from({2, 2}, {1, 2, 3, 4}, true);
    Tensor w = Tensor::from({2, 3}, {1, 2, 3, 4, 5, 6}, true);
    Tensor b = Tensor::from({3}, {0, 0, 0}, true);
    tape.backward(sum(tape, linear(tape, x, w, b)));
    EXPECT_EQ(to_vec(w.grad()), (std::vector<double>{4, 4, 4, 6, 6, 6}));
    EXPECT_EQ(to_vec(x.grad()), (std::vector<double>{6, 15, 6, 15}));
    EXPECT_EQ(to_vec(b.grad()), (std::vector<double>{2, 2, 2}));
}

TEST(Relu, Forward) {
    Tape tape;
    EXPECT_EQ(to_vec(relu(tape, Tensor::from({3}, {-1, 0, 2})).values()), (std::vector<double>{0, 0, 2}));
    EXPECT_EQ(to_vec(relu(tape, Tensor::from({1}, {3.5})).values()), (std::vector<double>{3.5}));
}

TEST(Relu, AllNegativeBlocksGradient) {
    Tape tape;
    Tensor x = Tensor::from({3}, {-1, -2, -0.5}, true);
    Tensor y = relu(tape, x);
    EXPECT_EQ(to_vec(y.values()), (std::vector<double>{0, 0, 0}));
    tape.backward(sum(tape, y));
    EXPECT_EQ(to_vec(x.grad()), (std::vector<double>{0, 0, 0}));
}

TEST(Relu, GradientOnlyWherePositive) {
    Tape tape;
    Tensor x = Tensor::from({3}, {-1, 0, 2}, true);
    tape.backward(sum(tape, relu(tape, x)));
    EXPECT_EQ(to_vec(x.grad()), (std::vector<double>{0, 0, 1}));
}

TEST(MeanPool, SinglePositionIsThatVector) {
    Tape tape;
    const std::vector<std::uint8_t> mask{1};
    auto y = mean_pool(tape, Tensor::from({1, 1, 2}, {4, -3}), mask);
    EXPECT_EQ(to_vec(y.values()), (std::vector<double>{4, -3}));
}

TEST(MeanPool, ArithmeticMean) {
    Tape tape;
    const std::vector<std::uint8_t> mask{1, 1};
    auto y = mean_pool(tape, Tensor::from({1, 2, 2}, {1, 1, 3, 3}), mask);
    EXPECT_EQ(to_vec(y.values()), (std::vector<double>{2, 2}));
}

TEST(MeanPool, MaskedPositionsIgnoredAndFullyMaskedRowIsZero) {
    Tape tape;
    Tensor x = Tensor::from({2, 2, 1}, {5, 100, 7, 9}, true);
    const std::vector<std::uint8_t> mask{1, 0, 0, 0};
    auto y = mean_pool(tape, x, mask);
    EXPECT_EQ(to_vec(y.values()), (std::vector<double>{5, 0}));
    tape.backward(sum(tape, y));
    EXPECT_EQ(to_vec(x.grad()), (std::vector<double>{1, 0, 0, 0}));
}

TEST(SoftmaxCrossEntropy, UniformLogitsOneHot) {
    Tape tape;
    const std::vector<std::size_t> labels{0};
    EXPECT_NEAR(softmax_cross_entropy(tape, Tensor::from({1, 2}, {0, 0}), labels).item(), std::log(2.0), 1e-15);
}

TEST(SoftmaxCrossEntropy, UniformTarget) {
    Tape tape;
    const std::vector<double> target{0.5, 0.5};
    EXPECT_NEAR(softmax_cross_entropy(tape, Tensor::from({1, 2}, {0, 0}), target).item(), std::log(2.0), 1e-15);
}

TEST(SoftmaxCrossEntropy, ConfidentCorrect) {
    Tape tape;
    const std::vector<std::size_t> labels{0};
    const double expected = std::log1p(std::exp(-20.0));  // ~2.0611536e-9
    EXPECT_NEAR(softmax_cross_entropy(tape, Tensor::from({1, 2}, {10, -10}), labels).item(), expected, 1e-20);
}

TEST(SoftmaxCrossEntropy, LargeLogitsStayFinite) {
    Tape tape;
    const std::vector<std::size_t> labels{1};
    const double loss = softmax_cross_entropy(tape, Tensor::from({1, 2}, {1000, -1000}), labels).item();
    EXPECT_NEAR(loss, 2000.0, 1e-9);
}

TEST(SoftmaxCrossEntropy, RejectsTargetRowsNotSummingToOne) {
    Tape tape;
    const std::vector<double> target{0.5, 0.6};
    EXPECT_THROW(softmax_cross_entropy(tape, Tensor::from({1, 2}, {0, 0}), target), ValidationError);
    const std::vector<double> near{0.5, 0.5 + 5e-10};
    EXPECT_NO_THROW(softmax_cross_entropy(tape, Tensor::from({1, 2}, {0, 0}), near));
}

TEST(SoftmaxCrossEntropy, RejectsOutOfRangeLabel) {
    Tape tape;
    const std::vector<std::size_t> labels{2};
    EXPECT_THROW(softmax_cross_entropy(tape, Tensor::from({1, 2}, {0, 0}), labels), ValidationError);
}

TEST(SoftmaxCrossEntropy, PropertyNonNegativeAndLnCForUniform) {
    Rng rng(17);
    for (int trial = 0; trial < 200; ++trial) {
        const std::size_t b = 1 + rng.below(6), c = 2 + rng.below(5);
        Tape tape;
        Tensor logits = random_tensor({b, c}, rng, false);
        std::vector<std::size_t> labels(b);
        for (auto& l : labels) l = rng.below(c);
        EXPECT_GE(softmax_cross_entropy(tape, logits, labels).item(), 0.0);
        Tensor flat = Tensor::from({b, c}, std::vector<double>(b * c, rng.uniform(-3, 3)));
        EXPECT_NEAR(softmax_cross_entropy(tape, flat, labels).item(), std::log(static_cast<double>(c)), 1e-12);
    }
}

TEST(SoftmaxCrossEntropy, OneHotDistributionMatchesLabelForm) {
    Rng rng(3);
    Tensor logits = random_tensor({4, 3}, rng);
    const std::vector<std::size_t> labels{0, 2, 1, 2};
    std::vector<double> onehot(12, 0.0);
    for (std::size_t i = 0; i < 4; ++i) onehot[i * 3 + labels[i]] = 1.0;
    Tape t1, t2;
    Tensor a = softmax_cross_entropy(t1, logits, labels);
    t1.backward(a);
    const auto ga = to_vec(logits.grad());
    logits.zero_grad();
    Tensor b = softmax_cross_entropy(t2, logits, onehot);
    t2.backward(b);
    EXPECT_DOUBLE_EQ(a.item(), b.item());
    for (std::size_t i = 0; i < ga.size(); ++i) EXPECT_NEAR(ga[i], logits.grad()[i], 1e-15);
}

TEST(GradientReversal, ForwardIsBitIdentical) {
    Rng rng(5);
    Tape tape;
    Tensor x = random_tensor({3, 4}, rng);
    Tensor y = gradient_reversal(tape, x, 0.7);
    EXPECT_EQ(to_vec(x.values()), to_vec(y.values()));
}

TEST(GradientReversal, LambdaZeroBlocksAndOneNegates) {
    for (double lambda : {0.0, 1.0}) {
        Tape tape;
        Tensor x = Tensor::from({3}, {1, -2, 3}, true);
        Tensor y = gradient_reversal(tape, x, lambda);
        tape.backward(sum(tape, scale(tape, y, 2.0)));  // upstream g = 2
        for (double g : x.grad()) EXPECT_EQ(g, lambda == 0.0 ? 0.0 : -2.0);
    }
}

TEST(GradientReversal, NegativeLambdaRejected) {
    Tape tape;
    EXPECT_THROW(gradient_reversal(tape, Tensor::zeros({1}), -0.1), ValidationError);
}

TEST(GradientReversal, PropertyLinearInLambda) {
    Rng rng(11);
    for (int trial = 0; trial < 50; ++trial) {
        Tensor x = random_tensor({2, 3}, rng);
        Tensor w = random_tensor({3, 2}, rng, false);
        Tensor b = random_tensor({2}, rng, false);
        const std::vector<std::size_t> labels{rng.below(2), rng.below(2)};
        auto grad_for = [&](double lambda) {
            x.zero_grad();
            Tape tape;
            tape.backward(softmax_cross_entropy(tape, linear(tape, gradient_reversal(tape, x, lambda), w, b), labels));
            return to_vec(x.grad());
        };
        const double l1 = rng.uniform(0, 1), l2 = rng.uniform(0, 1);
        const auto g1 = grad_for(l1), g2 = grad_for(l2), g12 = grad_for(l1 + l2);
        for (std::size_t i = 0; i < g1.size(); ++i) {
            EXPECT_NEAR(g12[i], g1[i] + g2[i], 1e-12 * std::max(1.0, std::abs(g12[i])));
        }
    }
}

TEST(Backward, SumGivesOnes) {
    Tape tape;
    Tensor w = Tensor::from({4}, {1, 2, 3, 4}, true);
    tape.backward(sum(tape, w));
    EXPECT_EQ(to_vec(w.grad()), (std::vector<double>{1, 1, 1, 1}));
}

TEST(Backward, UnreachableGradStaysZero) {
    Tape tape;
    Tensor w = Tensor::from({2}, {1, 2}, true);
    Tensor v = Tensor::from({2}, {3, 4}, true);
    sum(tape, w);
    tape.backward(sum(tape, v));
    EXPECT_EQ(to_vec(w.grad()), (std::vector<double>{0, 0}));
}

TEST(Backward, NonScalarLossRejected) {
    Tape tape;
    Tensor w = Tensor::from({2}, {1, 2}, true);
    EXPECT_THROW(tape.backward(scale(tape, w, 1.0)), ValidationError);
}

TEST(Backward, DeterministicAcrossRuns) {
    Rng rng(23);
    Tensor x = random_tensor({5, 4}, rng, false);
    Tensor w1 = random_tensor({4, 6}, rng), b1 = random_tensor({6}, rng);
    Tensor w2 = random_tensor({6, 3}, rng), b2 = random_tensor({3}, rng);
    const std::vector<std::size_t> labels{0, 1, 2, 1, 0};
    auto run = [&] {
        for (auto* t : {&w1, &b1, &w2, &b2}) t->zero_grad();
        Tape tape;
        auto h = relu(tape, linear(tape, x, w1, b1));
        tape.backward(softmax_cross_entropy(tape, linear(tape, h, w2, b2), labels));
        std::vector<double> all;
        for (auto* t : {&w1, &b1, &w2, &b2}) all.insert(all.end(), t->grad().begin(), t->grad().end());
        return all;
    };
    EXPECT_EQ(run(), run());
}

TEST(Embedding, LooksUpRowsAndAccumulatesGrad) {
    Tape tape;
    Tensor table = Tensor::from({3, 2}, {0, 0, 1, 2, 3, 4}, true);
    const std::vector<std::size_t> ids{2, 1, 2, 0};
    Tensor e = embedding(tape, table, ids, 2, 2);
    EXPECT_EQ(e.shape(), (Shape{2, 2, 2}));
    EXPECT_EQ(to_vec(e.values()), (std::vector<double>{3, 4, 1, 2, 3, 4, 0, 0}));
    tape.backward(sum(tape, e));
    EXPECT_EQ(to_vec(table.grad()), (std::vector<double>{1, 1, 1, 1, 2, 2}));
}

TEST(Embedding, OutOfRangeIdRejected) {
    Tape tape;
    const std::vector<std::size_t> ids{3};
    EXPECT_THROW(embedding(tape, Tensor::zeros({3, 2}), ids, 1, 1), ValidationError);
}

TEST(Optimizer, SgdArithmetic) {
    Tensor w = Tensor::from({1}, {1.0}, true);
    w.grad()[0] = 2.0;
    Optimizer opt(OptimizerKind::sgd, 0.1);
    std::vector<Tensor> params{w};
    opt.step(params);
    EXPECT_DOUBLE_EQ(w[0], 0.8);
    EXPECT_EQ(w.grad()[0], 0.0);
    EXPECT_FALSE(opt.has_moments());
}

TEST(Optimizer, ZeroGradLeavesParameterUnchanged) {
    for (auto kind : {OptimizerKind::sgd, OptimizerKind::adam}) {
        Tensor w = Tensor::from({2}, {1.5, -2.5}, true);
        Optimizer opt(kind, 0.1);
        std::vector<Tensor> params{w};
        opt.step(params);
        EXPECT_EQ(to_vec(w.values()), (std::vector<double>{1.5, -2.5}));
    }
}

TEST(Optimizer, AdamFirstStepMovesByLearningRate) {
    Tensor w = Tensor::from({2}, {1.0, 1.0}, true);
    w.grad()[0] = 3.0;
    w.grad()[1] = -0.01;
    Optimizer opt(OptimizerKind::adam, 0.01);
    std::vector<Tensor> params{w};
    opt.step(params);
    EXPECT_TRUE(opt.has_moments());
    EXPECT_EQ(opt.steps(), 1u);
    EXPECT_NEAR(w[0], 0.99, 1e-8);
    EXPECT_NEAR(w[1], 1.01, 1e-6);
}

TEST(Optimizer, RejectsFrozenTensor) {
    Tensor w = Tensor::from({1}, {1.0}, false);
    Optimizer opt;
    std::vector<Tensor> params{w};
    EXPECT_THROW(opt.step(params), ValidationError);
}

TEST(FiniteDifference, QuadraticIsExact) {
    // w used as both input and weight of a 1x1 linear map: loss = w^2.
    Tensor w = Tensor::from({1, 1}, {3.0}, true);
    Tensor zero = Tensor::zeros({1});
    auto build = [&](Tape& tape) { return sum(tape, linear(tape, w, w, zero)); };
    Tape tape;
    tape.backward(build(tape));
    EXPECT_DOUBLE_EQ(w.grad()[0], 6.0);
    std::vector<Tensor> params{w};
    EXPECT_LT(finite_difference_check(build, params), 1e-9);
}

TEST(FiniteDifference, LinearReluCrossEntropyNetwork) {
    Rng rng(29);
    Tensor x = random_tensor({4, 5}, rng, false);
    Tensor w1 = random_tensor({5, 7}, rng), b1 = random_tensor({7}, rng);
    Tensor w2 = random_tensor({7, 3}, rng), b2 = random_tensor({3}, rng);
    const std::vector<std::size_t> labels{0, 2, 1, 1};
    std::vector<Tensor> params{w1, b1, w2, b2};
    const double err = finite_difference_check(
        [&](Tape& tape) {
            auto h = relu(tape, linear(tape, x, w1, b1));
            return softmax_cross_entropy(tape, linear(tape, h, w2, b2), labels);
        },
        params);
    EXPECT_LT(err, 1e-4);
}

TEST(FiniteDifference, EveryPrimitiveOnRandomInputs) {
    Rng rng(31);
    for (int trial = 0; trial < 10; ++trial) {
        Tensor table = random_tensor({6, 3}, rng);
        const std::vector<std::size_t> ids{1, 4, 0, 5, 2, 2};
        const std::vector<std::uint8_t> mask{1, 1, 0, 1, 1, 1};
        Tensor w = random_tensor({3, 2}, rng), b = random_tensor({2}, rng);
        const std::vector<double> soft{0.3, 0.7, 0.5, 0.5};
        std::vector<Tensor> params{table, w, b};
        const double err = finite_difference_check(
            [&](Tape& tape) {
                auto pooled = mean_pool(tape, embedding(tape, table, ids, 2, 3), mask);
                auto logits = linear(tape, relu(tape, scale(tape, pooled, 1.5)), w, b);
                return add(tape, softmax_cross_entropy(tape, logits, soft), sum(tape, scale(tape, logits, 0.1)));
            },
            params);
        EXPECT_LT(err, 1e-4);
    }
}

TEST(FiniteDifference, ReversalEqualsScaledIdentityRoute) {
    Rng rng(37);
    Tensor x = random_tensor({3, 4}, rng);
    Tensor w = random_tensor({4, 2}, rng, false), b = random_tensor({2}, rng, false);
    const std::vector<std::size_t> labels{1, 0, 1};
    auto loss = [&](Tape& tape, bool reversed) {
        Tensor in = reversed ? gradient_reversal(tape, x, 0.5) : x;
        return softmax_cross_entropy(tape, linear(tape, in, w, b), labels);
    };
    std::vector<Tensor> params{x};
    EXPECT_LT(finite_difference_check([&](Tape& t) { return loss(t, false); }, params), 1e-4);
    Tape t1;
    t1.backward(loss(t1, false));
    const auto identity = to_vec(x.grad());
    x.zero_grad();
    Tape t2;
    t2.backward(loss(t2, true));
    for (std::size_t i = 0; i < identity.size(); ++i) {
        EXPECT_NEAR(x.grad()[i], -0.5 * identity[i], 1e-10 * std::max(1.0, std::abs(identity[i])));
    }
}

TEST(FiniteDifference, NonFiniteLossIsAnError) {
    Tensor w = Tensor::from({1}, {1.0}, true);
    std::vector<Tensor> params{w};
    EXPECT_THROW(finite_difference_check(
                     [&](Tape& tape) { return scale(tape, sum(tape, w), std::numeric_limits<double>::infinity()); },
                     params),
                 std::runtime_error);
}
