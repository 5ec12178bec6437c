#include <gtest/gtest.h>

#include <cmath>
#include <numeric>
#include <random>

#include "cheapconv/distill.hpp"
#include "cheapconv/verify.hpp"

using namespace cheapconv;
using namespace cheapconv::kernel;

namespace {

Tensor4 random_tensor(std::mt19937_64& rng, int a, int b, int c, int d) {
    Tensor4 t(a, b, c, d);
    std::normal_distribution<double> normal;
    for (auto& v : t.values()) v = normal(rng);
    return t;
}

LogitBatch random_logits(std::mt19937_64& rng, int batch, int classes, double scale = 2.0) {
    LogitBatch l(batch, classes);
    std::normal_distribution<double> normal(0.0, scale);
    for (auto& v : l.values()) v = normal(rng);
    return l;
}

double entropy(std::span<const double> p) {
    double h = 0.0;
    for (double v : p) h -= v * std::log(v);
    return h;
}

}  // namespace

TEST(Conv2d, IdentityKernelCopiesInput) {
    std::mt19937_64 rng(1);
    const auto x = random_tensor(rng, 2, 3, 5, 4);
    Tensor4 w(3, 3, 3, 3);
    for (int c = 0; c < 3; ++c) w(c, c, 1, 1) = 1.0;
    EXPECT_EQ(conv2d_forward(x, w, {}), x);
}

TEST(Conv2d, HandComputedSum) {
    // 1 channel, 3x3 of ones, all-ones kernel: corners see 4, edges 6, centre 9
    const Tensor4 x(1, 1, 3, 3, 1.0);
    const Tensor4 w(1, 1, 3, 3, 1.0);
    const auto y = conv2d_forward(x, w, {});
    EXPECT_EQ(y(0, 0, 0, 0), 4.0);
    EXPECT_EQ(y(0, 0, 0, 1), 6.0);
    EXPECT_EQ(y(0, 0, 1, 1), 9.0);
    const auto strided = conv2d_forward(x, w, {.stride = 2});
    EXPECT_EQ(strided.dims(), (std::array<int, 4>{1, 1, 2, 2}));
    EXPECT_EQ(strided(0, 0, 1, 1), 4.0);
}

TEST(Conv2d, DepthwiseChannelsAreIndependent) {
    std::mt19937_64 rng(2);
    const auto x = random_tensor(rng, 1, 4, 6, 6);
    const auto w = random_tensor(rng, 4, 1, 3, 3);
    const auto y = conv2d_forward(x, w, {.groups = 4});
    auto x2 = x;
    for (int i = 0; i < 6; ++i) x2(0, 2, i, i) += 1.0;  // perturb channel 2 only
    const auto y2 = conv2d_forward(x2, w, {.groups = 4});
    for (int c : {0, 1, 3}) {
        for (int i = 0; i < 6; ++i) {
            for (int j = 0; j < 6; ++j) EXPECT_EQ(y(0, c, i, j), y2(0, c, i, j));
        }
    }
}

TEST(Conv2d, DilatedTwoByTwoSeesThreeByThreeCorners) {
    const Tensor4 w(1, 1, 2, 2, 1.0);
    Tensor4 x(1, 1, 5, 5);
    x(0, 0, 0, 0) = 1.0;
    x(0, 0, 2, 2) = 10.0;
    const auto y = conv2d_forward(x, w, {.dilation = 2});
    ASSERT_EQ(y.dim(2), 5);
    // padding 1: output (1,1) reads (0,0), (0,2), (2,0), (2,2)
    EXPECT_EQ(y(0, 0, 1, 1), 11.0);
}

TEST(Conv2d, RejectsBadShapes) {
    const Tensor4 x(1, 4, 4, 4);
    EXPECT_THROW(conv2d_forward(x, Tensor4(4, 3, 3, 3), {}), ArchError);
    EXPECT_THROW(conv2d_forward(x, Tensor4(4, 4, 3, 3), {.groups = 3}), ArchError);
    EXPECT_THROW(conv2d_forward(x, Tensor4(4, 2, 3, 3), {.stride = 0, .groups = 2}), ArchError);
}

TEST(Conv2d, WeightShapeFromLayer) {
    const ConvLayer layer{32, 64, 3, 3, 1, 1, 4, ConvRole::block_spatial};
    EXPECT_EQ(conv_weight_shape(layer), (std::array<int, 4>{64, 8, 3, 3}));
}

TEST(AttentionMap, Examples) {
    const auto ones = attention_map(Tensor4(2, 5, 3, 3, 1.0));
    ASSERT_EQ(ones.size(), 2u);
    for (double v : ones[1]) EXPECT_EQ(v, 1.0);

    std::mt19937_64 rng(3);
    const auto single = random_tensor(rng, 1, 1, 2, 3);
    const auto map = attention_map(single);
    for (int i = 0; i < 2; ++i) {
        for (int j = 0; j < 3; ++j) EXPECT_EQ(map[0][i * 3 + j], single(0, 0, i, j) * single(0, 0, i, j));
    }

    Tensor4 pair(1, 2, 2, 2);
    for (int i = 0; i < 2; ++i) {
        for (int j = 0; j < 2; ++j) {
            pair(0, 0, i, j) = single(0, 0, i, j);
            pair(0, 1, i, j) = -single(0, 0, i, j);
        }
    }
    const auto vv = attention_map(pair);
    EXPECT_DOUBLE_EQ(vv[0][3], single(0, 0, 1, 1) * single(0, 0, 1, 1));
}

TEST(Softmax, SumsToOneAndIsStable) {
    const std::vector<double> big{1000.0, 1001.0, 999.0};
    for (double t : {1.0, 4.0, 0.5}) {
        const auto p = softmax(big, t);
        EXPECT_NEAR(std::accumulate(p.begin(), p.end(), 0.0), 1.0, 1e-12);
        for (double v : p) EXPECT_TRUE(std::isfinite(v));
    }
    const auto flat = softmax(std::vector<double>{2.0, 2.0});
    EXPECT_DOUBLE_EQ(flat[0], 0.5);
}

TEST(KdLoss, AlphaZeroIsCrossEntropy) {
    std::mt19937_64 rng(4);
    const auto s = random_logits(rng, 4, 10);
    const auto t = random_logits(rng, 4, 10);
    const std::vector<int> y{0, 3, 9, 3};
    const auto kd = kd_loss(s, t, y, 0.0, 4.0);
    const auto ce = cross_entropy(s, y);
    EXPECT_NEAR(kd.value, ce.value, 1e-12);
    EXPECT_EQ(kd.soft_term, 0.0);
    for (std::size_t i = 0; i < ce.grad.values().size(); ++i) {
        EXPECT_NEAR(kd.grad.values()[i], ce.grad.values()[i], 1e-15);
    }
}

TEST(KdLoss, SelfDistillationAtUnitTemperatureIsTwiceEntropy) {
    std::mt19937_64 rng(5);
    const auto t = random_logits(rng, 3, 6);
    const std::vector<int> y{1, 2, 5};
    const auto kd = kd_loss(t, t, y, 1.0, 1.0);
    double mean_entropy = 0.0;
    for (int b = 0; b < 3; ++b) mean_entropy += entropy(softmax(t.row(b)));
    EXPECT_NEAR(kd.value, 2.0 * mean_entropy / 3.0, 1e-12);
}

TEST(KdLoss, TemperatureSquaredFactor) {
    std::mt19937_64 rng(6);
    const auto s = random_logits(rng, 2, 5);
    const auto t = random_logits(rng, 2, 5);
    const std::vector<int> y{0, 1};
    const auto kd = kd_loss(s, t, y, 0.5, 3.0);
    double soft = 0.0;
    for (int b = 0; b < 2; ++b) {
        const auto pt = softmax(t.row(b), 3.0);
        const auto ps = softmax(s.row(b), 3.0);
        for (int c = 0; c < 5; ++c) soft -= pt[c] * std::log(ps[c]);
    }
    EXPECT_NEAR(kd.soft_term, 2.0 * 0.5 * 9.0 * soft / 2.0, 1e-12);
    EXPECT_NEAR(kd.value, kd.hard_term + kd.soft_term, 1e-12);
}

TEST(KdLoss, RejectsBadArguments) {
    const LogitBatch s(1, 3), t(1, 3), other(1, 4);
    const std::vector<int> y{0};
    EXPECT_THROW(kd_loss(s, t, y, -0.1, 4.0), ArchError);
    EXPECT_THROW(kd_loss(s, t, y, 1.1, 4.0), ArchError);
    EXPECT_THROW(kd_loss(s, t, y, 0.5, 0.0), ArchError);
    EXPECT_THROW(kd_loss(s, other, y, 0.5, 4.0), ArchError);
    EXPECT_THROW(kd_loss(s, t, std::vector<int>{3}, 0.5, 4.0), ArchError);
}

TEST(AtLoss, IdenticalActivationsGiveCrossEntropy) {
    std::mt19937_64 rng(7);
    const auto s = random_logits(rng, 2, 4);
    const std::vector<int> y{1, 3};
    const std::vector<Tensor4> acts{random_tensor(rng, 2, 3, 4, 4), random_tensor(rng, 2, 5, 2, 2)};
    const auto at = at_loss(s, y, acts, acts, 1000.0);
    EXPECT_EQ(at.at_term, 0.0);
    EXPECT_NEAR(at.value, cross_entropy(s, y).value, 1e-15);
}

TEST(AtLoss, ScaleInvariance) {
    std::mt19937_64 rng(8);
    const auto s = random_logits(rng, 2, 4);
    const std::vector<int> y{0, 2};
    const std::vector<Tensor4> teacher{random_tensor(rng, 2, 6, 4, 4)};
    for (double k : {-3.0, 0.01, 7.5}) {
        auto student = teacher;
        for (auto& v : student[0].values()) v *= k;
        EXPECT_NEAR(at_loss(s, y, student, teacher, 1000.0).at_term, 0.0, 1e-12) << k;
    }
}

TEST(AtLoss, ChannelCountsMayDiffer) {
    std::mt19937_64 rng(9);
    const auto s = random_logits(rng, 1, 3);
    const std::vector<int> y{2};
    const std::vector<Tensor4> student{random_tensor(rng, 1, 2, 3, 3)};
    const std::vector<Tensor4> teacher{random_tensor(rng, 1, 7, 3, 3)};
    const auto at = at_loss(s, y, student, teacher, 1.0);
    // distance between unit vectors lies in [0, 2]
    EXPECT_GT(at.at_term, 0.0);
    EXPECT_LE(at.at_term, 2.0);
    ASSERT_EQ(at.grad_activations.size(), 1u);
    EXPECT_EQ(at.grad_activations[0].dims(), student[0].dims());
}

TEST(AtLoss, SquaredOptionSquaresEachDistance) {
    std::mt19937_64 rng(10);
    const auto s = random_logits(rng, 1, 3);
    const std::vector<int> y{0};
    const std::vector<Tensor4> student{random_tensor(rng, 1, 2, 3, 3)};
    const std::vector<Tensor4> teacher{random_tensor(rng, 1, 4, 3, 3)};
    const double d = at_loss(s, y, student, teacher, 1.0).at_term;
    EXPECT_NEAR(at_loss(s, y, student, teacher, 1.0, {.squared_distance = true}).at_term, d * d,
                1e-14);
}

TEST(AtLoss, RejectsZeroNormAndMismatches) {
    std::mt19937_64 rng(11);
    const auto s = random_logits(rng, 1, 3);
    const std::vector<int> y{0};
    const std::vector<Tensor4> teacher{random_tensor(rng, 1, 2, 3, 3)};
    EXPECT_THROW(at_loss(s, y, std::vector<Tensor4>{Tensor4(1, 2, 3, 3)}, teacher, 1.0), ArchError);
    EXPECT_THROW(at_loss(s, y, std::vector<Tensor4>{random_tensor(rng, 1, 2, 3, 4)}, teacher, 1.0),
                 ArchError);
    EXPECT_THROW(at_loss(s, y, std::vector<Tensor4>{}, teacher, 1.0), ArchError);
}

TEST(AtLoss, ParallelMatchesSerialBitwise) {
    std::mt19937_64 rng(12);
    const auto s = random_logits(rng, 4, 10);
    const std::vector<int> y{0, 1, 2, 3};
    const std::vector<Tensor4> student{random_tensor(rng, 4, 3, 8, 8), random_tensor(rng, 4, 8, 4, 4)};
    const std::vector<Tensor4> teacher{random_tensor(rng, 4, 5, 8, 8), random_tensor(rng, 4, 6, 4, 4)};
    const auto a = at_loss(s, y, student, teacher, 1000.0);
    const auto b = at_loss_serial(s, y, student, teacher, 1000.0);
    EXPECT_EQ(a.value, b.value);
    EXPECT_EQ(a.grad_logits, b.grad_logits);
    EXPECT_EQ(a.grad_activations, b.grad_activations);
}

TEST(AtLoss, GradientAgreesWithRichardsonExtrapolation) {
    // Fourth-order difference, far below the two-point truncation error.
    std::mt19937_64 rng(13);
    for (int trial = 0; trial < 5; ++trial) {
        const auto s = random_logits(rng, 2, 5);
        const std::vector<int> y{1, 4};
        const std::vector<Tensor4> student{random_tensor(rng, 2, 3, 4, 4),
                                           random_tensor(rng, 2, 2, 3, 3)};
        const std::vector<Tensor4> teacher{random_tensor(rng, 2, 4, 4, 4),
                                           random_tensor(rng, 2, 5, 3, 3)};
        const auto base = at_loss(s, y, student, teacher, 1000.0);
        for (std::size_t layer = 0; layer < 2; ++layer) {
            for (std::size_t i = 0; i < student[layer].size(); ++i) {
                const auto value_at = [&](double h) {
                    auto moved = student;
                    moved[layer].values()[i] += h;
                    return at_loss(s, y, moved, teacher, 1000.0).value;
                };
                const auto central = [&](double h) {
                    return (value_at(h) - value_at(-h)) / (2 * h);
                };
                const double numeric = (4 * central(1e-3) - central(2e-3)) / 3;
                const double analytic = base.grad_activations[layer].values()[i];
                EXPECT_NEAR(analytic, numeric, 1e-7 + 1e-4 * std::abs(analytic));
            }
        }
    }
}

TEST(DistillConfig, BetaSplitsAcrossLayers) {
    EXPECT_EQ(DistillConfig{}.beta, 1000.0);
    EXPECT_EQ(DistillConfig::for_layers(3).beta, 1000.0);
    EXPECT_EQ(DistillConfig::for_layers(4).beta, 750.0);
    EXPECT_EQ(DistillConfig::for_layers(4).at_layer_count, 4);
}

TEST(FiniteDiff, QuadraticIsExact) {
    std::mt19937_64 rng(14);
    std::normal_distribution<double> normal;
    std::vector<double> x(20);
    for (auto& v : x) v = normal(rng);
    const LossFunction f = [](std::span<const double> p) {
        ValueAndGradient out;
        for (double v : p) {
            out.value += v * v;
            out.gradient.push_back(2 * v);
        }
        return out;
    };
    EXPECT_LT(finite_diff_check(f, x, 1e-4).max_relative_error, 1e-9);
}

TEST(FiniteDiff, DetectsAWrongGradient) {
    const LossFunction f = [](std::span<const double> p) {
        return ValueAndGradient{p[0] * p[0] * p[0], {2 * p[0]}};
    };
    const std::vector<double> x{1.5};
    const auto check = finite_diff_check(f, x, 1e-4);
    EXPECT_GT(check.max_relative_error, 0.1);
    EXPECT_EQ(check.worst_index, 0u);
}

TEST(VerifySuites, ShortRunsPass) {
    const verify::SuiteOptions options{.seed = 7, .gradient_instances = 10, .conv_shapes = 10};
    EXPECT_TRUE(verify::kd_gradient_suite(options).passed);
    EXPECT_TRUE(verify::kd_alpha_zero_suite(options).passed);
    EXPECT_TRUE(verify::at_scale_invariance_suite(options).passed);
    EXPECT_TRUE(verify::grouped_conv_suite(options).passed);
    EXPECT_TRUE(verify::parallel_conv_suite(options).passed);
}
