#pragma once

#include <array>
#include <functional>
#include <span>
#include <vector>

#include "cheapconv/arch_ir.hpp"
#include "cheapconv/tensor.hpp"

namespace cheapconv::kernel {

struct ConvParams {
    int stride = 1;
    int dilation = 1;
    int groups = 1;
};

/// Weight tensor shape (out, in/groups, kh, kw) demanded by conv2d_forward.
std::array<int, 4> conv_weight_shape(const ConvLayer& layer);

/// Grouped, strided, dilated 2-D convolution with same-style zero padding
/// dilation*(k-1)/2 per side. input [n, c, h, w], weights [o, c/g, kh, kw].
/// Output channel block j (o/g channels) only reads input channel block j.
/// Parallel over (sample, output channel); each output is summed in a fixed
/// order, so the result is bitwise equal to conv2d_forward_serial.
Tensor4 conv2d_forward(const Tensor4& input, const Tensor4& weights, const ConvParams& params);

/// Single-threaded reference for conv2d_forward.
Tensor4 conv2d_forward_serial(const Tensor4& input, const Tensor4& weights,
                              const ConvParams& params);

/// Channel mean of squared activations per sample, flattened row-major over
/// (h, w): result[n][y * w + x] = (1/c) sum_j a[n, j, y, x]^2.
std::vector<std::vector<double>> attention_map(const Tensor4& activations);

/// softmax(logits / temperature), max-subtracted.
std::vector<double> softmax(std::span<const double> logits, double temperature = 1.0);

struct DistillConfig {
    double alpha = 0.9;
    double temperature = 4.0;
    double beta = 1000.0;
    int at_layer_count = 3;

    /// Keeps the summed AT contribution fixed as the layer count changes:
    /// beta = 3000 / layers (1000 for 3 layers, 750 for 4).
    static DistillConfig for_layers(int at_layer_count);
};

struct LogitLoss {
    double value = 0.0;
    LogitBatch grad;  // d value / d student logits
};

/// Batch-mean cross entropy of softmax(logits) against class-index labels.
LogitLoss cross_entropy(const LogitBatch& logits, std::span<const int> labels);

struct KdLoss {
    double value = 0.0;
    double hard_term = 0.0;  // (1 - alpha) * CE(y, softmax(s))
    double soft_term = 0.0;  // 2 alpha T^2 * CE(softmax(t/T), softmax(s/T))
    LogitBatch grad;
};

/// (1 - alpha) CE(y, softmax(s)) + 2 alpha T^2 CE(softmax(t/T), softmax(s/T)),
/// averaged over the batch. Throws ArchError for alpha outside [0,1] or T <= 0.
KdLoss kd_loss(const LogitBatch& student_logits, const LogitBatch& teacher_logits,
               std::span<const int> labels, double alpha, double temperature);

struct AtOptions {
    // Use ||.||^2 per layer instead of ||.||.
    bool squared_distance = false;
};

struct AtLoss {
    double value = 0.0;
    double ce_term = 0.0;
    double at_term = 0.0;  // beta * sum over layers of the batch-mean distance
    LogitBatch grad_logits;
    std::vector<Tensor4> grad_activations;
};

/// CE(y, softmax(s)) + beta * sum_i mean_n || q_t(n,i) - q_s(n,i) ||_2 where
/// q = f(A) / ||f(A)||_2 and f is attention_map. Throws ArchError when layer
/// counts or spatial dims differ, or when an attention map has zero norm.
AtLoss at_loss(const LogitBatch& student_logits, std::span<const int> labels,
               std::span<const Tensor4> student_activations,
               std::span<const Tensor4> teacher_activations, double beta,
               const AtOptions& options = {});

/// Serial reference for at_loss.
AtLoss at_loss_serial(const LogitBatch& student_logits, std::span<const int> labels,
                      std::span<const Tensor4> student_activations,
                      std::span<const Tensor4> teacher_activations, double beta,
                      const AtOptions& options = {});

struct ValueAndGradient {
    double value = 0.0;
    std::vector<double> gradient;
};

using LossFunction = std::function<ValueAndGradient(std::span<const double>)>;

struct GradientCheck {
    double max_relative_error = 0.0;
    std::size_t worst_index = 0;
    double analytic = 0.0;
    double numeric = 0.0;
};

/// Compares the analytic gradient at `point` against central differences
/// (f(x + eps e_i) - f(x - eps e_i)) / 2 eps, coordinate by coordinate.
/// Relative error is |a - n| / max(|a|, |n|, 1e-8).
GradientCheck finite_diff_check(const LossFunction& loss, std::span<const double> point,
                                double epsilon);

}  // namespace cheapconv::kernel
