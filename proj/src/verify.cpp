#include "cheapconv/verify.hpp"

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <random>

#include <fmt/format.h>

#include "cheapconv/distill.hpp"

namespace cheapconv::verify {

namespace {

using kernel::ConvParams;

constexpr double kGradTolerance = 1e-5;
constexpr double kFdStep = 1e-4;
constexpr double kExactTolerance = 1e-12;

class Timer {
public:
    double seconds() const {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    }

private:
    std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

int uniform_int(std::mt19937_64& rng, int lo, int hi) {
    return std::uniform_int_distribution<int>(lo, hi)(rng);
}

void fill_normal(std::span<double> values, std::mt19937_64& rng, double scale = 1.0) {
    std::normal_distribution<double> normal(0.0, scale);
    for (auto& v : values) v = normal(rng);
}

std::vector<int> random_labels(std::mt19937_64& rng, int batch, int classes) {
    std::vector<int> labels(static_cast<std::size_t>(batch));
    for (auto& y : labels) y = uniform_int(rng, 0, classes - 1);
    return labels;
}

LogitBatch logits_from(std::span<const double> values, int batch, int classes) {
    LogitBatch logits(batch, classes);
    std::copy(values.begin(), values.begin() + batch * classes, logits.values().begin());
    return logits;
}

// Dense convolution on an explicitly zero-padded copy of the input, groups = 1.
Tensor4 dense_conv(const Tensor4& input, const Tensor4& weights, int stride, int dilation) {
    const int n = input.dim(0), c = input.dim(1), h = input.dim(2), w = input.dim(3);
    const int o = weights.dim(0), kh = weights.dim(2), kw = weights.dim(3);
    const int ph = dilation * (kh - 1) / 2, pw = dilation * (kw - 1) / 2;
    Tensor4 padded(n, c, h + 2 * ph, w + 2 * pw);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < c; ++j)
            for (int y = 0; y < h; ++y)
                for (int x = 0; x < w; ++x) padded(i, j, y + ph, x + pw) = input(i, j, y, x);
    const int oh = (padded.dim(2) - dilation * (kh - 1) - 1) / stride + 1;
    const int ow = (padded.dim(3) - dilation * (kw - 1) - 1) / stride + 1;
    Tensor4 out(n, o, oh, ow);
    for (int i = 0; i < n; ++i)
        for (int oc = 0; oc < o; ++oc)
            for (int y = 0; y < oh; ++y)
                for (int x = 0; x < ow; ++x) {
                    double sum = 0.0;
                    for (int j = 0; j < c; ++j)
                        for (int a = 0; a < kh; ++a)
                            for (int b = 0; b < kw; ++b)
                                sum += padded(i, j, y * stride + a * dilation,
                                              x * stride + b * dilation) *
                                       weights(oc, j, a, b);
                    out(i, oc, y, x) = sum;
                }
    return out;
}

// Splits channels into `groups` blocks, convolves each densely and
// concatenates the outputs along the channel axis.
Tensor4 block_concatenated_conv(const Tensor4& input, const Tensor4& weights, int stride,
                                int dilation, int groups) {
    const int n = input.dim(0), c = input.dim(1), o = weights.dim(0);
    const int cg = c / groups, og = o / groups;
    Tensor4 out;
    for (int g = 0; g < groups; ++g) {
        Tensor4 in_slice(n, cg, input.dim(2), input.dim(3));
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < cg; ++j)
                for (int y = 0; y < input.dim(2); ++y)
                    for (int x = 0; x < input.dim(3); ++x)
                        in_slice(i, j, y, x) = input(i, g * cg + j, y, x);
        Tensor4 w_slice(og, cg, weights.dim(2), weights.dim(3));
        for (int oc = 0; oc < og; ++oc)
            for (int j = 0; j < cg; ++j)
                for (int a = 0; a < weights.dim(2); ++a)
                    for (int b = 0; b < weights.dim(3); ++b)
                        w_slice(oc, j, a, b) = weights(g * og + oc, j, a, b);
        const auto part = dense_conv(in_slice, w_slice, stride, dilation);
        if (g == 0) out = Tensor4(n, o, part.dim(2), part.dim(3));
        for (int i = 0; i < n; ++i)
            for (int oc = 0; oc < og; ++oc)
                for (int y = 0; y < part.dim(2); ++y)
                    for (int x = 0; x < part.dim(3); ++x)
                        out(i, g * og + oc, y, x) = part(i, oc, y, x);
    }
    return out;
}

double max_abs_diff(const Tensor4& a, const Tensor4& b) {
    if (a.dims() != b.dims()) return INFINITY;
    double worst = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        worst = std::max(worst, std::abs(a.values()[i] - b.values()[i]));
    }
    return worst;
}

struct ConvCase {
    Tensor4 input;
    Tensor4 weights;
    ConvParams params;
};

ConvCase random_conv_case(std::mt19937_64& rng, int group_choice) {
    const int c = 4 * uniform_int(rng, 1, 3);
    const int groups[] = {1, 2, 4, c};
    const int g = groups[group_choice];
    const int o = g * uniform_int(rng, 1, std::max(1, 12 / g));
    const int kh = uniform_int(rng, 1, 3), kw = uniform_int(rng, 1, 3);
    ConvParams p{uniform_int(rng, 1, 2), uniform_int(rng, 1, 2), g};
    const int n = uniform_int(rng, 1, 3);
    const int h = uniform_int(rng, p.dilation * (kh - 1) + 1, 8);
    const int w = uniform_int(rng, p.dilation * (kw - 1) + 1, 8);
    ConvCase cc{Tensor4(n, c, h, w), Tensor4(o, c / g, kh, kw), p};
    fill_normal(cc.input.values(), rng);
    fill_normal(cc.weights.values(), rng);
    return cc;
}

struct AtInstance {
    int batch = 1;
    int classes = 2;
    std::vector<std::array<int, 4>> student_dims;
    std::vector<Tensor4> teacher;
    std::vector<int> labels;
    std::vector<double> point;  // student logits then student activations
};

AtInstance random_at_instance(std::mt19937_64& rng) {
    AtInstance inst;
    inst.batch = uniform_int(rng, 1, 4);
    inst.classes = uniform_int(rng, 2, 10);
    inst.labels = random_labels(rng, inst.batch, inst.classes);
    std::size_t total = static_cast<std::size_t>(inst.batch) * inst.classes;
    for (int layer = 0; layer < 2; ++layer) {
        const int h = uniform_int(rng, 2, 8), w = uniform_int(rng, 2, 8);
        inst.student_dims.push_back({inst.batch, uniform_int(rng, 1, 8), h, w});
        Tensor4 t(inst.batch, uniform_int(rng, 1, 8), h, w);
        fill_normal(t.values(), rng);
        inst.teacher.push_back(std::move(t));
        total += static_cast<std::size_t>(inst.batch) * inst.student_dims.back()[1] * h * w;
    }
    inst.point.resize(total);
    fill_normal(inst.point, rng);
    return inst;
}

std::vector<Tensor4> unpack_activations(const AtInstance& inst, std::span<const double> x) {
    std::vector<Tensor4> acts;
    std::size_t offset = static_cast<std::size_t>(inst.batch) * inst.classes;
    for (const auto& dims : inst.student_dims) {
        Tensor4 t(dims);
        std::copy(x.begin() + offset, x.begin() + offset + t.size(), t.values().begin());
        offset += t.size();
        acts.push_back(std::move(t));
    }
    return acts;
}

}  // namespace

SuiteResult kd_gradient_suite(const SuiteOptions& options) {
    Timer timer;
    std::mt19937_64 rng(options.seed);
    double worst = 0.0;
    for (int i = 0; i < options.gradient_instances; ++i) {
        const int batch = uniform_int(rng, 1, 8), classes = uniform_int(rng, 2, 10);
        std::vector<double> student(static_cast<std::size_t>(batch) * classes);
        LogitBatch teacher(batch, classes);
        fill_normal(student, rng, 3.0);
        fill_normal(teacher.values(), rng, 3.0);
        const auto labels = random_labels(rng, batch, classes);
        const auto config = kernel::DistillConfig{};
        kernel::LossFunction fn = [&](std::span<const double> x) {
            auto loss = kernel::kd_loss(logits_from(x, batch, classes), teacher, labels,
                                        config.alpha, config.temperature);
            return kernel::ValueAndGradient{
                loss.value, {loss.grad.values().begin(), loss.grad.values().end()}};
        };
        worst = std::max(worst, kernel::finite_diff_check(fn, student, kFdStep).max_relative_error);
    }
    return {"kd_loss gradient vs central differences", worst < kGradTolerance,
            fmt::format("{} instances, max rel err {:.3e} (tol {:.0e})",
                        options.gradient_instances, worst, kGradTolerance),
            timer.seconds()};
}

SuiteResult at_gradient_suite(const SuiteOptions& options) {
    Timer timer;
    std::mt19937_64 rng(options.seed + 1);
    double worst = 0.0;
    const double beta = kernel::DistillConfig{}.beta;
    for (int i = 0; i < options.gradient_instances; ++i) {
        const auto inst = random_at_instance(rng);
        kernel::LossFunction fn = [&](std::span<const double> x) {
            const auto acts = unpack_activations(inst, x);
            auto loss = kernel::at_loss(logits_from(x, inst.batch, inst.classes), inst.labels,
                                        acts, inst.teacher, beta);
            kernel::ValueAndGradient out{loss.value, {}};
            out.gradient.assign(loss.grad_logits.values().begin(),
                                loss.grad_logits.values().end());
            for (const auto& g : loss.grad_activations) {
                out.gradient.insert(out.gradient.end(), g.values().begin(), g.values().end());
            }
            return out;
        };
        worst = std::max(worst,
                         kernel::finite_diff_check(fn, inst.point, kFdStep).max_relative_error);
    }
    return {"at_loss gradient vs central differences", worst < kGradTolerance,
            fmt::format("{} instances, max rel err {:.3e} (tol {:.0e})",
                        options.gradient_instances, worst, kGradTolerance),
            timer.seconds()};
}

SuiteResult kd_alpha_zero_suite(const SuiteOptions& options) {
    Timer timer;
    std::mt19937_64 rng(options.seed + 2);
    double worst = 0.0;
    for (int i = 0; i < options.gradient_instances; ++i) {
        const int batch = uniform_int(rng, 1, 8), classes = uniform_int(rng, 2, 10);
        LogitBatch student(batch, classes), teacher(batch, classes);
        fill_normal(student.values(), rng, 3.0);
        fill_normal(teacher.values(), rng, 3.0);
        const auto labels = random_labels(rng, batch, classes);
        const double kd = kernel::kd_loss(student, teacher, labels, 0.0, 4.0).value;
        // plain CE written out directly
        double ce = 0.0;
        for (int b = 0; b < batch; ++b) {
            double z = 0.0;
            for (int c = 0; c < classes; ++c) z += std::exp(student(b, c));
            ce += std::log(z) - student(b, labels[b]);
        }
        ce /= batch;
        worst = std::max(worst, std::abs(kd - ce));
    }
    return {"kd_loss(alpha=0) equals cross-entropy", worst < kExactTolerance,
            fmt::format("{} instances, max |diff| {:.3e} (tol {:.0e})",
                        options.gradient_instances, worst, kExactTolerance),
            timer.seconds()};
}

SuiteResult at_scale_invariance_suite(const SuiteOptions& options) {
    Timer timer;
    std::mt19937_64 rng(options.seed + 3);
    std::uniform_real_distribution<double> scale_dist(0.1, 10.0);
    double worst = 0.0;
    for (int i = 0; i < options.gradient_instances; ++i) {
        const auto inst = random_at_instance(rng);
        const auto logits = logits_from(inst.point, inst.batch, inst.classes);
        // student = per-layer scalar multiple of the teacher
        std::vector<Tensor4> student;
        for (const auto& t : inst.teacher) {
            Tensor4 s = t;
            const double k = scale_dist(rng) * (uniform_int(rng, 0, 1) ? 1.0 : -1.0);
            for (auto& v : s.values()) v *= k;
            student.push_back(std::move(s));
        }
        const auto loss = kernel::at_loss(logits, inst.labels, student, inst.teacher, 1000.0);
        worst = std::max(worst, std::abs(loss.at_term));
    }
    return {"AT term vanishes under per-layer scaling", worst < kExactTolerance,
            fmt::format("{} instances, max |AT term| {:.3e} (tol {:.0e})",
                        options.gradient_instances, worst, kExactTolerance),
            timer.seconds()};
}

SuiteResult grouped_conv_suite(const SuiteOptions& options) {
    Timer timer;
    std::mt19937_64 rng(options.seed + 4);
    double worst = 0.0;
    int cases = 0;
    for (int i = 0; i < options.conv_shapes; ++i) {
        for (int choice = 0; choice < 4; ++choice) {
            auto cc = random_conv_case(rng, choice);
            const auto got = kernel::conv2d_forward(cc.input, cc.weights, cc.params);
            const auto want = block_concatenated_conv(cc.input, cc.weights, cc.params.stride,
                                                      cc.params.dilation, cc.params.groups);
            worst = std::max(worst, max_abs_diff(got, want));
            ++cases;
        }
    }
    return {"grouped conv2d vs block-concatenated dense oracle", worst < kExactTolerance,
            fmt::format("{} cases (g in 1,2,4,c), max |diff| {:.3e} (tol {:.0e})", cases, worst,
                        kExactTolerance),
            timer.seconds()};
}

SuiteResult parallel_conv_suite(const SuiteOptions& options) {
    Timer timer;
    std::mt19937_64 rng(options.seed + 5);
    bool identical = true;
    for (int i = 0; i < options.conv_shapes; ++i) {
        auto cc = random_conv_case(rng, i % 4);
        identical = identical && kernel::conv2d_forward(cc.input, cc.weights, cc.params) ==
                                     kernel::conv2d_forward_serial(cc.input, cc.weights, cc.params);
    }
    return {"parallel conv2d bitwise equals serial reference", identical,
            fmt::format("{} cases", options.conv_shapes), timer.seconds()};
}

std::vector<SuiteResult> run_all(const SuiteOptions& options) {
    return {kd_gradient_suite(options),        at_gradient_suite(options),
            kd_alpha_zero_suite(options),      at_scale_invariance_suite(options),
            grouped_conv_suite(options),       parallel_conv_suite(options)};
}

}  // namespace cheapconv::verify
