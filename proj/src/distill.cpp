#include "cheapconv/distill.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include <fmt/format.h>

namespace cheapconv::kernel {

namespace {

void check_labels(std::span<const int> labels, int batch, int classes) {
    if (static_cast<int>(labels.size()) != batch) {
        throw ArchError(fmt::format("{} labels for a batch of {}", labels.size(), batch));
    }
    for (int y : labels) {
        if (y < 0 || y >= classes) {
            throw ArchError(fmt::format("label {} outside [0, {})", y, classes));
        }
    }
}

// log softmax(logits / T), max-subtracted.
std::vector<double> log_softmax(std::span<const double> logits, double temperature) {
    const double top = *std::max_element(logits.begin(), logits.end()) / temperature;
    double sum = 0.0;
    for (double v : logits) sum += std::exp(v / temperature - top);
    const double log_z = top + std::log(sum);
    std::vector<double> out(logits.size());
    for (std::size_t i = 0; i < logits.size(); ++i) out[i] = logits[i] / temperature - log_z;
    return out;
}

std::vector<double> attention_of_sample(const Tensor4& a, int n) {
    const int c = a.dim(1);
    const int hw = a.dim(2) * a.dim(3);
    std::vector<double> map(static_cast<std::size_t>(hw), 0.0);
    const double* base = a.values().data() + a.offset(n, 0, 0, 0);
    for (int j = 0; j < c; ++j) {
        const double* channel = base + static_cast<std::size_t>(j) * hw;
        for (int p = 0; p < hw; ++p) map[p] += channel[p] * channel[p];
    }
    for (auto& v : map) v /= c;
    return map;
}

double norm2(const std::vector<double>& v) {
    return std::sqrt(std::inner_product(v.begin(), v.end(), v.begin(), 0.0));
}

void check_at_inputs(const LogitBatch& logits, std::span<const Tensor4> student,
                     std::span<const Tensor4> teacher) {
    if (student.size() != teacher.size()) {
        throw ArchError(fmt::format("{} student activation layers vs {} teacher layers",
                                    student.size(), teacher.size()));
    }
    for (std::size_t i = 0; i < student.size(); ++i) {
        const auto& s = student[i].dims();
        const auto& t = teacher[i].dims();
        if (s[0] != logits.batch() || t[0] != logits.batch()) {
            throw ArchError(fmt::format("layer {}: activation batch differs from logit batch {}",
                                        i, logits.batch()));
        }
        if (s[2] != t[2] || s[3] != t[3]) {
            throw ArchError(fmt::format("layer {}: student spatial dims {}x{} differ from "
                                        "teacher {}x{}",
                                        i, s[2], s[3], t[2], t[3]));
        }
        if (s[1] < 1 || t[1] < 1 || s[2] * s[3] < 1) {
            throw ArchError(fmt::format("layer {}: empty activation tensor", i));
        }
    }
}

// Distance term and its gradient for one (layer, sample). grad is written into
// grad_acts for sample n, scaled by `scale`.
double at_sample(const Tensor4& student, const Tensor4& teacher, int n, std::size_t layer,
                 double scale, const AtOptions& options, Tensor4& grad_acts) {
    const auto fs = attention_of_sample(student, n);
    const auto ft = attention_of_sample(teacher, n);
    const double ns = norm2(fs);
    const double nt = norm2(ft);
    if (ns == 0.0 || nt == 0.0) {
        throw ArchError(fmt::format("layer {}, sample {}: {} attention map has zero norm", layer,
                                    n, ns == 0.0 ? "student" : "teacher"));
    }
    const std::size_t hw = fs.size();
    std::vector<double> qs(hw), diff(hw);
    for (std::size_t p = 0; p < hw; ++p) {
        qs[p] = fs[p] / ns;
        diff[p] = ft[p] / nt - qs[p];
    }
    const double dist = norm2(diff);
    const double value = options.squared_distance ? dist * dist : dist;

    // d value / d qs
    std::vector<double> g(hw, 0.0);
    if (options.squared_distance) {
        for (std::size_t p = 0; p < hw; ++p) g[p] = -2.0 * diff[p];
    } else if (dist > 0.0) {
        for (std::size_t p = 0; p < hw; ++p) g[p] = -diff[p] / dist;
    }
    // through q = f / ||f||: (g - q (q.g)) / ||f||
    const double qg = std::inner_product(qs.begin(), qs.end(), g.begin(), 0.0);
    for (std::size_t p = 0; p < hw; ++p) g[p] = (g[p] - qs[p] * qg) / ns;

    // through f = mean_c a^2
    const int c = student.dim(1);
    const double* a = student.values().data() + student.offset(n, 0, 0, 0);
    double* out = grad_acts.values().data() + grad_acts.offset(n, 0, 0, 0);
    for (int j = 0; j < c; ++j) {
        for (std::size_t p = 0; p < hw; ++p) {
            const std::size_t idx = static_cast<std::size_t>(j) * hw + p;
            out[idx] = scale * g[p] * 2.0 * a[idx] / c;
        }
    }
    return value;
}

AtLoss at_loss_impl(const LogitBatch& logits, std::span<const int> labels,
                    std::span<const Tensor4> student, std::span<const Tensor4> teacher,
                    double beta, const AtOptions& options, bool parallel) {
    check_at_inputs(logits, student, teacher);
    if (!(beta >= 0.0)) {
        throw ArchError(fmt::format("beta must be nonnegative, got {}", beta));
    }
    auto ce = cross_entropy(logits, labels);

    AtLoss result;
    result.ce_term = ce.value;
    result.grad_logits = std::move(ce.grad);
    const int batch = logits.batch();
    const double scale = beta / batch;

    double at_sum = 0.0;
    for (std::size_t layer = 0; layer < student.size(); ++layer) {
        Tensor4 grad(student[layer].dims());
        std::vector<double> per_sample(static_cast<std::size_t>(batch), 0.0);
        if (parallel) {
            // Exceptions must not escape the parallel region.
            std::vector<std::string> errors(static_cast<std::size_t>(batch));
#pragma omp parallel for schedule(static)
            for (int n = 0; n < batch; ++n) {
                try {
                    per_sample[n] = at_sample(student[layer], teacher[layer], n, layer, scale,
                                              options, grad);
                } catch (const ArchError& e) {
                    errors[n] = e.what();
                }
            }
            for (const auto& e : errors) {
                if (!e.empty()) throw ArchError(e);
            }
        } else {
            for (int n = 0; n < batch; ++n) {
                per_sample[n] =
                    at_sample(student[layer], teacher[layer], n, layer, scale, options, grad);
            }
        }
        // fixed index-order reduction
        double layer_sum = 0.0;
        for (double v : per_sample) layer_sum += v;
        at_sum += layer_sum / batch;
        result.grad_activations.push_back(std::move(grad));
    }
    result.at_term = beta * at_sum;
    result.value = result.ce_term + result.at_term;
    return result;
}

}  // namespace

std::vector<std::vector<double>> attention_map(const Tensor4& activations) {
    if (activations.dim(1) < 1) {
        throw ArchError("attention_map needs at least one channel");
    }
    std::vector<std::vector<double>> maps(static_cast<std::size_t>(activations.dim(0)));
    const int batch = activations.dim(0);
#pragma omp parallel for schedule(static)
    for (int n = 0; n < batch; ++n) {
        maps[n] = attention_of_sample(activations, n);
    }
    return maps;
}

std::vector<double> softmax(std::span<const double> logits, double temperature) {
    if (!(temperature > 0.0)) {
        throw ArchError(fmt::format("temperature must be positive, got {}", temperature));
    }
    if (logits.empty()) return {};
    auto out = log_softmax(logits, temperature);
    for (auto& v : out) v = std::exp(v);
    return out;
}

DistillConfig DistillConfig::for_layers(int at_layer_count) {
    if (at_layer_count < 1) {
        throw ArchError(fmt::format("at_layer_count must be positive, got {}", at_layer_count));
    }
    DistillConfig config;
    config.at_layer_count = at_layer_count;
    config.beta = 3000.0 / at_layer_count;
    return config;
}

LogitLoss cross_entropy(const LogitBatch& logits, std::span<const int> labels) {
    check_labels(labels, logits.batch(), logits.classes());
    LogitLoss loss;
    loss.grad = LogitBatch(logits.batch(), logits.classes());
    const double inv_batch = 1.0 / logits.batch();
    for (int b = 0; b < logits.batch(); ++b) {
        const auto logp = log_softmax(logits.row(b), 1.0);
        loss.value -= logp[labels[b]];
        auto g = loss.grad.row(b);
        for (int c = 0; c < logits.classes(); ++c) {
            g[c] = (std::exp(logp[c]) - (c == labels[b] ? 1.0 : 0.0)) * inv_batch;
        }
    }
    loss.value *= inv_batch;
    return loss;
}

KdLoss kd_loss(const LogitBatch& student, const LogitBatch& teacher, std::span<const int> labels,
               double alpha, double temperature) {
    if (!(alpha >= 0.0 && alpha <= 1.0)) {
        throw ArchError(fmt::format("alpha must lie in [0, 1], got {}", alpha));
    }
    if (!(temperature > 0.0)) {
        throw ArchError(fmt::format("temperature must be positive, got {}", temperature));
    }
    if (student.batch() != teacher.batch() || student.classes() != teacher.classes()) {
        throw ArchError(fmt::format("student logits {}x{} vs teacher logits {}x{}",
                                    student.batch(), student.classes(), teacher.batch(),
                                    teacher.classes()));
    }
    check_labels(labels, student.batch(), student.classes());

    const double t = temperature;
    const double soft_weight = 2.0 * alpha * t * t;
    const double inv_batch = 1.0 / student.batch();

    KdLoss loss;
    loss.grad = LogitBatch(student.batch(), student.classes());
    for (int b = 0; b < student.batch(); ++b) {
        const auto logp = log_softmax(student.row(b), 1.0);
        const auto logp_soft = log_softmax(student.row(b), t);
        const auto logq_soft = log_softmax(teacher.row(b), t);

        double soft_ce = 0.0;
        for (int c = 0; c < student.classes(); ++c) {
            soft_ce -= std::exp(logq_soft[c]) * logp_soft[c];
        }
        loss.hard_term += (1.0 - alpha) * -logp[labels[b]];
        loss.soft_term += soft_weight * soft_ce;

        // d/ds of CE(q, softmax(s/T)) is (softmax(s/T) - q) / T
        auto g = loss.grad.row(b);
        for (int c = 0; c < student.classes(); ++c) {
            const double hard = std::exp(logp[c]) - (c == labels[b] ? 1.0 : 0.0);
            const double soft = (std::exp(logp_soft[c]) - std::exp(logq_soft[c])) / t;
            g[c] = ((1.0 - alpha) * hard + soft_weight * soft) * inv_batch;
        }
    }
    loss.hard_term *= inv_batch;
    loss.soft_term *= inv_batch;
    loss.value = loss.hard_term + loss.soft_term;
    return loss;
}

AtLoss at_loss(const LogitBatch& student_logits, std::span<const int> labels,
               std::span<const Tensor4> student_activations,
               std::span<const Tensor4> teacher_activations, double beta,
               const AtOptions& options) {
    return at_loss_impl(student_logits, labels, student_activations, teacher_activations, beta,
                        options, true);
}

AtLoss at_loss_serial(const LogitBatch& student_logits, std::span<const int> labels,
                      std::span<const Tensor4> student_activations,
                      std::span<const Tensor4> teacher_activations, double beta,
                      const AtOptions& options) {
    return at_loss_impl(student_logits, labels, student_activations, teacher_activations, beta,
                        options, false);
}

GradientCheck finite_diff_check(const LossFunction& loss, std::span<const double> point,
                                double epsilon) {
    if (!(epsilon > 0.0)) {
        throw ArchError(fmt::format("finite-difference step must be positive, got {}", epsilon));
    }
    const auto analytic = loss(point).gradient;
    if (analytic.size() != point.size()) {
        throw ArchError(fmt::format("gradient has {} entries for a {}-dimensional point",
                                    analytic.size(), point.size()));
    }
    std::vector<double> x(point.begin(), point.end());
    GradientCheck check;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double saved = x[i];
        x[i] = saved + epsilon;
        const double up = loss(x).value;
        x[i] = saved - epsilon;
        const double down = loss(x).value;
        x[i] = saved;
        const double numeric = (up - down) / (2.0 * epsilon);
        const double denom = std::max({std::abs(analytic[i]), std::abs(numeric), 1e-8});
        const double rel = std::abs(analytic[i] - numeric) / denom;
        if (i == 0 || rel > check.max_relative_error) {
            check = {rel, i, analytic[i], numeric};
        }
    }
    return check;
}

}  // namespace cheapconv::kernel
