#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <vector>

namespace cheapconv {

/// Dense row-major 4-D array of doubles: (batch or out-channels, channels, height, width).
class Tensor4 {
public:
    Tensor4() = default;
    Tensor4(int d0, int d1, int d2, int d3, double fill = 0.0);
    explicit Tensor4(const std::array<int, 4>& dims, double fill = 0.0)
        : Tensor4(dims[0], dims[1], dims[2], dims[3], fill) {}

    const std::array<int, 4>& dims() const { return dims_; }
    int dim(int axis) const { return dims_[static_cast<std::size_t>(axis)]; }
    std::size_t size() const { return data_.size(); }

    double& operator()(int i, int j, int k, int l) { return data_[offset(i, j, k, l)]; }
    double operator()(int i, int j, int k, int l) const { return data_[offset(i, j, k, l)]; }

    std::span<double> values() { return data_; }
    std::span<const double> values() const { return data_; }

    /// Row-major offset of element (i, j, k, l).
    std::size_t offset(int i, int j, int k, int l) const {
        return ((static_cast<std::size_t>(i) * dims_[1] + j) * dims_[2] + k) * dims_[3] + l;
    }

    bool all_finite() const;

    bool operator==(const Tensor4&) const = default;

private:
    std::array<int, 4> dims_{0, 0, 0, 0};
    std::vector<double> data_;
};

/// batch x classes matrix of logits (or of their gradients).
class LogitBatch {
public:
    LogitBatch() = default;
    LogitBatch(int batch, int classes, double fill = 0.0);

    int batch() const { return batch_; }
    int classes() const { return classes_; }

    double& operator()(int b, int c) { return values_[index(b, c)]; }
    double operator()(int b, int c) const { return values_[index(b, c)]; }

    std::span<double> row(int b) { return std::span(values_).subspan(index(b, 0), classes_); }
    std::span<const double> row(int b) const {
        return std::span(values_).subspan(index(b, 0), classes_);
    }

    std::span<double> values() { return values_; }
    std::span<const double> values() const { return values_; }

    bool operator==(const LogitBatch&) const = default;

private:
    std::size_t index(int b, int c) const {
        return static_cast<std::size_t>(b) * classes_ + c;
    }

    int batch_ = 0;
    int classes_ = 0;
    std::vector<double> values_;
};

}  // namespace cheapconv
