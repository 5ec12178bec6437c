#include "cheapconv/tensor.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

#include "cheapconv/arch_ir.hpp"

namespace cheapconv {

Tensor4::Tensor4(int d0, int d1, int d2, int d3, double fill) : dims_{d0, d1, d2, d3} {
    if (d0 < 0 || d1 < 0 || d2 < 0 || d3 < 0) {
        throw ArchError(fmt::format("negative tensor dims ({}, {}, {}, {})", d0, d1, d2, d3));
    }
    data_.assign(static_cast<std::size_t>(d0) * d1 * d2 * d3, fill);
}

bool Tensor4::all_finite() const {
    return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

LogitBatch::LogitBatch(int batch, int classes, double fill) : batch_(batch), classes_(classes) {
    if (batch < 0 || classes < 0) {
        throw ArchError(fmt::format("negative logit batch dims ({}, {})", batch, classes));
    }
    values_.assign(static_cast<std::size_t>(batch) * classes, fill);
}

}  // namespace cheapconv
