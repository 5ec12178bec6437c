#pragma once

#include <string>
#include <vector>

#include "cheapconv/arch_ir.hpp"

namespace cheapconv {

struct InputShape {
    int channels = 3;
    int height = 32;
    int width = 32;

    bool operator==(const InputShape&) const = default;
};

/// Parses "CxHxW", e.g. "3x32x32".
InputShape parse_input_shape(const std::string& text);

/// How mult-adds are tallied when a single number is wanted.
///  conv_linear       multiply-accumulates of convs and the linear head only.
///  with_activations  additionally one op per element at each block-level
///                    activation (BN layers flagged unit_boundary). This is the
///                    tally used by the published WRN/ResNet cost tables.
enum class MultAddConvention { conv_linear, with_activations };

struct CostEntry {
    std::string path;  // "stem", "stage0.block3", "final_bn", "head"
    std::string kind;  // block kind, or the pseudo-block name
    Count params = 0;
    Count mult_adds = 0;
    Count activation_ops = 0;
};

struct CostReport {
    Count conv_params = 0;
    Count bn_params = 0;
    Count head_params = 0;
    Count total_params = 0;
    Count mult_adds = 0;       // conv + linear
    Count activation_ops = 0;  // see MultAddConvention::with_activations
    std::vector<CostEntry> per_block;
    int input_height = 0;
    int input_width = 0;

    Count mult_adds_under(MultAddConvention convention) const {
        return convention == MultAddConvention::conv_linear ? mult_adds
                                                            : mult_adds + activation_ops;
    }
};

struct ConvCost {
    Count mult_adds = 0;
    int out_h = 0;
    int out_w = 0;
};

/// Weights only; convolutions carry no bias.
Count conv_params(const ConvLayer& layer);

/// Output spatial dims under same-style padding dilation*(k-1)/2 and the
/// resulting mult-add count. Throws ArchError on spatial underflow.
ConvCost conv_mult_adds(const ConvLayer& layer, int in_h, int in_w);

/// Padding used per spatial dimension: dilation * (kernel - 1) / 2, rounded down.
int same_padding(int kernel, int dilation);

inline Count bn_params(const BatchNormLayer& bn) { return 2 * static_cast<Count>(bn.channels); }

CostReport network_cost(const NetworkSpec& network, const InputShape& input);

/// Independent count: allocates every weight tensor in the shape the numeric
/// kernels use and sums element counts. Never uses the closed-form formulas.
Count materialized_param_count(const NetworkSpec& network);

/// CSV with header path,kind,params,mult_adds (exact integers).
std::string cost_report_csv(const CostReport& report);

/// Display rounding, half-up on exact integers: 2243546 -> "2243.5" (K),
/// 21797672 -> "21.8" (M).
std::string format_scaled(Count value, Count divisor, int decimals);
std::string format_thousands(Count value, int decimals = 1);
std::string format_millions(Count value, int decimals = 1);
std::string format_billions(Count value, int decimals = 3);

}  // namespace cheapconv
