#include "cheapconv/cost_model.hpp"

#include <cstdio>
#include <sstream>

#include <fmt/format.h>

#include "cheapconv/distill.hpp"
#include "cheapconv/tensor.hpp"

namespace cheapconv {

namespace {

struct Walk {
    int channels;
    int h;
    int w;
};

Count plane(int channels, int h, int w) {
    return static_cast<Count>(channels) * h * w;
}

int pooled_dim(int in, const PoolSpec& pool) {
    return (in + 2 * pool.padding - pool.kernel) / pool.stride + 1;
}

}  // namespace

InputShape parse_input_shape(const std::string& text) {
    InputShape shape;
    char x1 = 0, x2 = 0;
    char trailing = 0;
    const int n = std::sscanf(text.c_str(), "%d%c%d%c%d%c", &shape.channels, &x1, &shape.height,
                              &x2, &shape.width, &trailing);
    if (n != 5 || (x1 != 'x' && x1 != 'X') || (x2 != 'x' && x2 != 'X') || shape.channels < 1 ||
        shape.height < 1 || shape.width < 1) {
        throw ArchError(fmt::format("input shape '{}' is not of the form CxHxW", text));
    }
    return shape;
}

int same_padding(int kernel, int dilation) { return dilation * (kernel - 1) / 2; }

Count conv_params(const ConvLayer& layer) {
    if (layer.groups < 1 || layer.in_channels % layer.groups != 0 ||
        layer.out_channels % layer.groups != 0) {
        throw ArchError(fmt::format("groups {} must divide channels {} -> {}", layer.groups,
                                    layer.in_channels, layer.out_channels));
    }
    return static_cast<Count>(layer.in_channels) * layer.out_channels * layer.kernel_h *
           layer.kernel_w / layer.groups;
}

ConvCost conv_mult_adds(const ConvLayer& layer, int in_h, int in_w) {
    const int pad_h = same_padding(layer.kernel_h, layer.dilation);
    const int pad_w = same_padding(layer.kernel_w, layer.dilation);
    ConvCost cost;
    cost.out_h = (in_h + 2 * pad_h - layer.dilation * (layer.kernel_h - 1) - 1) / layer.stride + 1;
    cost.out_w = (in_w + 2 * pad_w - layer.dilation * (layer.kernel_w - 1) - 1) / layer.stride + 1;
    if (in_h < 1 || in_w < 1 || cost.out_h < 1 || cost.out_w < 1) {
        throw ArchError(fmt::format("spatial underflow: {}x{} input to a {}x{} conv (dilation {}, "
                                    "stride {})",
                                    in_h, in_w, layer.kernel_h, layer.kernel_w, layer.dilation,
                                    layer.stride));
    }
    cost.mult_adds = conv_params(layer) * cost.out_h * cost.out_w;
    return cost;
}

CostReport network_cost(const NetworkSpec& network, const InputShape& input) {
    if (input.channels != network.stem.conv.in_channels) {
        throw ArchError(fmt::format("input has {} channels, stem expects {}", input.channels,
                                    network.stem.conv.in_channels));
    }
    CostReport report;
    report.input_height = input.height;
    report.input_width = input.width;

    auto add_conv = [&](CostEntry& entry, const ConvLayer& conv, Walk& at) {
        const auto cost = conv_mult_adds(conv, at.h, at.w);
        const Count params = conv_params(conv);
        entry.params += params;
        entry.mult_adds += cost.mult_adds;
        report.conv_params += params;
        at = {conv.out_channels, cost.out_h, cost.out_w};
    };
    auto add_bn = [&](CostEntry& entry, const BatchNormLayer& bn, const Walk& at) {
        entry.params += bn_params(bn);
        report.bn_params += bn_params(bn);
        if (bn.unit_boundary) entry.activation_ops += plane(bn.channels, at.h, at.w);
    };

    Walk at{input.channels, input.height, input.width};
    {
        CostEntry stem{"stem", "stem"};
        add_conv(stem, network.stem.conv, at);
        if (network.stem.bn) add_bn(stem, *network.stem.bn, at);
        if (network.stem.pool) {
            const auto& pool = *network.stem.pool;
            const int h = pooled_dim(at.h, pool);
            const int w = pooled_dim(at.w, pool);
            if (h < 1 || w < 1) {
                throw ArchError(fmt::format("spatial underflow: {}x{} input to the stem pool",
                                            at.h, at.w));
            }
            at.h = h;
            at.w = w;
        }
        report.per_block.push_back(stem);
    }

    for (std::size_t i = 0; i < network.stages.size(); ++i) {
        const auto& stage = network.stages[i];
        for (std::size_t j = 0; j < stage.blocks.size(); ++j) {
            const auto& block = stage.blocks[j];
            CostEntry entry{block_path(i, j), to_string(block.kind)};
            const Walk block_in = at;
            for (const auto& layer : block.layers) {
                if (const auto* conv = std::get_if<ConvLayer>(&layer)) {
                    add_conv(entry, *conv, at);
                } else {
                    add_bn(entry, std::get<BatchNormLayer>(layer), at);
                }
            }
            if (block.shortcut) {
                Walk sc = block_in;
                add_conv(entry, *block.shortcut, sc);
                if (sc.h != at.h || sc.w != at.w) {
                    throw ArchError(fmt::format("{}: shortcut output {}x{} does not match the "
                                                "residual branch {}x{}",
                                                entry.path, sc.h, sc.w, at.h, at.w));
                }
                if (block.shortcut_bn) add_bn(entry, *block.shortcut_bn, sc);
            }
            report.per_block.push_back(entry);
        }
    }

    if (network.final_bn) {
        CostEntry entry{"final_bn", "final_bn"};
        add_bn(entry, *network.final_bn, at);
        report.per_block.push_back(entry);
    }

    {
        // Global average pooling is free; the linear layer is the only cost.
        const auto& head = network.head;
        CostEntry entry{"head", "head"};
        const Count weights = static_cast<Count>(head.in_features) * head.num_classes;
        entry.params = weights + (head.bias ? head.num_classes : 0);
        entry.mult_adds = weights;
        report.head_params = entry.params;
        report.per_block.push_back(entry);
    }

    for (const auto& entry : report.per_block) {
        report.mult_adds += entry.mult_adds;
        report.activation_ops += entry.activation_ops;
    }
    report.total_params = report.conv_params + report.bn_params + report.head_params;
    return report;
}

Count materialized_param_count(const NetworkSpec& network) {
    Count total = 0;
    auto conv = [&](const ConvLayer& layer) {
        const Tensor4 weights(kernel::conv_weight_shape(layer));
        total += static_cast<Count>(weights.size());
    };
    auto bn = [&](const BatchNormLayer& layer) {
        const Tensor4 scale_shift(2, layer.channels, 1, 1);
        total += static_cast<Count>(scale_shift.size());
    };

    conv(network.stem.conv);
    if (network.stem.bn) bn(*network.stem.bn);
    for (const auto& stage : network.stages) {
        for (const auto& block : stage.blocks) {
            for (const auto& layer : block.layers) {
                if (const auto* c = std::get_if<ConvLayer>(&layer)) {
                    conv(*c);
                } else {
                    bn(std::get<BatchNormLayer>(layer));
                }
            }
            if (block.shortcut) conv(*block.shortcut);
            if (block.shortcut_bn) bn(*block.shortcut_bn);
        }
    }
    if (network.final_bn) bn(*network.final_bn);

    const Tensor4 linear(network.head.num_classes, network.head.in_features, 1, 1);
    total += static_cast<Count>(linear.size());
    if (network.head.bias) {
        const Tensor4 bias(network.head.num_classes, 1, 1, 1);
        total += static_cast<Count>(bias.size());
    }
    return total;
}

std::string cost_report_csv(const CostReport& report) {
    std::ostringstream out;
    out << "path,kind,params,mult_adds\n";
    for (const auto& entry : report.per_block) {
        out << entry.path << ',' << entry.kind << ',' << entry.params << ',' << entry.mult_adds
            << '\n';
    }
    return out.str();
}

std::string format_scaled(Count value, Count divisor, int decimals) {
    Count unit = divisor;
    Count scale = 1;
    for (int i = 0; i < decimals; ++i) {
        unit /= 10;
        scale *= 10;
    }
    if (unit < 1) unit = 1;
    const bool negative = value < 0;
    const Count magnitude = negative ? -value : value;
    const Count q = (magnitude + unit / 2) / unit;
    std::string text = std::to_string(q / scale);
    if (decimals > 0) {
        text += fmt::format(".{:0{}}", q % scale, decimals);
    }
    return negative ? "-" + text : text;
}

std::string format_thousands(Count value, int decimals) {
    return format_scaled(value, 1000, decimals);
}

std::string format_millions(Count value, int decimals) {
    return format_scaled(value, 1000000, decimals);
}

std::string format_billions(Count value, int decimals) {
    return format_scaled(value, 1000000000, decimals);
}

}  // namespace cheapconv
