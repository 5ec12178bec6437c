#include "cheapconv/arch_ir.hpp"

#include <cmath>

#include <fmt/format.h>
#include <fmt/ranges.h>

namespace cheapconv {

namespace {

ConvLayer make_conv(int in, int out, int kernel, int stride, ConvRole role) {
    ConvLayer conv;
    conv.in_channels = in;
    conv.out_channels = out;
    conv.kernel_h = kernel;
    conv.kernel_w = kernel;
    conv.stride = stride;
    conv.role = role;
    return conv;
}

ConvUnit standard_slot(int in, int out, int kernel, int stride) {
    return {make_conv(in, out, kernel, stride, ConvRole::block_spatial)};
}

class Validator {
public:
    std::vector<Diagnostic> run(const NetworkSpec& net) {
        check_conv("stem", net.stem.conv);
        if (net.stem.bn && net.stem.bn->channels != net.stem.conv.out_channels) {
            report("stem.bn", fmt::format("batch-norm has {} channels but stem produces {}",
                                          net.stem.bn->channels, net.stem.conv.out_channels));
        }
        if (net.stem.pool) {
            const auto& pool = *net.stem.pool;
            if (pool.kernel < 1 || pool.stride < 1 || pool.padding < 0) {
                report("stem.pool", "pool kernel and stride must be positive, padding nonnegative");
            }
        }
        if (net.stages.empty()) {
            report("stages", "network has no stages");
        }

        int channels = net.stem.conv.out_channels;
        std::string previous = "stem";
        for (std::size_t i = 0; i < net.stages.size(); ++i) {
            const auto& stage = net.stages[i];
            const auto path = fmt::format("stage{}", i);
            const bool chained = stage.in_channels == channels;
            if (!chained) {
                report(path, fmt::format("channel chain broken: {} produces {} channels but {} "
                                         "expects {}",
                                         previous, channels, path, stage.in_channels));
            }
            check_stage(i, stage, chained);
            channels = stage.out_channels;
            previous = path;
        }

        if (net.final_bn && net.final_bn->channels != channels) {
            report("final_bn", fmt::format("batch-norm has {} channels but the last stage "
                                           "produces {}",
                                           net.final_bn->channels, channels));
        }
        if (net.head.in_features != channels) {
            report("head", fmt::format("channel chain broken: head expects {} features but {} "
                                       "produces {} channels",
                                       net.head.in_features, previous, channels));
        }
        if (net.head.num_classes < 1) {
            report("head", "num_classes must be positive");
        }
        return std::move(diagnostics_);
    }

private:
    void report(std::string path, std::string message) {
        diagnostics_.push_back({std::move(path), std::move(message)});
    }

    void check_conv(const std::string& path, const ConvLayer& conv) {
        if (conv.in_channels < 1 || conv.out_channels < 1 || conv.kernel_h < 1 ||
            conv.kernel_w < 1 || conv.stride < 1 || conv.dilation < 1 || conv.groups < 1) {
            report(path, "conv fields must all be positive");
            return;
        }
        if (conv.in_channels % conv.groups != 0 || conv.out_channels % conv.groups != 0) {
            report(path, fmt::format("groups must divide channels: groups={} in={} out={}",
                                     conv.groups, conv.in_channels, conv.out_channels));
        }
    }

    void check_stage(std::size_t index, const StageSpec& stage, bool chained) {
        const auto path = fmt::format("stage{}", index);
        if (stage.blocks.empty()) {
            report(path, "stage has no blocks");
            return;
        }
        for (std::size_t j = 0; j < stage.blocks.size(); ++j) {
            const auto& block = stage.blocks[j];
            const auto bpath = block_path(index, j);
            if (j == 0) {
                // a broken chain is already reported once at the stage
                const bool in_ok = block.in_channels == stage.in_channels || !chained;
                if (!in_ok || block.stride != stage.stride) {
                    report(bpath, fmt::format("first block interface ({} ch, stride {}) does not "
                                              "match stage ({} ch, stride {})",
                                              block.in_channels, block.stride, stage.in_channels,
                                              stage.stride));
                }
            } else if (block.stride != 1 || block.in_channels != stage.out_channels) {
                report(bpath, "blocks after the first must have stride 1 and in = out = stage out");
            }
            if (block.out_channels != stage.out_channels) {
                report(bpath, fmt::format("block produces {} channels, stage declares {}",
                                          block.out_channels, stage.out_channels));
            }
            check_block(bpath, block);
        }
    }

    void check_block(const std::string& path, const BlockInstance& block) {
        if (block.in_channels < 1 || block.out_channels < 1 || block.stride < 1) {
            report(path, "block channel counts and stride must be positive");
            return;
        }
        const bool pre = block.activation_order == ActivationOrder::pre_activation;
        int channels = block.in_channels;
        int stride_product = 1;
        bool bn_pending = false;  // pre: BN seen, conv not yet; post: conv seen, BN not yet
        int convs = 0;
        for (std::size_t k = 0; k < block.layers.size(); ++k) {
            const auto lpath = fmt::format("{}.layer{}", path, k);
            if (const auto* bn = std::get_if<BatchNormLayer>(&block.layers[k])) {
                if (bn->channels != channels) {
                    report(lpath, fmt::format("batch-norm has {} channels, input has {}",
                                              bn->channels, channels));
                }
                if (pre == bn_pending) {
                    report(lpath, pre ? "two batch-norms without a conv between them"
                                      : "batch-norm does not follow a conv");
                }
                bn_pending = pre;
                continue;
            }
            const auto& conv = std::get<ConvLayer>(block.layers[k]);
            ++convs;
            check_conv(lpath, conv);
            if (conv.in_channels != channels) {
                report(lpath, fmt::format("conv consumes {} channels, input has {}",
                                          conv.in_channels, channels));
            }
            if (pre != bn_pending) {
                report(lpath, pre ? "conv is not preceded by a batch-norm"
                                  : "conv is not followed by a batch-norm");
            }
            bn_pending = !pre;
            channels = conv.out_channels;
            stride_product *= conv.stride;
        }
        if (!pre && bn_pending) {
            report(path, "last conv is not followed by a batch-norm");
        }
        if (convs == 0) {
            report(path, "block has no convolutions");
            return;
        }
        if (channels != block.out_channels) {
            report(path, fmt::format("last conv produces {} channels, block declares {}", channels,
                                     block.out_channels));
        }
        if (stride_product != block.stride) {
            report(path, fmt::format("conv strides multiply to {}, block declares stride {}",
                                     stride_product, block.stride));
        }

        const bool needs_projection =
            block.stride != 1 || block.in_channels != block.out_channels;
        if (needs_projection != block.has_projection_shortcut()) {
            report(path, needs_projection ? "projection shortcut required but missing"
                                          : "projection shortcut present on an identity block");
        }
        if (block.shortcut) {
            const auto& sc = *block.shortcut;
            const auto spath = path + ".shortcut";
            check_conv(spath, sc);
            if (sc.in_channels != block.in_channels || sc.out_channels != block.out_channels ||
                sc.stride != block.stride || sc.kernel_h != 1 || sc.kernel_w != 1) {
                report(spath, "shortcut must be a 1x1 conv matching the block interface");
            }
        }
        if (block.shortcut_bn) {
            if (!block.shortcut) {
                report(path + ".shortcut_bn", "shortcut batch-norm without a projection");
            } else if (block.shortcut_bn->channels != block.out_channels) {
                report(path + ".shortcut_bn", "shortcut batch-norm channel mismatch");
            }
        }
    }

    std::vector<Diagnostic> diagnostics_;
};

}  // namespace

std::string block_path(std::size_t stage, std::size_t block) {
    return fmt::format("stage{}.block{}", stage, block);
}

BlockInstance assemble_block(BlockKind kind, const std::vector<ConvUnit>& units, int in_channels,
                             int out_channels, int stride, int kernel, ActivationOrder order) {
    BlockInstance block;
    block.kind = kind;
    block.activation_order = order;
    block.in_channels = in_channels;
    block.out_channels = out_channels;
    block.stride = stride;
    block.kernel = kernel;

    const bool pre = order == ActivationOrder::pre_activation;
    for (const auto& unit : units) {
        for (std::size_t i = 0; i < unit.size(); ++i) {
            const auto& conv = unit[i];
            if (pre) {
                block.layers.emplace_back(BatchNormLayer{conv.in_channels, i == 0});
                block.layers.emplace_back(conv);
            } else {
                block.layers.emplace_back(conv);
                block.layers.emplace_back(BatchNormLayer{conv.out_channels, i + 1 == unit.size()});
            }
        }
    }

    if (stride != 1 || in_channels != out_channels) {
        block.shortcut = make_conv(in_channels, out_channels, 1, stride,
                                   ConvRole::shortcut_projection);
        if (!pre) {
            block.shortcut_bn = BatchNormLayer{out_channels, false};
        }
    }
    return block;
}

StageSpec make_standard_stage(int in_channels, int out_channels, int stride, int num_blocks,
                              int kernel, ActivationOrder order) {
    StageSpec stage;
    stage.in_channels = in_channels;
    stage.out_channels = out_channels;
    stage.stride = stride;
    for (int b = 0; b < num_blocks; ++b) {
        const int in = b == 0 ? in_channels : out_channels;
        const int s = b == 0 ? stride : 1;
        stage.blocks.push_back(assemble_block(
            BlockKind::S,
            {standard_slot(in, out_channels, kernel, s),
             standard_slot(out_channels, out_channels, kernel, 1)},
            in, out_channels, s, kernel, order));
    }
    return stage;
}

NetworkSpec build_wrn(int depth, int width_multiplier, int num_classes) {
    if (depth < 10 || (depth - 4) % 6 != 0) {
        throw ArchError(fmt::format(
            "WRN depth {} is not of the form 6n+4 with n >= 1 (blocks per stage n = (d-4)/6)",
            depth));
    }
    if (width_multiplier < 1) {
        throw ArchError(fmt::format("WRN width multiplier must be >= 1, got {}", width_multiplier));
    }
    if (num_classes < 2) {
        throw ArchError(fmt::format("num_classes must be >= 2, got {}", num_classes));
    }
    const int n = (depth - 4) / 6;

    NetworkSpec net;
    net.name = fmt::format("WRN-{}-{}", depth, width_multiplier);
    net.stem.conv = make_conv(3, 16, 3, 1, ConvRole::stem);

    int channels = 16;
    const int widths[] = {16 * width_multiplier, 32 * width_multiplier, 64 * width_multiplier};
    const int strides[] = {1, 2, 2};
    for (int i = 0; i < 3; ++i) {
        net.stages.push_back(make_standard_stage(channels, widths[i], strides[i], n, 3,
                                                 ActivationOrder::pre_activation));
        channels = widths[i];
    }
    net.final_bn = BatchNormLayer{channels, true};
    net.head = HeadSpec{channels, num_classes, true};
    return net;
}

NetworkSpec build_resnet(ResNetVariant variant, const std::vector<double>& width_scale,
                         int num_classes) {
    if (width_scale.size() != 4) {
        throw ArchError(fmt::format("ResNet width_scale needs 4 entries, got {}",
                                    width_scale.size()));
    }
    if (num_classes < 2) {
        throw ArchError(fmt::format("num_classes must be >= 2, got {}", num_classes));
    }
    const int base[] = {64, 128, 256, 512};
    int widths[4];
    for (int i = 0; i < 4; ++i) {
        const double scaled = base[i] * width_scale[i];
        const double rounded = std::round(scaled);
        if (!(scaled > 0.0) || std::abs(scaled - rounded) > 1e-9) {
            throw ArchError(fmt::format("stage {} width {} x {} = {} is not a positive integer", i,
                                        base[i], width_scale[i], scaled));
        }
        widths[i] = static_cast<int>(rounded);
    }
    const bool is18 = variant == ResNetVariant::resnet18;
    const int counts18[] = {2, 2, 2, 2};
    const int counts34[] = {3, 4, 6, 3};
    const int* counts = is18 ? counts18 : counts34;

    NetworkSpec net;
    net.name = is18 ? "ResNet-18" : "ResNet-34";
    bool scaled = false;
    for (double s : width_scale) scaled = scaled || s != 1.0;
    if (scaled) {
        net.name += fmt::format("-x{}", fmt::join(width_scale, "-"));
    }
    net.stem.conv = make_conv(3, 64, 7, 2, ConvRole::stem);
    net.stem.bn = BatchNormLayer{64, true};
    net.stem.pool = PoolSpec{3, 2, 1};

    int channels = 64;
    for (int i = 0; i < 4; ++i) {
        net.stages.push_back(make_standard_stage(channels, widths[i], i == 0 ? 1 : 2, counts[i], 3,
                                                 ActivationOrder::post_activation));
        channels = widths[i];
    }
    net.head = HeadSpec{channels, num_classes, true};
    return net;
}

std::vector<Diagnostic> validate(const NetworkSpec& network) {
    return Validator{}.run(network);
}

std::string to_string(ConvRole role) {
    switch (role) {
        case ConvRole::stem: return "stem";
        case ConvRole::block_spatial: return "block_spatial";
        case ConvRole::block_pointwise: return "block_pointwise";
        case ConvRole::shortcut_projection: return "shortcut_projection";
    }
    return "?";
}

std::string to_string(BlockKind kind) {
    switch (kind) {
        case BlockKind::S: return "S";
        case BlockKind::S_dilated: return "S_dilated";
        case BlockKind::G: return "G";
        case BlockKind::B: return "B";
        case BlockKind::BG: return "BG";
    }
    return "?";
}

std::string to_string(ActivationOrder order) {
    return order == ActivationOrder::pre_activation ? "pre_activation" : "post_activation";
}

ConvRole conv_role_from_string(const std::string& text) {
    for (auto role : {ConvRole::stem, ConvRole::block_spatial, ConvRole::block_pointwise,
                      ConvRole::shortcut_projection}) {
        if (to_string(role) == text) return role;
    }
    throw ArchError(fmt::format("unknown conv role '{}'", text));
}

BlockKind block_kind_from_string(const std::string& text) {
    for (auto kind :
         {BlockKind::S, BlockKind::S_dilated, BlockKind::G, BlockKind::B, BlockKind::BG}) {
        if (to_string(kind) == text) return kind;
    }
    throw ArchError(fmt::format("unknown block kind '{}'", text));
}

ActivationOrder activation_order_from_string(const std::string& text) {
    if (text == "pre_activation") return ActivationOrder::pre_activation;
    if (text == "post_activation") return ActivationOrder::post_activation;
    throw ArchError(fmt::format("unknown activation order '{}'", text));
}

}  // namespace cheapconv
