#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

namespace cheapconv {

using Count = std::int64_t;

/// Raised when an architecture, recipe or cost query violates a precondition.
class ArchError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

enum class ConvRole { stem, block_spatial, block_pointwise, shortcut_projection };

struct ConvLayer {
    int in_channels = 1;
    int out_channels = 1;
    int kernel_h = 1;
    int kernel_w = 1;
    int stride = 1;
    int dilation = 1;
    int groups = 1;
    ConvRole role = ConvRole::block_spatial;

    int receptive_h() const { return dilation * (kernel_h - 1) + 1; }
    int receptive_w() const { return dilation * (kernel_w - 1) + 1; }

    bool operator==(const ConvLayer&) const = default;
};

/// Scale + shift per channel. `unit_boundary` marks the BN+ReLU pair that
/// opens (pre-activation) or closes (post-activation) one substitution unit
/// of a block; the activation-inclusive op count charges one op per element
/// at these sites only.
struct BatchNormLayer {
    int channels = 1;
    bool unit_boundary = false;

    bool operator==(const BatchNormLayer&) const = default;
};

using BlockLayer = std::variant<ConvLayer, BatchNormLayer>;

enum class BlockKind { S, S_dilated, G, B, BG };
enum class ActivationOrder { pre_activation, post_activation };

struct BlockInstance {
    BlockKind kind = BlockKind::S;
    std::vector<BlockLayer> layers;
    ActivationOrder activation_order = ActivationOrder::pre_activation;
    int in_channels = 1;
    int out_channels = 1;
    int stride = 1;
    // k of the standard block this instance was derived from.
    int kernel = 3;
    std::optional<ConvLayer> shortcut;
    std::optional<BatchNormLayer> shortcut_bn;

    bool has_projection_shortcut() const { return shortcut.has_value(); }

    bool operator==(const BlockInstance&) const = default;
};

struct StageSpec {
    int in_channels = 1;
    int out_channels = 1;
    int stride = 1;
    std::vector<BlockInstance> blocks;

    bool operator==(const StageSpec&) const = default;
};

struct PoolSpec {
    int kernel = 1;
    int stride = 1;
    int padding = 0;

    bool operator==(const PoolSpec&) const = default;
};

struct StemSpec {
    ConvLayer conv;
    std::optional<BatchNormLayer> bn;
    std::optional<PoolSpec> pool;

    bool operator==(const StemSpec&) const = default;
};

/// Global average pool followed by a linear classifier.
struct HeadSpec {
    int in_features = 1;
    int num_classes = 2;
    bool bias = true;

    bool operator==(const HeadSpec&) const = default;
};

struct NetworkSpec {
    std::string name;
    StemSpec stem;
    std::vector<StageSpec> stages;
    std::optional<BatchNormLayer> final_bn;
    HeadSpec head;

    bool operator==(const NetworkSpec&) const = default;
};

struct Diagnostic {
    std::string path;
    std::string message;
};

std::vector<Diagnostic> validate(const NetworkSpec& network);

/// Wide residual network WRN-depth-width with pre-activation S blocks.
NetworkSpec build_wrn(int depth, int width_multiplier, int num_classes);

enum class ResNetVariant { resnet18, resnet34 };

/// ImageNet-style ResNet with basic blocks and post-activation ordering.
/// `width_scale` multiplies the base widths 64/128/256/512 per stage.
NetworkSpec build_resnet(ResNetVariant variant, const std::vector<double>& width_scale,
                         int num_classes);

/// Convs that replace one conv slot of a standard block. BN layers are not
/// part of a unit; assemble_block inserts them.
using ConvUnit = std::vector<ConvLayer>;

/// Builds a block from its conv units: one BN per conv, placed before
/// (pre-activation) or after (post-activation) it, and a 1x1 projection
/// shortcut when the stride or channel count changes. Post-activation
/// shortcuts get their own BN.
BlockInstance assemble_block(BlockKind kind, const std::vector<ConvUnit>& units, int in_channels,
                             int out_channels, int stride, int kernel, ActivationOrder order);

/// One stage of `num_blocks` standard blocks.
StageSpec make_standard_stage(int in_channels, int out_channels, int stride, int num_blocks,
                              int kernel, ActivationOrder order);

std::string to_string(ConvRole role);
std::string to_string(BlockKind kind);
std::string to_string(ActivationOrder order);
ConvRole conv_role_from_string(const std::string& text);
BlockKind block_kind_from_string(const std::string& text);
ActivationOrder activation_order_from_string(const std::string& text);

/// Path label used in diagnostics and cost breakdowns, e.g. "stage1.block0".
std::string block_path(std::size_t stage, std::size_t block);

}  // namespace cheapconv
