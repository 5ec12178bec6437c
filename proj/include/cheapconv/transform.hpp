#pragma once

#include <string>

#include "cheapconv/arch_ir.hpp"

namespace cheapconv {

/// Group count for a grouped conv, either fixed or relative to the channel
/// count of the conv it lands on (g = channels / divisor).
struct GroupSpec {
    enum class Mode { absolute, relative_to_channels };
    Mode mode = Mode::absolute;
    int value = 1;

    static GroupSpec absolute(int groups) { return {Mode::absolute, groups}; }
    static GroupSpec relative(int divisor) { return {Mode::relative_to_channels, divisor}; }

    bool operator==(const GroupSpec&) const = default;
};

/// A block substitution rule. `bottleneck` is used by B and BG, `groups` by
/// G and BG. S_dilated always uses a 2x2 kernel with dilation 2.
struct BlockRecipe {
    BlockKind kind = BlockKind::S;
    int bottleneck = 1;
    GroupSpec groups;

    static BlockRecipe standard() { return {}; }
    static BlockRecipe dilated() { return {BlockKind::S_dilated, 1, {}}; }
    static BlockRecipe grouped(GroupSpec g) { return {BlockKind::G, 1, g}; }
    static BlockRecipe bottleneck_block(int b) { return {BlockKind::B, b, {}}; }
    static BlockRecipe bottleneck_grouped(int b, GroupSpec g) { return {BlockKind::BG, b, g}; }

    bool operator==(const BlockRecipe&) const = default;
};

inline constexpr int kDilatedKernel = 2;
inline constexpr int kDilatedDilation = 2;

/// Parses the recipe mini-language: S, S-2x2, G(4), G(N/8), G(N), B(2),
/// BG(2,M/4), BG(4,M). Whitespace is ignored. Throws ArchError.
BlockRecipe parse_recipe(const std::string& text);

/// Canonical label, e.g. "G(N/8)", "BG(2,M)", "S-2x2".
std::string format_recipe(const BlockRecipe& recipe);

/// `path` only decorates the error message.
int resolve_groups(const GroupSpec& spec, int channels, const std::string& path = {});

/// Rebuilds every residual block per the recipe from the block's original
/// (in, out, stride, kernel) interface. Stem, shortcuts and head are kept.
/// Throws ArchError when a bottleneck or group count does not divide.
NetworkSpec substitute(const NetworkSpec& network, const BlockRecipe& recipe);

BlockInstance build_block(const BlockRecipe& recipe, int in_channels, int out_channels,
                          int stride, int kernel, ActivationOrder order,
                          const std::string& path = {});

}  // namespace cheapconv
