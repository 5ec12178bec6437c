#include "cheapconv/transform.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>

#include <fmt/format.h>

namespace cheapconv {

namespace {

std::string strip_spaces(const std::string& text) {
    std::string out;
    for (char c : text) {
        if (!std::isspace(static_cast<unsigned char>(c))) out.push_back(c);
    }
    return out;
}

int parse_positive(const std::string& token, const std::string& whole) {
    int value = 0;
    const auto* first = token.data();
    const auto* last = token.data() + token.size();
    const auto [ptr, ec] = std::from_chars(first, last, value);
    if (token.empty() || ec != std::errc{} || ptr != last || value < 1) {
        throw ArchError(fmt::format("recipe '{}': '{}' is not a positive integer", whole, token));
    }
    return value;
}

// "4" -> absolute 4, "N/8" or "M/8" -> relative 8, "N" or "M" -> relative 1.
GroupSpec parse_group_arg(const std::string& token, const std::string& whole) {
    if (!token.empty() && (token[0] == 'N' || token[0] == 'M')) {
        if (token.size() == 1) return GroupSpec::relative(1);
        if (token[1] != '/') {
            throw ArchError(fmt::format("recipe '{}': bad group spec '{}'", whole, token));
        }
        return GroupSpec::relative(parse_positive(token.substr(2), whole));
    }
    return GroupSpec::absolute(parse_positive(token, whole));
}

std::string format_group_arg(const GroupSpec& g, char letter) {
    if (g.mode == GroupSpec::Mode::absolute) return std::to_string(g.value);
    if (g.value == 1) return std::string(1, letter);
    return fmt::format("{}/{}", letter, g.value);
}

ConvLayer conv(int in, int out, int kernel, int stride, int groups, ConvRole role,
               int dilation = 1) {
    ConvLayer c;
    c.in_channels = in;
    c.out_channels = out;
    c.kernel_h = kernel;
    c.kernel_w = kernel;
    c.stride = stride;
    c.dilation = dilation;
    c.groups = groups;
    c.role = role;
    return c;
}

ConvLayer pointwise(int in, int out) { return conv(in, out, 1, 1, 1, ConvRole::block_pointwise); }

int bottleneck_width(int out_channels, int b, const std::string& path) {
    if (b < 2) {
        throw ArchError(fmt::format("{}: bottleneck factor must be >= 2, got {}",
                                    path.empty() ? "recipe" : path, b));
    }
    if (out_channels % b != 0) {
        throw ArchError(fmt::format("{}: bottleneck {} does not divide {} output channels",
                                    path.empty() ? "block" : path, b, out_channels));
    }
    return out_channels / b;
}

}  // namespace

BlockRecipe parse_recipe(const std::string& text) {
    const auto s = strip_spaces(text);
    if (s == "S") return BlockRecipe::standard();
    if (s == "S-2x2" || s == "S-2X2" || s == "S_dilated") return BlockRecipe::dilated();

    const auto open = s.find('(');
    if (open == std::string::npos || s.back() != ')') {
        throw ArchError(fmt::format("recipe '{}': expected S, S-2x2, G(..), B(..) or BG(..)", text));
    }
    const auto head = s.substr(0, open);
    const auto body = s.substr(open + 1, s.size() - open - 2);
    std::vector<std::string> args;
    std::size_t start = 0;
    while (true) {
        const auto comma = body.find(',', start);
        args.push_back(body.substr(start, comma - start));
        if (comma == std::string::npos) break;
        start = comma + 1;
    }

    auto expect_args = [&](std::size_t n) {
        if (args.size() != n) {
            throw ArchError(fmt::format("recipe '{}': {} takes {} argument(s)", text, head, n));
        }
    };

    if (head == "G") {
        expect_args(1);
        return BlockRecipe::grouped(parse_group_arg(args[0], text));
    }
    if (head == "B") {
        expect_args(1);
        const int b = parse_positive(args[0], text);
        if (b < 2) throw ArchError(fmt::format("recipe '{}': bottleneck must be >= 2", text));
        return BlockRecipe::bottleneck_block(b);
    }
    if (head == "BG") {
        expect_args(2);
        const int b = parse_positive(args[0], text);
        if (b < 2) throw ArchError(fmt::format("recipe '{}': bottleneck must be >= 2", text));
        return BlockRecipe::bottleneck_grouped(b, parse_group_arg(args[1], text));
    }
    throw ArchError(fmt::format("recipe '{}': unknown block kind '{}'", text, head));
}

std::string format_recipe(const BlockRecipe& recipe) {
    switch (recipe.kind) {
        case BlockKind::S: return "S";
        case BlockKind::S_dilated: return "S-2x2";
        case BlockKind::G: return fmt::format("G({})", format_group_arg(recipe.groups, 'N'));
        case BlockKind::B: return fmt::format("B({})", recipe.bottleneck);
        case BlockKind::BG:
            return fmt::format("BG({},{})", recipe.bottleneck,
                               format_group_arg(recipe.groups, 'M'));
    }
    return "?";
}

int resolve_groups(const GroupSpec& spec, int channels, const std::string& path) {
    if (channels < 1) {
        throw ArchError(fmt::format("cannot resolve groups against {} channels", channels));
    }
    if (spec.value < 1) {
        throw ArchError(fmt::format("group spec value must be positive, got {}", spec.value));
    }
    const auto where = path.empty() ? std::string("conv") : path;
    const auto label = format_group_arg(spec, 'N');
    int groups = spec.value;
    if (spec.mode == GroupSpec::Mode::relative_to_channels) {
        if (channels % spec.value != 0) {
            throw ArchError(fmt::format("{}: group spec {} does not divide {} channels", where,
                                        label, channels));
        }
        groups = channels / spec.value;
    }
    if (channels % groups != 0) {
        throw ArchError(fmt::format("{}: {} groups (spec {}) do not divide {} channels", where,
                                    groups, label, channels));
    }
    return groups;
}

BlockInstance build_block(const BlockRecipe& recipe, int in, int out, int stride, int kernel,
                          ActivationOrder order, const std::string& path) {
    std::vector<ConvUnit> units;
    switch (recipe.kind) {
        case BlockKind::S:
            units = {{conv(in, out, kernel, stride, 1, ConvRole::block_spatial)},
                     {conv(out, out, kernel, 1, 1, ConvRole::block_spatial)}};
            break;
        case BlockKind::S_dilated:
            units = {{conv(in, out, kDilatedKernel, stride, 1, ConvRole::block_spatial,
                           kDilatedDilation)},
                     {conv(out, out, kDilatedKernel, 1, 1, ConvRole::block_spatial,
                           kDilatedDilation)}};
            break;
        case BlockKind::G: {
            const int g_in = resolve_groups(recipe.groups, in, path + ".gconv0");
            const int g_out = resolve_groups(recipe.groups, out, path + ".gconv1");
            units = {{conv(in, in, kernel, stride, g_in, ConvRole::block_spatial),
                      pointwise(in, out)},
                     {conv(out, out, kernel, 1, g_out, ConvRole::block_spatial),
                      pointwise(out, out)}};
            break;
        }
        case BlockKind::B: {
            const int mid = bottleneck_width(out, recipe.bottleneck, path);
            units = {{pointwise(in, mid), conv(mid, mid, kernel, stride, 1, ConvRole::block_spatial),
                      pointwise(mid, out)}};
            break;
        }
        case BlockKind::BG: {
            const int mid = bottleneck_width(out, recipe.bottleneck, path);
            const int g = resolve_groups(recipe.groups, mid, path + ".gconv");
            units = {{pointwise(in, mid), conv(mid, mid, kernel, stride, g, ConvRole::block_spatial),
                      pointwise(mid, out)}};
            break;
        }
    }
    return assemble_block(recipe.kind, units, in, out, stride, kernel, order);
}

NetworkSpec substitute(const NetworkSpec& network, const BlockRecipe& recipe) {
    if (const auto diagnostics = validate(network); !diagnostics.empty()) {
        throw ArchError(fmt::format("cannot substitute into an invalid network: {}: {}",
                                    diagnostics.front().path, diagnostics.front().message));
    }
    NetworkSpec result = network;
    for (std::size_t i = 0; i < result.stages.size(); ++i) {
        for (std::size_t j = 0; j < result.stages[i].blocks.size(); ++j) {
            auto& block = result.stages[i].blocks[j];
            auto rebuilt = build_block(recipe, block.in_channels, block.out_channels, block.stride,
                                       block.kernel, block.activation_order, block_path(i, j));
            rebuilt.shortcut = block.shortcut;
            rebuilt.shortcut_bn = block.shortcut_bn;
            block = std::move(rebuilt);
        }
    }
    return result;
}

}  // namespace cheapconv
