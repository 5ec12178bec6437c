#include <gtest/gtest.h>

#include "cheapconv/cost_model.hpp"
#include "cheapconv/transform.hpp"

using namespace cheapconv;

namespace {

const char* kRecipes[] = {"S",       "S-2x2",      "G(2)",      "G(4)",      "G(8)",
                                "G(16)",   "G(N/16)",    "G(N/8)",    "G(N/4)",    "G(N/2)",
                                "G(N)",    "B(2)",       "B(4)",      "BG(2,2)",   "BG(2,4)",
                                "BG(2,8)", "BG(2,16)",   "BG(2,M/16)", "BG(2,M/8)", "BG(2,M/4)",
                                "BG(2,M/2)", "BG(2,M)",  "BG(4,M)"};

struct BlockCounts {
    Count conv = 0;
    Count bn = 0;
};

BlockCounts count_block(const BlockInstance& block) {
    BlockCounts counts;
    for (const auto& layer : block.layers) {
        if (const auto* c = std::get_if<ConvLayer>(&layer)) counts.conv += conv_params(*c);
        if (const auto* b = std::get_if<BatchNormLayer>(&layer)) counts.bn += bn_params(*b);
    }
    return counts;
}

}  // namespace

TEST(ParseRecipe, AcceptsEveryPublishedLabel) {
    for (const char* label : kRecipes) {
        EXPECT_EQ(format_recipe(parse_recipe(label)), label);
    }
}

TEST(ParseRecipe, Structure) {
    EXPECT_EQ(parse_recipe("S"), BlockRecipe::standard());
    EXPECT_EQ(parse_recipe("S-2x2"), BlockRecipe::dilated());
    EXPECT_EQ(parse_recipe("G(4)"), BlockRecipe::grouped(GroupSpec::absolute(4)));
    EXPECT_EQ(parse_recipe("G(N/8)"), BlockRecipe::grouped(GroupSpec::relative(8)));
    EXPECT_EQ(parse_recipe("G(N)"), BlockRecipe::grouped(GroupSpec::relative(1)));
    EXPECT_EQ(parse_recipe("B(2)"), BlockRecipe::bottleneck_block(2));
    EXPECT_EQ(parse_recipe("BG(2,M/4)"),
              BlockRecipe::bottleneck_grouped(2, GroupSpec::relative(4)));
    EXPECT_EQ(parse_recipe("BG(4,M)"), BlockRecipe::bottleneck_grouped(4, GroupSpec::relative(1)));
}

TEST(ParseRecipe, IgnoresWhitespace) {
    EXPECT_EQ(parse_recipe(" BG( 2 , M/4 ) "), parse_recipe("BG(2,M/4)"));
}

TEST(ParseRecipe, RejectsMalformed) {
    for (const char* bad : {"", "Q", "G", "G()", "G(0)", "G(N/0)", "G(-2)", "B(1)", "B(0)",
                            "BG(1,M)", "BG(2)", "G(4", "S(2)", "G(4)x", "G(K/2)", "BG(2,M/)"}) {
        EXPECT_THROW(parse_recipe(bad), ArchError) << bad;
    }
}

TEST(ResolveGroups, Examples) {
    EXPECT_EQ(resolve_groups(GroupSpec::relative(1), 128), 128);
    EXPECT_EQ(resolve_groups(GroupSpec::absolute(2), 32), 2);
    EXPECT_EQ(resolve_groups(GroupSpec::relative(8), 16), 2);
    EXPECT_THROW(resolve_groups(GroupSpec::absolute(3), 32), ArchError);
    EXPECT_THROW(resolve_groups(GroupSpec::relative(64), 32), ArchError);
    EXPECT_THROW(resolve_groups(GroupSpec::relative(3), 32), ArchError);
}

TEST(BuildBlock, UniformCountsMatchClosedForms) {
    // I = O = N, stride 1, k = 3
    const Count k2 = 9;
    for (int n : {16, 32, 64, 128}) {
        const Count nn = Count(n) * n;
        const auto pre = ActivationOrder::pre_activation;
        auto s = count_block(build_block(BlockRecipe::standard(), n, n, 1, 3, pre));
        EXPECT_EQ(s.conv, 2 * nn * k2);
        EXPECT_EQ(s.bn, 4 * n);
        for (int g : {1, 2, 4, 8, 16}) {
            auto c = count_block(build_block(BlockRecipe::grouped(GroupSpec::absolute(g)), n, n, 1,
                                             3, pre));
            EXPECT_EQ(c.conv, 2 * nn * k2 / g + 2 * nn) << n << " g" << g;
            EXPECT_EQ(c.bn, 8 * n);
        }
        for (int b : {2, 4}) {
            auto c = count_block(build_block(BlockRecipe::bottleneck_block(b), n, n, 1, 3, pre));
            EXPECT_EQ(c.conv, nn * k2 / (b * b) + 2 * nn / b) << n << " b" << b;
            EXPECT_EQ(c.bn, 2 * n + 4 * n / b);
            for (int g : {1, 2, 4}) {
                const auto recipe = BlockRecipe::bottleneck_grouped(b, GroupSpec::absolute(g));
                auto bg = count_block(build_block(recipe, n, n, 1, 3, pre));
                EXPECT_EQ(bg.conv, nn * k2 / (g * b * b) + 2 * nn / b) << n << " b" << b << " g" << g;
                EXPECT_EQ(bg.bn, 2 * n + 4 * n / b);
            }
        }
    }
}

TEST(BuildBlock, GroupedBlockLayout) {
    const auto block = build_block(parse_recipe("G(N)"), 32, 64, 2, 3,
                                   ActivationOrder::pre_activation);
    std::vector<ConvLayer> convs;
    for (const auto& layer : block.layers) {
        if (const auto* c = std::get_if<ConvLayer>(&layer)) convs.push_back(*c);
    }
    ASSERT_EQ(convs.size(), 4u);
    // grouped 32->32 carries the stride, channel change on the first pointwise
    EXPECT_EQ(convs[0].groups, 32);
    EXPECT_EQ(convs[0].stride, 2);
    EXPECT_EQ(convs[0].out_channels, 32);
    EXPECT_EQ(convs[1].kernel_h, 1);
    EXPECT_EQ(convs[1].out_channels, 64);
    EXPECT_EQ(convs[2].groups, 64);
    EXPECT_EQ(convs[3].kernel_h, 1);
    ASSERT_TRUE(block.shortcut);
}

TEST(BuildBlock, BottleneckGroupedResolvesAgainstInnerWidth) {
    const auto block = build_block(parse_recipe("BG(2,M/4)"), 32, 64, 2, 3,
                                   ActivationOrder::pre_activation);
    std::vector<ConvLayer> convs;
    for (const auto& layer : block.layers) {
        if (const auto* c = std::get_if<ConvLayer>(&layer)) convs.push_back(*c);
    }
    ASSERT_EQ(convs.size(), 3u);
    EXPECT_EQ(convs[0].out_channels, 32);  // O / b
    EXPECT_EQ(convs[0].stride, 1);
    EXPECT_EQ(convs[1].groups, 8);  // 32 / 4
    EXPECT_EQ(convs[1].stride, 2);
    EXPECT_EQ(convs[2].out_channels, 64);
}

TEST(BuildBlock, DilatedUsesTwoByTwoWithDilationTwo) {
    const auto block = build_block(BlockRecipe::dilated(), 16, 16, 1, 3,
                                   ActivationOrder::pre_activation);
    for (const auto& layer : block.layers) {
        if (const auto* c = std::get_if<ConvLayer>(&layer)) {
            EXPECT_EQ(c->kernel_h, kDilatedKernel);
            EXPECT_EQ(c->dilation, kDilatedDilation);
            EXPECT_EQ(c->receptive_h(), 3);
        }
    }
}

TEST(Substitute, EveryRecipeYieldsValidNetworks) {
    const std::vector<NetworkSpec> bases = {
        build_wrn(40, 2, 10), build_wrn(16, 1, 10),
        build_resnet(ResNetVariant::resnet18, {1, 1, 1, 1}, 1000)};
    for (const auto& base : bases) {
        for (const char* r : kRecipes) {
            NetworkSpec net;
            try {
                net = substitute(base, parse_recipe(r));
            } catch (const ArchError&) {
                // fixed group counts may not divide narrow stages
                EXPECT_NE(base.name, build_wrn(40, 2, 10).name) << r;
                continue;
            }
            EXPECT_TRUE(validate(net).empty()) << base.name << " " << r;
        }
    }
}

TEST(Substitute, IsIdempotent) {
    const auto base = build_wrn(40, 2, 10);
    for (const char* r : kRecipes) {
        const auto recipe = parse_recipe(r);
        const auto once = substitute(base, recipe);
        EXPECT_EQ(substitute(once, recipe), once) << r;
    }
}

TEST(Substitute, StandardIsIdentity) {
    const auto base = build_wrn(40, 2, 10);
    EXPECT_EQ(substitute(base, BlockRecipe::standard()), base);
    const auto r34 = build_resnet(ResNetVariant::resnet34, {1, 1, 1, 1}, 1000);
    EXPECT_EQ(substitute(r34, BlockRecipe::standard()), r34);
}

TEST(Substitute, LastRecipeWins) {
    const auto base = build_wrn(16, 2, 10);
    const auto via_g = substitute(substitute(base, parse_recipe("G(4)")), parse_recipe("B(2)"));
    EXPECT_EQ(via_g, substitute(base, parse_recipe("B(2)")));
}

TEST(Substitute, KeepsStemShortcutsAndHead) {
    const auto base = build_wrn(40, 2, 10);
    const auto net = substitute(base, parse_recipe("S-2x2"));
    EXPECT_EQ(net.stem, base.stem);
    EXPECT_EQ(net.head, base.head);
    EXPECT_EQ(net.final_bn, base.final_bn);
    for (std::size_t s = 0; s < base.stages.size(); ++s) {
        for (std::size_t b = 0; b < base.stages[s].blocks.size(); ++b) {
            EXPECT_EQ(net.stages[s].blocks[b].shortcut, base.stages[s].blocks[b].shortcut);
        }
    }
}

TEST(Substitute, RejectsIndivisibleRecipes) {
    const auto base = build_wrn(16, 1, 10);
    EXPECT_THROW(substitute(base, parse_recipe("G(32)")), ArchError);
    EXPECT_THROW(substitute(base, parse_recipe("G(N/32)")), ArchError);
    EXPECT_THROW(substitute(base, parse_recipe("B(3)")), ArchError);
    EXPECT_THROW(substitute(base, parse_recipe("BG(2,16)")), ArchError);
}

TEST(Substitute, RejectsInvalidInput) {
    auto base = build_wrn(16, 1, 10);
    base.head.in_features = 7;
    EXPECT_THROW(substitute(base, parse_recipe("G(2)")), ArchError);
}
