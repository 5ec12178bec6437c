#include <gtest/gtest.h>

#include "cheapconv/arch_ir.hpp"

using namespace cheapconv;

namespace {

int count_weighted_layers(const NetworkSpec& net, bool with_shortcuts) {
    int count = 2;  // stem conv and linear head
    for (const auto& stage : net.stages) {
        for (const auto& block : stage.blocks) {
            for (const auto& layer : block.layers) count += std::holds_alternative<ConvLayer>(layer);
            if (with_shortcuts && block.shortcut) ++count;
        }
    }
    return count;
}

int count_blocks(const NetworkSpec& net) {
    int count = 0;
    for (const auto& stage : net.stages) count += static_cast<int>(stage.blocks.size());
    return count;
}

bool has_message(const std::vector<Diagnostic>& diags, const std::string& text) {
    for (const auto& d : diags) {
        if (d.message.find(text) != std::string::npos) return true;
    }
    return false;
}

}  // namespace

TEST(ConvLayer, ReceptiveField) {
    ConvLayer c{.in_channels = 4, .out_channels = 4, .kernel_h = 2, .kernel_w = 3, .dilation = 2};
    EXPECT_EQ(c.receptive_h(), 3);
    EXPECT_EQ(c.receptive_w(), 5);
}

TEST(BuildWrn, SmallestDepthHasOneBlockPerStage) {
    const auto net = build_wrn(10, 1, 10);
    ASSERT_EQ(net.stages.size(), 3u);
    const int widths[] = {16, 32, 64};
    for (std::size_t i = 0; i < 3; ++i) {
        EXPECT_EQ(net.stages[i].blocks.size(), 1u);
        EXPECT_EQ(net.stages[i].out_channels, widths[i]);
    }
    EXPECT_TRUE(validate(net).empty());
}

TEST(BuildWrn, StructureOfWrn40_2) {
    const auto net = build_wrn(40, 2, 10);
    EXPECT_EQ(net.name, "WRN-40-2");
    EXPECT_TRUE(validate(net).empty());
    EXPECT_EQ(net.stages[0].stride, 1);
    EXPECT_EQ(net.stages[1].stride, 2);
    EXPECT_EQ(net.stages[2].stride, 2);
    EXPECT_EQ(net.head.in_features, 128);
    EXPECT_TRUE(net.head.bias);
    ASSERT_TRUE(net.final_bn);
    EXPECT_EQ(net.final_bn->channels, 128);
    // 16 -> 32 needs a projection in the very first block; the later blocks don't
    EXPECT_TRUE(net.stages[0].blocks[0].has_projection_shortcut());
    EXPECT_FALSE(net.stages[0].blocks[1].has_projection_shortcut());
    for (const auto& stage : net.stages) {
        for (const auto& block : stage.blocks) {
            EXPECT_EQ(block.activation_order, ActivationOrder::pre_activation);
            EXPECT_FALSE(block.shortcut_bn);
        }
    }
}

TEST(BuildWrn, BlockAndLayerCounts) {
    for (int depth : {10, 16, 22, 28, 40}) {
        for (int width : {1, 2, 4}) {
            const auto net = build_wrn(depth, width, 10);
            EXPECT_TRUE(validate(net).empty()) << net.name;
            EXPECT_EQ(count_blocks(net), 3 * (depth - 4) / 6) << net.name;
            // stem + 2 convs per block + linear; the name counts two more
            EXPECT_EQ(count_weighted_layers(net, false), depth - 2) << net.name;
            const int projections = width == 1 ? 2 : 3;
            EXPECT_EQ(count_weighted_layers(net, true), depth - 2 + projections) << net.name;
        }
    }
}

TEST(BuildWrn, PureConstruction) {
    EXPECT_EQ(build_wrn(16, 2, 10), build_wrn(16, 2, 10));
    EXPECT_NE(build_wrn(16, 2, 10), build_wrn(16, 2, 100));
}

TEST(BuildWrn, RejectsBadArguments) {
    EXPECT_THROW(build_wrn(12, 2, 10), ArchError);
    EXPECT_THROW(build_wrn(4, 2, 10), ArchError);
    EXPECT_THROW(build_wrn(16, 0, 10), ArchError);
    EXPECT_THROW(build_wrn(16, 2, 1), ArchError);
}

TEST(BuildResnet, Structure) {
    const auto r34 = build_resnet(ResNetVariant::resnet34, {1, 1, 1, 1}, 1000);
    EXPECT_EQ(r34.name, "ResNet-34");
    EXPECT_TRUE(validate(r34).empty());
    EXPECT_EQ(count_blocks(r34), 16);
    EXPECT_EQ(count_weighted_layers(r34, false), 34);
    ASSERT_TRUE(r34.stem.pool);
    EXPECT_EQ(r34.stem.pool->kernel, 3);
    EXPECT_EQ(r34.stem.pool->stride, 2);
    EXPECT_FALSE(r34.final_bn);
    EXPECT_EQ(r34.stages[3].blocks[0].activation_order, ActivationOrder::post_activation);
    EXPECT_TRUE(r34.stages[1].blocks[0].shortcut_bn);

    const auto r18 = build_resnet(ResNetVariant::resnet18, {1, 1, 1, 1}, 1000);
    EXPECT_EQ(count_weighted_layers(r18, false), 18);
}

TEST(BuildResnet, HalvedWidths) {
    const auto net = build_resnet(ResNetVariant::resnet18, {1, 0.5, 0.5, 0.5}, 1000);
    EXPECT_TRUE(validate(net).empty());
    EXPECT_EQ(net.stages[0].out_channels, 64);
    EXPECT_EQ(net.stages[1].out_channels, 64);
    EXPECT_EQ(net.stages[2].out_channels, 128);
    EXPECT_EQ(net.stages[3].out_channels, 256);
    EXPECT_EQ(net.head.in_features, 256);
}

TEST(BuildResnet, RejectsBadScales) {
    EXPECT_THROW(build_resnet(ResNetVariant::resnet18, {1, 1, 1}, 1000), ArchError);
    EXPECT_THROW(build_resnet(ResNetVariant::resnet18, {1, 0.3, 1, 1}, 1000), ArchError);
}

TEST(Validate, GroupsMustDivideChannels) {
    auto net = build_wrn(16, 2, 10);
    auto& conv32 = std::get<ConvLayer>(net.stages[0].blocks[1].layers[1]);
    ASSERT_EQ(conv32.in_channels, 32);
    conv32.groups = 3;
    const auto diags = validate(net);
    ASSERT_EQ(diags.size(), 1u);
    EXPECT_TRUE(has_message(diags, "groups must divide channels"));
    EXPECT_NE(diags[0].path.find("stage0.block1"), std::string::npos);
}

TEST(Validate, BrokenStageChain) {
    auto net = build_wrn(16, 2, 10);
    net.stages[1].in_channels = 48;
    const auto diags = validate(net);
    ASSERT_EQ(diags.size(), 1u);
    EXPECT_TRUE(has_message(diags, "channel chain broken"));
}

TEST(Validate, MissingProjectionShortcut) {
    auto net = build_wrn(16, 2, 10);
    net.stages[1].blocks[0].shortcut.reset();
    EXPECT_FALSE(validate(net).empty());
}

TEST(Validate, HeadMustMatchLastStage) {
    auto net = build_wrn(16, 2, 10);
    net.head.in_features = 64;
    EXPECT_FALSE(validate(net).empty());
}

TEST(Validate, BatchNormOrderFollowsActivationOrder) {
    auto net = build_wrn(16, 1, 10);
    net.stages[0].blocks[0].activation_order = ActivationOrder::post_activation;
    EXPECT_FALSE(validate(net).empty());
}

TEST(Validate, LaterBlocksMustHaveStrideOne) {
    auto net = build_wrn(16, 1, 10);
    net.stages[1].blocks[1].stride = 2;
    EXPECT_FALSE(validate(net).empty());
}

TEST(AssembleBlock, PreActivationPutsBatchNormBeforeConvs) {
    const auto block = make_standard_stage(16, 32, 2, 1, 3, ActivationOrder::pre_activation)
                           .blocks[0];
    ASSERT_EQ(block.layers.size(), 4u);
    EXPECT_TRUE(std::holds_alternative<BatchNormLayer>(block.layers[0]));
    EXPECT_EQ(std::get<BatchNormLayer>(block.layers[0]).channels, 16);
    EXPECT_TRUE(std::holds_alternative<ConvLayer>(block.layers[1]));
    EXPECT_EQ(std::get<ConvLayer>(block.layers[1]).stride, 2);
    EXPECT_TRUE(block.has_projection_shortcut());
    ASSERT_TRUE(block.shortcut);
    EXPECT_EQ(block.shortcut->kernel_h, 1);
    EXPECT_EQ(block.shortcut->role, ConvRole::shortcut_projection);
}

TEST(AssembleBlock, PostActivationPutsBatchNormAfterConvs) {
    const auto block = make_standard_stage(64, 128, 2, 1, 3, ActivationOrder::post_activation)
                           .blocks[0];
    ASSERT_EQ(block.layers.size(), 4u);
    EXPECT_TRUE(std::holds_alternative<ConvLayer>(block.layers[0]));
    EXPECT_EQ(std::get<BatchNormLayer>(block.layers[1]).channels, 128);
    ASSERT_TRUE(block.shortcut_bn);
    EXPECT_EQ(block.shortcut_bn->channels, 128);
}

TEST(EnumStrings, RoundTrip) {
    for (auto k : {BlockKind::S, BlockKind::S_dilated, BlockKind::G, BlockKind::B, BlockKind::BG}) {
        EXPECT_EQ(block_kind_from_string(to_string(k)), k);
    }
    for (auto r : {ConvRole::stem, ConvRole::block_spatial, ConvRole::block_pointwise,
                   ConvRole::shortcut_projection}) {
        EXPECT_EQ(conv_role_from_string(to_string(r)), r);
    }
    for (auto o : {ActivationOrder::pre_activation, ActivationOrder::post_activation}) {
        EXPECT_EQ(activation_order_from_string(to_string(o)), o);
    }
    EXPECT_THROW(block_kind_from_string("Q"), ArchError);
}
