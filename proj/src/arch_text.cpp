#include "cheapconv/arch_text.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>
#include <utility>

#include <fmt/format.h>
#include <yaml-cpp/yaml.h>

namespace cheapconv {

namespace {

void emit_conv(YAML::Emitter& out, const ConvLayer& conv) {
    out << YAML::Flow << YAML::BeginMap;
    out << YAML::Key << "type" << YAML::Value << "conv";
    out << YAML::Key << "in_channels" << YAML::Value << conv.in_channels;
    out << YAML::Key << "out_channels" << YAML::Value << conv.out_channels;
    out << YAML::Key << "kernel_h" << YAML::Value << conv.kernel_h;
    out << YAML::Key << "kernel_w" << YAML::Value << conv.kernel_w;
    out << YAML::Key << "stride" << YAML::Value << conv.stride;
    out << YAML::Key << "dilation" << YAML::Value << conv.dilation;
    out << YAML::Key << "groups" << YAML::Value << conv.groups;
    out << YAML::Key << "role" << YAML::Value << to_string(conv.role);
    out << YAML::EndMap;
}

void emit_bn(YAML::Emitter& out, const BatchNormLayer& bn) {
    out << YAML::Flow << YAML::BeginMap;
    out << YAML::Key << "type" << YAML::Value << "batch_norm";
    out << YAML::Key << "channels" << YAML::Value << bn.channels;
    out << YAML::Key << "unit_boundary" << YAML::Value << bn.unit_boundary;
    out << YAML::EndMap;
}

void emit_block(YAML::Emitter& out, const BlockInstance& block) {
    out << YAML::BeginMap;
    out << YAML::Key << "kind" << YAML::Value << to_string(block.kind);
    out << YAML::Key << "activation_order" << YAML::Value << to_string(block.activation_order);
    out << YAML::Key << "in_channels" << YAML::Value << block.in_channels;
    out << YAML::Key << "out_channels" << YAML::Value << block.out_channels;
    out << YAML::Key << "stride" << YAML::Value << block.stride;
    out << YAML::Key << "kernel" << YAML::Value << block.kernel;
    out << YAML::Key << "has_projection_shortcut" << YAML::Value
        << block.has_projection_shortcut();
    if (block.shortcut) {
        out << YAML::Key << "shortcut" << YAML::Value;
        emit_conv(out, *block.shortcut);
    }
    if (block.shortcut_bn) {
        out << YAML::Key << "shortcut_bn" << YAML::Value;
        emit_bn(out, *block.shortcut_bn);
    }
    out << YAML::Key << "layers" << YAML::Value << YAML::BeginSeq;
    for (const auto& layer : block.layers) {
        if (const auto* conv = std::get_if<ConvLayer>(&layer)) {
            emit_conv(out, *conv);
        } else {
            emit_bn(out, std::get<BatchNormLayer>(layer));
        }
    }
    out << YAML::EndSeq;
    out << YAML::EndMap;
}

// Strict field access: every read key is recorded so leftovers can be
// reported as unknown fields.
class Fields {
public:
    Fields(const YAML::Node& node, std::string path) : node_(node), path_(std::move(path)) {
        if (!node_.IsMap()) {
            throw ArchError(fmt::format("{}: expected a mapping", path_));
        }
    }

    template <typename T>
    T get(const std::string& key) {
        seen_.push_back(key);
        const auto value = std::as_const(node_)[key];
        if (!value) {
            throw ArchError(fmt::format("{}: missing field '{}'", path_, key));
        }
        try {
            return value.template as<T>();
        } catch (const YAML::Exception&) {
            throw ArchError(fmt::format("{}: field '{}' has the wrong type", path_, key));
        }
    }

    YAML::Node child(const std::string& key, bool required) {
        seen_.push_back(key);
        const auto value = std::as_const(node_)[key];
        if (!value && required) {
            throw ArchError(fmt::format("{}: missing field '{}'", path_, key));
        }
        return value;
    }

    void finish() const {
        for (const auto& entry : node_) {
            const auto key = entry.first.as<std::string>();
            if (std::find(seen_.begin(), seen_.end(), key) == seen_.end()) {
                throw ArchError(fmt::format("{}: unknown field '{}'", path_, key));
            }
        }
    }

    const std::string& path() const { return path_; }

private:
    YAML::Node node_;
    std::string path_;
    std::vector<std::string> seen_;
};

ConvLayer parse_conv(const YAML::Node& node, const std::string& path) {
    Fields f(node, path);
    if (f.get<std::string>("type") != "conv") {
        throw ArchError(fmt::format("{}: expected a conv layer", path));
    }
    ConvLayer conv;
    conv.in_channels = f.get<int>("in_channels");
    conv.out_channels = f.get<int>("out_channels");
    conv.kernel_h = f.get<int>("kernel_h");
    conv.kernel_w = f.get<int>("kernel_w");
    conv.stride = f.get<int>("stride");
    conv.dilation = f.get<int>("dilation");
    conv.groups = f.get<int>("groups");
    conv.role = conv_role_from_string(f.get<std::string>("role"));
    f.finish();
    return conv;
}

BatchNormLayer parse_bn(const YAML::Node& node, const std::string& path) {
    Fields f(node, path);
    if (f.get<std::string>("type") != "batch_norm") {
        throw ArchError(fmt::format("{}: expected a batch_norm layer", path));
    }
    BatchNormLayer bn;
    bn.channels = f.get<int>("channels");
    bn.unit_boundary = f.get<bool>("unit_boundary");
    f.finish();
    return bn;
}

BlockLayer parse_layer(const YAML::Node& node, const std::string& path) {
    if (!node.IsMap() || !node["type"]) {
        throw ArchError(fmt::format("{}: layer needs a 'type' field", path));
    }
    const auto type = node["type"].as<std::string>();
    if (type == "conv") return parse_conv(node, path);
    if (type == "batch_norm") return parse_bn(node, path);
    throw ArchError(fmt::format("{}: unknown layer type '{}'", path, type));
}

BlockInstance parse_block(const YAML::Node& node, const std::string& path) {
    Fields f(node, path);
    BlockInstance block;
    block.kind = block_kind_from_string(f.get<std::string>("kind"));
    block.activation_order = activation_order_from_string(f.get<std::string>("activation_order"));
    block.in_channels = f.get<int>("in_channels");
    block.out_channels = f.get<int>("out_channels");
    block.stride = f.get<int>("stride");
    block.kernel = f.get<int>("kernel");
    const bool projection = f.get<bool>("has_projection_shortcut");
    if (auto sc = f.child("shortcut", false)) {
        block.shortcut = parse_conv(sc, path + ".shortcut");
    }
    if (projection != block.shortcut.has_value()) {
        throw ArchError(fmt::format("{}: has_projection_shortcut disagrees with the presence of "
                                    "a 'shortcut' conv",
                                    path));
    }
    if (auto sbn = f.child("shortcut_bn", false)) {
        block.shortcut_bn = parse_bn(sbn, path + ".shortcut_bn");
    }
    const auto layers = f.child("layers", true);
    if (!layers.IsSequence()) {
        throw ArchError(fmt::format("{}: 'layers' must be a sequence", path));
    }
    for (std::size_t i = 0; i < layers.size(); ++i) {
        block.layers.push_back(parse_layer(layers[i], fmt::format("{}.layer{}", path, i)));
    }
    f.finish();
    return block;
}

}  // namespace

std::string serialize_network(const NetworkSpec& network) {
    YAML::Emitter out;
    out << YAML::BeginMap;
    out << YAML::Key << "name" << YAML::Value << YAML::DoubleQuoted << network.name;

    out << YAML::Key << "stem" << YAML::Value << YAML::BeginMap;
    out << YAML::Key << "conv" << YAML::Value;
    emit_conv(out, network.stem.conv);
    if (network.stem.bn) {
        out << YAML::Key << "bn" << YAML::Value;
        emit_bn(out, *network.stem.bn);
    }
    if (network.stem.pool) {
        const auto& pool = *network.stem.pool;
        out << YAML::Key << "pool" << YAML::Value << YAML::Flow << YAML::BeginMap;
        out << YAML::Key << "kernel" << YAML::Value << pool.kernel;
        out << YAML::Key << "stride" << YAML::Value << pool.stride;
        out << YAML::Key << "padding" << YAML::Value << pool.padding;
        out << YAML::EndMap;
    }
    out << YAML::EndMap;

    out << YAML::Key << "stages" << YAML::Value << YAML::BeginSeq;
    for (const auto& stage : network.stages) {
        out << YAML::BeginMap;
        out << YAML::Key << "in_channels" << YAML::Value << stage.in_channels;
        out << YAML::Key << "out_channels" << YAML::Value << stage.out_channels;
        out << YAML::Key << "stride" << YAML::Value << stage.stride;
        out << YAML::Key << "blocks" << YAML::Value << YAML::BeginSeq;
        for (const auto& block : stage.blocks) {
            emit_block(out, block);
        }
        out << YAML::EndSeq;
        out << YAML::EndMap;
    }
    out << YAML::EndSeq;

    if (network.final_bn) {
        out << YAML::Key << "final_bn" << YAML::Value;
        emit_bn(out, *network.final_bn);
    }

    out << YAML::Key << "head" << YAML::Value << YAML::Flow << YAML::BeginMap;
    out << YAML::Key << "in_features" << YAML::Value << network.head.in_features;
    out << YAML::Key << "num_classes" << YAML::Value << network.head.num_classes;
    out << YAML::Key << "bias" << YAML::Value << network.head.bias;
    out << YAML::EndMap;

    out << YAML::EndMap;
    return std::string(out.c_str()) + "\n";
}

NetworkSpec parse_network(const std::string& text) {
    YAML::Node root;
    try {
        root = YAML::Load(text);
    } catch (const YAML::Exception& e) {
        throw ArchError(fmt::format("architecture file is not well-formed: {}", e.what()));
    }

    NetworkSpec net;
    Fields f(root, "network");
    net.name = f.get<std::string>("name");

    {
        const auto stem = f.child("stem", true);
        Fields sf(stem, "stem");
        net.stem.conv = parse_conv(sf.child("conv", true), "stem.conv");
        if (auto bn = sf.child("bn", false)) {
            net.stem.bn = parse_bn(bn, "stem.bn");
        }
        if (auto pool = sf.child("pool", false)) {
            Fields pf(pool, "stem.pool");
            net.stem.pool = PoolSpec{pf.get<int>("kernel"), pf.get<int>("stride"),
                                     pf.get<int>("padding")};
            pf.finish();
        }
        sf.finish();
    }

    const auto stages = f.child("stages", true);
    if (!stages.IsSequence()) {
        throw ArchError("network: 'stages' must be a sequence");
    }
    for (std::size_t i = 0; i < stages.size(); ++i) {
        const auto path = fmt::format("stage{}", i);
        Fields sf(stages[i], path);
        StageSpec stage;
        stage.in_channels = sf.get<int>("in_channels");
        stage.out_channels = sf.get<int>("out_channels");
        stage.stride = sf.get<int>("stride");
        const auto blocks = sf.child("blocks", true);
        if (!blocks.IsSequence()) {
            throw ArchError(fmt::format("{}: 'blocks' must be a sequence", path));
        }
        for (std::size_t j = 0; j < blocks.size(); ++j) {
            stage.blocks.push_back(parse_block(blocks[j], block_path(i, j)));
        }
        sf.finish();
        net.stages.push_back(std::move(stage));
    }

    if (auto bn = f.child("final_bn", false)) {
        net.final_bn = parse_bn(bn, "final_bn");
    }

    {
        Fields hf(f.child("head", true), "head");
        net.head.in_features = hf.get<int>("in_features");
        net.head.num_classes = hf.get<int>("num_classes");
        net.head.bias = hf.get<bool>("bias");
        hf.finish();
    }
    f.finish();
    return net;
}

NetworkSpec load_network(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw ArchError(fmt::format("cannot open architecture file '{}'", path));
    }
    std::ostringstream buffer;
    buffer << in.rdbuf();
    return parse_network(buffer.str());
}

void save_network(const NetworkSpec& network, const std::string& path) {
    std::ofstream out(path);
    if (!out) {
        throw ArchError(fmt::format("cannot write architecture file '{}'", path));
    }
    out << serialize_network(network);
}

}  // namespace cheapconv
