#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "cheapconv/arch_text.hpp"
#include "cheapconv/cost_model.hpp"
#include "cheapconv/pareto.hpp"
#include "cheapconv/transform.hpp"
#include "cheapconv/verify.hpp"

namespace fs = std::filesystem;
using namespace cheapconv;

namespace {

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ArchError(fmt::format("cannot open '{}'", path));
    std::ostringstream buffer;
    buffer << in.rdbuf();
    return buffer.str();
}

void write_output(const std::string& text, const std::string& path) {
    if (path.empty() || path == "-") {
        std::cout << text;
        return;
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ArchError(fmt::format("cannot write '{}'", path));
    out << text;
}

NetworkSpec load_valid(const std::string& path) {
    auto network = load_network(path);
    const auto diagnostics = validate(network);
    if (!diagnostics.empty()) {
        std::string message = fmt::format("{} is not a valid network:", path);
        for (const auto& d : diagnostics) message += fmt::format("\n  {}: {}", d.path, d.message);
        throw ArchError(message);
    }
    return network;
}

std::vector<double> parse_scales(const std::string& text) {
    std::vector<double> scales;
    std::stringstream in(text);
    std::string item;
    while (std::getline(in, item, ',')) scales.push_back(std::stod(item));
    if (scales.size() == 1) scales.resize(4, scales[0]);
    return scales;
}

int count_conv_layers(const NetworkSpec& network, bool include_shortcuts) {
    int count = 1;
    for (const auto& stage : network.stages) {
        for (const auto& block : stage.blocks) {
            for (const auto& layer : block.layers) count += std::holds_alternative<ConvLayer>(layer);
            if (include_shortcuts && block.shortcut) ++count;
        }
    }
    return count;
}

std::string describe(const NetworkSpec& network) {
    std::string out = fmt::format("network {}\n", network.name);
    const auto& stem = network.stem.conv;
    out += fmt::format("  stem conv {}x{} {}->{} stride {}{}{}\n", stem.kernel_h, stem.kernel_w,
                       stem.in_channels, stem.out_channels, stem.stride,
                       network.stem.bn ? " +bn" : "",
                       network.stem.pool ? fmt::format(" +pool {}/{}/{}", network.stem.pool->kernel,
                                                       network.stem.pool->stride,
                                                       network.stem.pool->padding)
                                         : "");
    for (std::size_t s = 0; s < network.stages.size(); ++s) {
        const auto& stage = network.stages[s];
        out += fmt::format("  stage{} {}->{} stride {} blocks {}\n", s, stage.in_channels,
                           stage.out_channels, stage.stride, stage.blocks.size());
        for (std::size_t b = 0; b < stage.blocks.size(); ++b) {
            const auto& block = stage.blocks[b];
            std::string convs;
            for (const auto& layer : block.layers) {
                if (const auto* c = std::get_if<ConvLayer>(&layer)) {
                    convs += fmt::format(" {}x{}:{}->{}", c->kernel_h, c->kernel_w,
                                         c->in_channels, c->out_channels);
                    if (c->groups > 1) convs += fmt::format("/g{}", c->groups);
                    if (c->stride > 1) convs += fmt::format("/s{}", c->stride);
                    if (c->dilation > 1) convs += fmt::format("/d{}", c->dilation);
                }
            }
            out += fmt::format("    {} {} ({}){}{}\n", block_path(s, b), to_string(block.kind),
                               to_string(block.activation_order), convs,
                               block.shortcut ? " +proj" : "");
        }
    }
    if (network.final_bn) out += fmt::format("  final_bn {}\n", network.final_bn->channels);
    out += fmt::format("  head linear {}->{}{}\n", network.head.in_features,
                       network.head.num_classes, network.head.bias ? " +bias" : "");
    out += fmt::format("  weighted layers {} (excluding shortcuts {})\n",
                       count_conv_layers(network, true) + 1, count_conv_layers(network, false) + 1);
    return out;
}

std::string cost_text(const CostReport& report) {
    std::string out = fmt::format("{:<16} {:<10} {:>12} {:>14} {:>12}\n", "path", "kind", "params",
                                  "mult_adds", "act_ops");
    for (const auto& entry : report.per_block) {
        out += fmt::format("{:<16} {:<10} {:>12} {:>14} {:>12}\n", entry.path, entry.kind,
                           entry.params, entry.mult_adds, entry.activation_ops);
    }
    out += fmt::format("params {} ({}K, {}M)\n", report.total_params,
                       format_thousands(report.total_params), format_millions(report.total_params));
    out += fmt::format("  conv {}  bn {}  head {}\n", report.conv_params, report.bn_params,
                       report.head_params);
    out += fmt::format("mult_adds {} ({}M) conv+linear\n", report.mult_adds,
                       format_millions(report.mult_adds));
    const auto total = report.mult_adds_under(MultAddConvention::with_activations);
    out += fmt::format("mult_adds {} ({}M) with block activations\n", total,
                       format_millions(total));
    return out;
}

struct EnumerateArgs {
    std::string arch;
    std::string recipes;
    std::string metrics;
    std::string format = "csv";
    std::string objective = "params";
    std::string input = "3x32x32";
    std::string output;
    bool pareto = false;
    bool count_activations = false;
};

// Runs every recipe in the list; rows on a non-default base are prefixed
// with that network's name.
ParetoTable run_enumerate(const EnumerateArgs& args) {
    const auto base = load_valid(args.arch);
    const auto lines = parse_recipe_list(read_file(args.recipes));
    const auto list_dir = fs::path(args.recipes).parent_path();

    EnumerateOptions options;
    options.input = parse_input_shape(args.input);
    options.convention = args.count_activations ? MultAddConvention::with_activations
                                                : MultAddConvention::conv_linear;

    ParetoTable table;
    table.objective = objective_from_string(args.objective);
    std::map<std::string, NetworkSpec> bases;
    // Consecutive lines on the same base are enumerated as one batch.
    for (std::size_t first = 0; first < lines.size();) {
        std::size_t last = first;
        std::vector<BlockRecipe> batch;
        while (last < lines.size() && lines[last].base == lines[first].base) {
            batch.push_back(lines[last++].recipe);
        }
        const NetworkSpec* network = &base;
        EnumerateOptions batch_options = options;
        if (const auto& name = lines[first].base) {
            auto it = bases.find(*name);
            if (it == bases.end()) {
                it = bases.emplace(*name, load_valid((list_dir / *name).string())).first;
            }
            network = &it->second;
            batch_options.label_prefix = network->name + "/";
        }
        auto part = enumerate(*network, batch, batch_options);
        for (auto& row : part.rows) table.rows.push_back(std::move(row));
        for (auto& error : part.errors) table.errors.push_back(std::move(error));
        first = last;
    }

    if (!args.metrics.empty()) {
        const auto unused = attach_metrics(table, parse_metrics_csv(read_file(args.metrics)));
        for (const auto& label : unused) {
            std::cerr << fmt::format("warning: metric label '{}' matches no row\n", label);
        }
    }
    const bool have_metrics = std::all_of(table.rows.begin(), table.rows.end(),
                                          [](const auto& row) { return row.metric.has_value(); });
    if (args.pareto) return pareto_front(table);
    if (table.objective == Objective::params_only || have_metrics) return mark_dominance(table);
    return table;
}

void print_error_rows(const ParetoTable& table) {
    for (const auto& error : table.errors) {
        std::cerr << fmt::format("error: {}: {}\n", error.label, error.message);
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Cost, transform and compare cheap-convolution network variants"};
    app.require_subcommand(1);

    auto* build = app.add_subcommand("build", "Write a reference architecture file");
    std::string family;
    int depth = 40, width = 2, classes = 0;
    std::string scales = "1";
    std::string build_out;
    build->add_option("family", family, "wrn, resnet18 or resnet34")
        ->required()
        ->check(CLI::IsMember({"wrn", "resnet18", "resnet34"}));
    build->add_option("--depth", depth, "WRN depth (6n+4)");
    build->add_option("--width", width, "WRN width multiplier");
    build->add_option("--classes", classes, "Number of output classes (default 10 for wrn, 1000 for resnet)");
    build->add_option("--scale", scales, "ResNet per-stage width scale, one value or four");
    build->add_option("-o,--output", build_out, "Output file (default stdout)");

    auto* describe_cmd = app.add_subcommand("describe", "Print and validate an architecture");
    std::string describe_arch;
    describe_cmd->add_option("arch", describe_arch)->required();

    auto* cost = app.add_subcommand("cost", "Parameter and mult-add report");
    std::string cost_arch, cost_input = "3x32x32", cost_format = "text";
    cost->add_option("arch", cost_arch)->required();
    cost->add_option("--input", cost_input, "Input shape CxHxW");
    cost->add_option("--format", cost_format)->check(CLI::IsMember({"text", "csv"}));

    auto* subst = app.add_subcommand("substitute", "Replace every block with a recipe");
    std::string subst_arch, subst_recipe, subst_out;
    subst->add_option("arch", subst_arch)->required();
    subst->add_option("--recipe", subst_recipe, "e.g. G(N/8), BG(2,M/4), S-2x2")->required();
    subst->add_option("-o,--output", subst_out, "Output file (default stdout)");

    auto* enumerate_cmd = app.add_subcommand("enumerate", "Cost a list of recipes");
    EnumerateArgs en;
    enumerate_cmd->add_option("arch", en.arch)->required();
    enumerate_cmd->add_option("--recipes", en.recipes, "One recipe per line")->required();
    enumerate_cmd->add_option("--metrics", en.metrics, "CSV with header label,metric");
    enumerate_cmd->add_option("--format", en.format, "csv, md or svg");
    enumerate_cmd->add_option("--objective", en.objective, "params, madds or params-only");
    enumerate_cmd->add_option("--input", en.input, "Input shape CxHxW");
    enumerate_cmd->add_flag("--pareto", en.pareto, "Keep only the Pareto front");
    enumerate_cmd->add_flag("--count-activations", en.count_activations,
                            "Add one op per element at block activations to mult-adds");
    enumerate_cmd->add_option("-o,--output", en.output, "Output file (default stdout)");

    auto* pareto = app.add_subcommand("pareto", "Pareto front of a CSV table");
    std::string pareto_table, pareto_format = "csv", pareto_objective = "params", pareto_out;
    pareto->add_option("table", pareto_table)->required();
    pareto->add_option("--format", pareto_format, "csv, md or svg");
    pareto->add_option("--objective", pareto_objective, "params, madds or params-only");
    pareto->add_option("-o,--output", pareto_out, "Output file (default stdout)");

    auto* verify_cmd = app.add_subcommand("verify", "Run the loss and convolution check suites");
    verify::SuiteOptions suite_options;
    verify_cmd->add_option("--seed", suite_options.seed);
    verify_cmd->add_option("--instances", suite_options.gradient_instances)
        ->check(CLI::PositiveNumber);
    verify_cmd->add_option("--shapes", suite_options.conv_shapes)->check(CLI::PositiveNumber);

    CLI11_PARSE(app, argc, argv);

    try {
        if (build->parsed()) {
            NetworkSpec network;
            if (family == "wrn") {
                network = build_wrn(depth, width, classes ? classes : 10);
            } else {
                network = build_resnet(family == "resnet18" ? ResNetVariant::resnet18
                                                            : ResNetVariant::resnet34,
                                       parse_scales(scales), classes ? classes : 1000);
            }
            write_output(serialize_network(network), build_out);
        } else if (describe_cmd->parsed()) {
            const auto network = load_network(describe_arch);
            std::cout << describe(network);
            const auto diagnostics = validate(network);
            if (!diagnostics.empty()) {
                for (const auto& d : diagnostics) {
                    std::cerr << fmt::format("invalid: {}: {}\n", d.path, d.message);
                }
                return 2;
            }
            std::cout << "valid\n";
        } else if (cost->parsed()) {
            const auto report = network_cost(load_valid(cost_arch), parse_input_shape(cost_input));
            std::cout << (cost_format == "csv" ? cost_report_csv(report) : cost_text(report));
        } else if (subst->parsed()) {
            const auto network = substitute(load_valid(subst_arch), parse_recipe(subst_recipe));
            write_output(serialize_network(network), subst_out);
        } else if (enumerate_cmd->parsed()) {
            const auto format = emit_format_from_string(en.format);
            const auto table = run_enumerate(en);
            write_output(emit(table, format), en.output);
            print_error_rows(table);
            if (!table.errors.empty()) return 3;
        } else if (pareto->parsed()) {
            const auto format = emit_format_from_string(pareto_format);
            auto table = parse_table_csv(read_file(pareto_table));
            table.objective = objective_from_string(pareto_objective);
            write_output(emit(pareto_front(table), format), pareto_out);
        } else if (verify_cmd->parsed()) {
            bool all = true;
            for (const auto& result : verify::run_all(suite_options)) {
                std::cout << fmt::format("{}  {:<52} {}  [{:.2f}s]\n",
                                         result.passed ? "PASS" : "FAIL", result.name,
                                         result.detail, result.seconds);
                all = all && result.passed;
            }
            return all ? 0 : 1;
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    }
    return 0;
}
