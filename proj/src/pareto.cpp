#include "cheapconv/pareto.hpp"

#include <algorithm>
#include <cctype>
#include <sstream>

#include <fmt/format.h>

namespace cheapconv {

namespace {

std::string trim(const std::string& text) {
    const auto first = text.find_first_not_of(" \t\r\n");
    if (first == std::string::npos) return {};
    const auto last = text.find_last_not_of(" \t\r\n");
    return text.substr(first, last - first + 1);
}

ParetoRow cost_row(const NetworkSpec& base, const BlockRecipe& recipe,
                   const EnumerateOptions& options) {
    const auto network = substitute(base, recipe);
    const auto report = network_cost(network, options.input);
    ParetoRow row;
    row.label = options.label_prefix + format_recipe(recipe);
    row.params = report.total_params;
    row.mult_adds = report.mult_adds_under(options.convention);
    return row;
}

ParetoTable collect(std::span<const BlockRecipe> recipes, const EnumerateOptions& options,
                    std::vector<std::optional<ParetoRow>>& rows,
                    std::vector<std::string>& errors) {
    ParetoTable table;
    for (std::size_t i = 0; i < recipes.size(); ++i) {
        if (rows[i]) {
            table.rows.push_back(std::move(*rows[i]));
        } else {
            table.errors.push_back({options.label_prefix + format_recipe(recipes[i]), errors[i]});
        }
    }
    return table;
}

// Objective vector, all components minimized.
std::vector<double> objectives(const ParetoRow& row, Objective objective) {
    switch (objective) {
        case Objective::params_vs_metric:
            return {static_cast<double>(row.params), row.metric.value_or(0.0)};
        case Objective::multadds_vs_metric:
            return {static_cast<double>(row.mult_adds), row.metric.value_or(0.0)};
        case Objective::params_only:
            return {static_cast<double>(row.params)};
    }
    return {};
}

}  // namespace

ParetoTable enumerate(const NetworkSpec& base, std::span<const BlockRecipe> recipes,
                      const EnumerateOptions& options) {
    std::vector<std::optional<ParetoRow>> rows(recipes.size());
    std::vector<std::string> errors(recipes.size());
    const int count = static_cast<int>(recipes.size());
#pragma omp parallel for schedule(dynamic)
    for (int i = 0; i < count; ++i) {
        try {
            rows[i] = cost_row(base, recipes[i], options);
        } catch (const ArchError& e) {
            errors[i] = e.what();
        }
    }
    return collect(recipes, options, rows, errors);
}

ParetoTable enumerate_serial(const NetworkSpec& base, std::span<const BlockRecipe> recipes,
                             const EnumerateOptions& options) {
    std::vector<std::optional<ParetoRow>> rows(recipes.size());
    std::vector<std::string> errors(recipes.size());
    for (std::size_t i = 0; i < recipes.size(); ++i) {
        try {
            rows[i] = cost_row(base, recipes[i], options);
        } catch (const ArchError& e) {
            errors[i] = e.what();
        }
    }
    return collect(recipes, options, rows, errors);
}

bool dominates(const ParetoRow& a, const ParetoRow& b, Objective objective) {
    const auto va = objectives(a, objective);
    const auto vb = objectives(b, objective);
    bool strictly = false;
    for (std::size_t i = 0; i < va.size(); ++i) {
        if (va[i] > vb[i]) return false;
        if (va[i] < vb[i]) strictly = true;
    }
    return strictly;
}

ParetoTable mark_dominance(ParetoTable table) {
    if (table.objective != Objective::params_only) {
        for (const auto& row : table.rows) {
            if (!row.metric) {
                throw ArchError(fmt::format("row '{}' has no metric but the objective needs one",
                                            row.label));
            }
        }
    }
    for (auto& row : table.rows) {
        row.dominated = std::any_of(table.rows.begin(), table.rows.end(), [&](const auto& other) {
            return dominates(other, row, table.objective);
        });
    }
    return table;
}

ParetoTable pareto_front(const ParetoTable& table) {
    auto marked = mark_dominance(table);
    ParetoTable front;
    front.objective = table.objective;
    front.errors = table.errors;
    for (auto& row : marked.rows) {
        if (!row.dominated) front.rows.push_back(std::move(row));
    }
    std::stable_sort(front.rows.begin(), front.rows.end(),
                     [](const auto& a, const auto& b) { return a.params < b.params; });
    return front;
}

std::string canonical_label(const std::string& label) {
    const auto text = trim(label);
    int depth = 0;
    for (std::size_t i = 0; i < text.size(); ++i) {
        if (text[i] == '(') ++depth;
        if (text[i] == ')') --depth;
        if (text[i] == '/' && depth == 0) {
            try {
                return trim(text.substr(0, i)) + "/" +
                       format_recipe(parse_recipe(text.substr(i + 1)));
            } catch (const ArchError&) {
                return text;
            }
        }
    }
    try {
        return format_recipe(parse_recipe(text));
    } catch (const ArchError&) {
        return text;
    }
}

std::map<std::string, double> parse_metrics_csv(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line) || trim(line) != "label,metric") {
        throw ArchError("metrics CSV must start with the header 'label,metric'");
    }
    std::map<std::string, double> metrics;
    int line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        std::string label;
        std::string value;
        if (!line.empty() && line[0] == '"') {
            const auto close = line.find('"', 1);
            if (close == std::string::npos || close + 1 >= line.size() || line[close + 1] != ',') {
                throw ArchError(fmt::format("metrics CSV line {}: malformed quoted label",
                                            line_no));
            }
            label = line.substr(1, close - 1);
            value = line.substr(close + 2);
        } else {
            // Labels may contain commas inside parentheses, e.g. BG(2,M/4).
            const auto comma = line.rfind(',');
            if (comma == std::string::npos) {
                throw ArchError(fmt::format("metrics CSV line {}: expected label,metric",
                                            line_no));
            }
            label = line.substr(0, comma);
            value = line.substr(comma + 1);
        }
        double metric = 0.0;
        try {
            std::size_t used = 0;
            metric = std::stod(trim(value), &used);
            if (used != trim(value).size()) throw std::invalid_argument("trailing");
        } catch (const std::exception&) {
            throw ArchError(fmt::format("metrics CSV line {}: '{}' is not a number", line_no,
                                        trim(value)));
        }
        const auto key = canonical_label(label);
        if (!metrics.emplace(key, metric).second) {
            throw ArchError(fmt::format("metrics CSV line {}: duplicate label '{}'", line_no, key));
        }
    }
    return metrics;
}

std::vector<std::string> attach_metrics(ParetoTable& table,
                                        const std::map<std::string, double>& metrics) {
    std::vector<std::string> used;
    for (auto& row : table.rows) {
        const auto it = metrics.find(canonical_label(row.label));
        if (it != metrics.end()) {
            row.metric = it->second;
            used.push_back(it->first);
        }
    }
    std::vector<std::string> unused;
    for (const auto& [label, value] : metrics) {
        if (std::find(used.begin(), used.end(), label) == used.end()) unused.push_back(label);
    }
    return unused;
}

EmitFormat emit_format_from_string(const std::string& text) {
    if (text == "csv") return EmitFormat::csv;
    if (text == "md" || text == "markdown") return EmitFormat::markdown;
    if (text == "svg") return EmitFormat::svg;
    throw ArchError(fmt::format("unknown output format '{}' (expected csv, md or svg)", text));
}

Objective objective_from_string(const std::string& text) {
    if (text == "params" || text == "params_vs_metric") return Objective::params_vs_metric;
    if (text == "madds" || text == "multadds_vs_metric") return Objective::multadds_vs_metric;
    if (text == "params-only" || text == "params_only") return Objective::params_only;
    throw ArchError(fmt::format("unknown objective '{}' (expected params, madds or params-only)",
                                text));
}

std::vector<RecipeLine> parse_recipe_list(const std::string& text) {
    std::vector<RecipeLine> lines;
    std::istringstream in(text);
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        RecipeLine entry;
        if (line.rfind("base=", 0) == 0) {
            const auto space = line.find_first_of(" \t");
            if (space == std::string::npos) {
                throw ArchError(fmt::format("recipe list line {}: 'base=' needs a recipe after it",
                                            line_no));
            }
            entry.base = line.substr(5, space - 5);
            line = trim(line.substr(space));
        }
        try {
            entry.recipe = parse_recipe(line);
        } catch (const ArchError& e) {
            throw ArchError(fmt::format("recipe list line {}: {}", line_no, e.what()));
        }
        lines.push_back(std::move(entry));
    }
    return lines;
}

}  // namespace cheapconv
