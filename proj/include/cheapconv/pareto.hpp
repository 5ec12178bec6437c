#pragma once

#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cheapconv/arch_ir.hpp"
#include "cheapconv/cost_model.hpp"
#include "cheapconv/transform.hpp"

namespace cheapconv {

enum class Objective { params_vs_metric, multadds_vs_metric, params_only };

struct ParetoRow {
    std::string label;
    Count params = 0;
    Count mult_adds = 0;
    std::optional<double> metric;  // lower is better, e.g. test error
    bool dominated = false;

    bool operator==(const ParetoRow&) const = default;
};

struct RowError {
    std::string label;
    std::string message;

    bool operator==(const RowError&) const = default;
};

struct ParetoTable {
    std::vector<ParetoRow> rows;
    Objective objective = Objective::params_only;
    std::vector<RowError> errors;

    bool operator==(const ParetoTable&) const = default;
};

struct EnumerateOptions {
    InputShape input;
    MultAddConvention convention = MultAddConvention::conv_linear;
    // Prepended to every row label, e.g. "WRN-16-2/".
    std::string label_prefix;
};

/// One row per recipe, costed on `input`. A recipe that fails substitution
/// is recorded in `errors` and the rest still run. Rows are computed in
/// parallel and returned in recipe order.
ParetoTable enumerate(const NetworkSpec& base, std::span<const BlockRecipe> recipes,
                      const EnumerateOptions& options = {});

ParetoTable enumerate_serial(const NetworkSpec& base, std::span<const BlockRecipe> recipes,
                             const EnumerateOptions& options = {});

/// Weak dominance: a <= b in every objective and a < b in at least one.
bool dominates(const ParetoRow& a, const ParetoRow& b, Objective objective);

/// Returns the table with every row's `dominated` flag set. Throws ArchError
/// when the objective uses the metric and some row lacks one.
ParetoTable mark_dominance(ParetoTable table);

/// Non-dominated rows only, ascending by params (ties keep input order).
ParetoTable pareto_front(const ParetoTable& table);

/// "BG(2, M/4)" -> "BG(2,M/4)", "WRN-16-2 / S" -> "WRN-16-2/S". Labels whose
/// recipe part does not parse are returned trimmed.
std::string canonical_label(const std::string& label);

/// Parses a `label,metric` CSV (header required). Keys are canonical labels.
std::map<std::string, double> parse_metrics_csv(const std::string& text);

/// Fills row metrics by canonical label. Returns metric labels with no row.
std::vector<std::string> attach_metrics(ParetoTable& table,
                                        const std::map<std::string, double>& metrics);

enum class EmitFormat { csv, markdown, svg };

EmitFormat emit_format_from_string(const std::string& text);
Objective objective_from_string(const std::string& text);

/// csv: label,params,mult_adds,metric,dominated with exact integers.
/// markdown: rounded K/M/G columns. svg: log-x scatter, dominated points
/// hollow, front joined by a polyline.
std::string emit(const ParetoTable& table, EmitFormat format);

/// Inverse of emit(table, csv); emit(parse_table_csv(s), csv) == s.
ParetoTable parse_table_csv(const std::string& text);

struct RecipeLine {
    std::optional<std::string> base;  // architecture file, relative to the list
    BlockRecipe recipe;
};

/// One recipe per line; `#` starts a comment; an optional leading
/// `base=<arch-file>` token selects a different base architecture.
std::vector<RecipeLine> parse_recipe_list(const std::string& text);

}  // namespace cheapconv
