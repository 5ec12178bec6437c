#include <algorithm>
#include <cmath>
#include <sstream>

#include <fmt/format.h>

#include "cheapconv/pareto.hpp"

namespace cheapconv {

namespace {

std::string csv_field(const std::string& text) {
    if (text.find_first_of(",\"\n") == std::string::npos) return text;
    std::string out = "\"";
    for (char c : text) {
        if (c == '"') out += '"';
        out += c;
    }
    return out + "\"";
}

std::vector<std::string> split_csv_line(const std::string& line, int line_no) {
    std::vector<std::string> fields;
    std::string current;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char c = line[i];
        if (quoted) {
            if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
                current += '"';
                ++i;
            } else if (c == '"') {
                quoted = false;
            } else {
                current += c;
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            fields.push_back(std::move(current));
            current.clear();
        } else {
            current += c;
        }
    }
    if (quoted) throw ArchError(fmt::format("table CSV line {}: unterminated quote", line_no));
    fields.push_back(std::move(current));
    return fields;
}

Count parse_count(const std::string& text, int line_no) {
    try {
        std::size_t used = 0;
        const long long value = std::stoll(text, &used);
        if (used == text.size()) return value;
    } catch (const std::exception&) {
    }
    throw ArchError(fmt::format("table CSV line {}: '{}' is not an integer", line_no, text));
}

std::string emit_csv(const ParetoTable& table) {
    std::ostringstream out;
    out << "label,params,mult_adds,metric,dominated\n";
    for (const auto& row : table.rows) {
        out << csv_field(row.label) << ',' << row.params << ',' << row.mult_adds << ',';
        if (row.metric) out << fmt::format("{}", *row.metric);
        out << ',' << (row.dominated ? "true" : "false") << '\n';
    }
    return out.str();
}

std::string emit_markdown(const ParetoTable& table) {
    Count max_params = 0;
    Count max_madds = 0;
    bool any_metric = false;
    for (const auto& row : table.rows) {
        max_params = std::max(max_params, row.params);
        max_madds = std::max(max_madds, row.mult_adds);
        any_metric = any_metric || row.metric.has_value();
    }
    // Small networks read in K / M; large ones carry a unit per cell (21.8M, 3.669G, 909M).
    const bool params_in_millions = max_params >= 10000000;
    const bool madds_in_billions = max_madds >= 1000000000;
    const auto params_cell = [&](Count v) {
        return params_in_millions ? format_millions(v) + "M" : format_thousands(v);
    };
    const auto madds_cell = [&](Count v) {
        if (!madds_in_billions) return format_millions(v);
        return v >= 1000000000 ? format_billions(v) + "G" : format_millions(v, 0) + "M";
    };

    std::ostringstream out;
    out << "| Config | Params" << (params_in_millions ? "" : " (K)") << " | MAdds"
        << (madds_in_billions ? "" : " (M)") << " |";
    if (any_metric) out << " Metric |";
    out << " Pareto |\n";
    out << "|---|---:|---:|" << (any_metric ? "---:|" : "") << ":---:|\n";
    for (const auto& row : table.rows) {
        out << "| " << row.label << " | " << params_cell(row.params) << " | "
            << madds_cell(row.mult_adds) << " |";
        if (any_metric) {
            out << ' ' << (row.metric ? fmt::format("{:.2f}", *row.metric) : std::string("--"))
                << " |";
        }
        out << ' ' << (row.dominated ? "" : "*") << " |\n";
    }
    for (const auto& error : table.errors) {
        out << "\n> " << error.label << ": " << error.message << '\n';
    }
    return out.str();
}

std::string xml_escape(const std::string& text) {
    std::string out;
    for (char c : text) {
        switch (c) {
            case '&': out += "&amp;"; break;
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            case '"': out += "&quot;"; break;
            default: out += c;
        }
    }
    return out;
}

std::string short_count(double value) {
    if (value >= 1e9) return fmt::format("{:g}G", value / 1e9);
    if (value >= 1e6) return fmt::format("{:g}M", value / 1e6);
    if (value >= 1e3) return fmt::format("{:g}K", value / 1e3);
    return fmt::format("{:g}", value);
}

struct Axis {
    double lo;
    double hi;
    bool log;
    double pixel_lo;
    double pixel_hi;

    double map(double v) const {
        const double t = log ? (std::log10(v) - lo) / (hi - lo) : (v - lo) / (hi - lo);
        return pixel_lo + t * (pixel_hi - pixel_lo);
    }
};

Axis log_axis(const std::vector<double>& values, double pixel_lo, double pixel_hi) {
    double lo = std::floor(std::log10(*std::min_element(values.begin(), values.end())));
    double hi = std::ceil(std::log10(*std::max_element(values.begin(), values.end())));
    if (hi <= lo) hi = lo + 1;
    return {lo, hi, true, pixel_lo, pixel_hi};
}

Axis linear_axis(const std::vector<double>& values, double pixel_lo, double pixel_hi) {
    double lo = *std::min_element(values.begin(), values.end());
    double hi = *std::max_element(values.begin(), values.end());
    const double pad = hi > lo ? 0.05 * (hi - lo) : 1.0;
    return {lo - pad, hi + pad, false, pixel_lo, pixel_hi};
}

std::string emit_svg(const ParetoTable& table) {
    if (table.rows.empty()) {
        throw ArchError("cannot plot an empty table");
    }
    constexpr double width = 720, height = 480;
    constexpr double left = 80, right = 30, top = 30, bottom = 60;

    const bool x_is_madds = table.objective == Objective::multadds_vs_metric;
    const bool y_is_metric = table.objective != Objective::params_only;
    std::vector<double> xs, ys;
    for (const auto& row : table.rows) {
        const double x = static_cast<double>(x_is_madds ? row.mult_adds : row.params);
        double y = 0.0;
        if (y_is_metric) {
            if (!row.metric) {
                throw ArchError(fmt::format("row '{}' has no metric to plot", row.label));
            }
            y = *row.metric;
        } else {
            y = static_cast<double>(row.mult_adds);
        }
        if (x <= 0 || (!y_is_metric && y <= 0)) {
            throw ArchError(fmt::format("row '{}' cannot be placed on a log axis", row.label));
        }
        xs.push_back(x);
        ys.push_back(y);
    }
    const Axis xa = log_axis(xs, left, width - right);
    const Axis ya = y_is_metric ? linear_axis(ys, height - bottom, top)
                                : log_axis(ys, height - bottom, top);

    std::ostringstream out;
    out << fmt::format("<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{}\" height=\"{}\" "
                       "viewBox=\"0 0 {} {}\" font-family=\"sans-serif\">\n",
                       width, height, width, height);
    out << fmt::format("<rect x=\"0\" y=\"0\" width=\"{}\" height=\"{}\" fill=\"white\"/>\n",
                       width, height);
    out << fmt::format("<line x1=\"{:.2f}\" y1=\"{:.2f}\" x2=\"{:.2f}\" y2=\"{:.2f}\" "
                       "stroke=\"black\"/>\n",
                       left, height - bottom, width - right, height - bottom);
    out << fmt::format("<line x1=\"{:.2f}\" y1=\"{:.2f}\" x2=\"{:.2f}\" y2=\"{:.2f}\" "
                       "stroke=\"black\"/>\n",
                       left, top, left, height - bottom);

    for (double e = xa.lo; e <= xa.hi + 1e-9; e += 1.0) {
        const double px = xa.map(std::pow(10.0, e));
        out << fmt::format("<line x1=\"{0:.2f}\" y1=\"{1:.2f}\" x2=\"{0:.2f}\" y2=\"{2:.2f}\" "
                           "stroke=\"#ccc\"/>\n",
                           px, top, height - bottom);
        out << fmt::format("<text x=\"{:.2f}\" y=\"{:.2f}\" font-size=\"11\" "
                           "text-anchor=\"middle\">{}</text>\n",
                           px, height - bottom + 16, short_count(std::pow(10.0, e)));
    }
    constexpr int y_ticks = 5;
    for (int i = 0; i <= y_ticks; ++i) {
        const double t = ya.lo + (ya.hi - ya.lo) * i / y_ticks;
        const double value = ya.log ? std::pow(10.0, t) : t;
        const double py = ya.map(value);
        out << fmt::format("<line x1=\"{0:.2f}\" y1=\"{1:.2f}\" x2=\"{2:.2f}\" y2=\"{1:.2f}\" "
                           "stroke=\"#eee\"/>\n",
                           left, py, width - right);
        out << fmt::format("<text x=\"{:.2f}\" y=\"{:.2f}\" font-size=\"11\" "
                           "text-anchor=\"end\">{}</text>\n",
                           left - 6, py + 4,
                           ya.log ? short_count(value) : fmt::format("{:.2f}", value));
    }
    out << fmt::format("<text x=\"{:.2f}\" y=\"{:.2f}\" font-size=\"13\" "
                       "text-anchor=\"middle\">{} (log scale)</text>\n",
                       (left + width - right) / 2, height - 18,
                       x_is_madds ? "Mult-adds" : "Parameters");
    out << fmt::format("<text x=\"18\" y=\"{:.2f}\" font-size=\"13\" text-anchor=\"middle\" "
                       "transform=\"rotate(-90 18 {:.2f})\">{}</text>\n",
                       (top + height - bottom) / 2, (top + height - bottom) / 2,
                       y_is_metric ? "Metric" : "Mult-adds (log scale)");

    std::vector<std::pair<double, double>> front;
    for (std::size_t i = 0; i < table.rows.size(); ++i) {
        if (!table.rows[i].dominated) front.emplace_back(xa.map(xs[i]), ya.map(ys[i]));
    }
    std::sort(front.begin(), front.end());
    if (!front.empty()) {
        out << "<polyline fill=\"none\" stroke=\"#d62728\" stroke-width=\"1.5\" points=\"";
        for (std::size_t i = 0; i < front.size(); ++i) {
            out << (i ? " " : "") << fmt::format("{:.2f},{:.2f}", front[i].first, front[i].second);
        }
        out << "\"/>\n";
    }

    for (std::size_t i = 0; i < table.rows.size(); ++i) {
        const auto& row = table.rows[i];
        const double px = xa.map(xs[i]);
        const double py = ya.map(ys[i]);
        out << fmt::format("<circle cx=\"{:.2f}\" cy=\"{:.2f}\" r=\"4\" stroke=\"#1f77b4\" "
                           "fill=\"{}\" class=\"{}\"><title>{}</title></circle>\n",
                           px, py, row.dominated ? "none" : "#1f77b4",
                           row.dominated ? "dominated" : "front", xml_escape(row.label));
        out << fmt::format("<text x=\"{:.2f}\" y=\"{:.2f}\" font-size=\"9\">{}</text>\n", px + 6,
                           py - 6, xml_escape(row.label));
    }
    out << "</svg>\n";
    return out.str();
}

}  // namespace

std::string emit(const ParetoTable& table, EmitFormat format) {
    switch (format) {
        case EmitFormat::csv: return emit_csv(table);
        case EmitFormat::markdown: return emit_markdown(table);
        case EmitFormat::svg: return emit_svg(table);
    }
    throw ArchError("unknown output format");
}

ParetoTable parse_table_csv(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line) || line != "label,params,mult_adds,metric,dominated") {
        throw ArchError("table CSV must start with 'label,params,mult_adds,metric,dominated'");
    }
    ParetoTable table;
    int line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        const auto fields = split_csv_line(line, line_no);
        if (fields.size() != 5) {
            throw ArchError(fmt::format("table CSV line {}: expected 5 fields, got {}", line_no,
                                        fields.size()));
        }
        ParetoRow row;
        row.label = fields[0];
        row.params = parse_count(fields[1], line_no);
        row.mult_adds = parse_count(fields[2], line_no);
        if (!fields[3].empty()) {
            try {
                row.metric = std::stod(fields[3]);
            } catch (const std::exception&) {
                throw ArchError(fmt::format("table CSV line {}: bad metric '{}'", line_no,
                                            fields[3]));
            }
        }
        if (fields[4] != "true" && fields[4] != "false") {
            throw ArchError(fmt::format("table CSV line {}: dominated must be true or false",
                                        line_no));
        }
        row.dominated = fields[4] == "true";
        table.rows.push_back(std::move(row));
    }
    return table;
}

}  // namespace cheapconv
