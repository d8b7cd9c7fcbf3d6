// Copyright (c) 2026, The symloc authors
// SPDX-License-Identifier: Apache-2.0
//
// The analysis report: one canonical in-memory model, serialized to JSON
// (sorted keys, floats rounded to 6 significant digits) and rendered to CSV,
// Markdown and per-curve TSV from that same model.

#pragma once

#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "symloc/error.hpp"
#include "symloc/localize.hpp"
#include "symloc/metrics.hpp"
#include "symloc/trace_model.hpp"

namespace symloc {

inline constexpr std::string_view kToolVersion = "0.1.0";

struct ReportConfig {
    std::uint32_t iterations = 4;
    double delta = kDefaultDelta;
    double kappa = kDefaultKappa;
    std::optional<TaskFormat> format_filter;
    std::map<std::string, std::vector<std::uint32_t>> layers;
    bool judgments = false;

    bool operator==(const ReportConfig&) const = default;
};

struct ReportMetadata {
    std::string corpus_hash;
    std::string tool_version{kToolVersion};
    ReportConfig config;
    std::uint64_t samples_read = 0;
    std::uint64_t samples_used = 0;
};

struct PropertyRateRow {
    std::string model_id;
    std::string dataset;
    TaskFormat task_format = TaskFormat::QA;
    SymbolicProperty property;
    RateCell cell;
};

struct LengthBinRow {
    std::string model_id;
    std::string dataset;
    TaskFormat task_format = TaskFormat::QA;
    LengthBin bin;
    SymbolicProperty property;
    RateCell cell;
};

struct LayerAttentionRow {
    std::string model_id;
    TaskFormat task_format = TaskFormat::QA;
    SymbolicProperty property;
    std::uint32_t layer = 0;
    double mean = 0.0;
    double median = 0.0;
    std::size_t n = 0;
};

struct CurvePoint {
    std::uint32_t layer = 0;
    double sd = 0.0;
    double median = 0.0;
    std::size_t n = 0;
};

struct SdCurve {
    std::string model_id;
    SymbolicProperty property;
    std::vector<CurvePoint> points;
    std::optional<SpikeWindow> spike_window;
};

struct LscCurve {
    std::string model_id;
    std::size_t samples = 0;
    std::vector<double> values;
};

struct CorrelationRow {
    SymbolicProperty property;
    std::string model_a;
    std::string model_b;
    std::optional<double> r;
};

struct Exclusion {
    std::string model_id;
    std::string sample_id;
    std::uint32_t iteration = 0;
    std::string reason;

    auto key() const { return std::tie(model_id, sample_id, iteration, reason); }
};

struct AnalysisReport {
    ReportMetadata metadata;
    std::vector<PropertyRateRow> property_rates;
    std::vector<LengthBinRow> length_bins;
    std::vector<LayerAttentionRow> layer_attention;
    std::vector<SdCurve> sd_curves;
    std::vector<LscCurve> lsc_curves;
    std::vector<CorrelationRow> correlations;
    std::vector<LocalizationSummary> localization;
    std::vector<Exclusion> exclusions;
};

// ---------------------------------------------------------------------------
// Canonical JSON

/// Rounds to 6 significant digits so serialized values are platform stable.
inline double round6(double v) {
    if (!std::isfinite(v) || v == 0.0) return v == 0.0 ? 0.0 : v;
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.6g", v);
    return std::strtod(buf, nullptr);
}

namespace detail {

inline nlohmann::json cell_json(const RateCell& c) {
    return {{"hallucinated", c.hallucinated},
            {"total", c.total},
            {"percentage", round6(c.percentage())},
            {"cell", format_rate_cell(c)},
            {"no_occurrences", c.no_occurrences()}};
}

inline RateCell cell_from(const nlohmann::json& j) {
    return RateCell{j.at("hallucinated").get<std::size_t>(), j.at("total").get<std::size_t>()};
}

inline nlohmann::json window_json(const std::optional<SpikeWindow>& w) {
    if (!w) return nullptr;
    return nlohmann::json::array({w->start_layer, w->end_layer});
}

inline std::optional<SpikeWindow> window_from(const nlohmann::json& j) {
    if (j.is_null()) return std::nullopt;
    return SpikeWindow{j.at(0).get<std::uint32_t>(), j.at(1).get<std::uint32_t>()};
}

inline SymbolicProperty property_from(const nlohmann::json& j) {
    auto p = property_from_name(j.get<std::string>());
    if (!p) throw Error(ErrorCode::UnknownProperty, "unknown property '" + j.get<std::string>() + "'");
    return *p;
}

inline TaskFormat format_from(const nlohmann::json& j) {
    auto f = format_from_name(j.get<std::string>());
    if (!f) throw Error(ErrorCode::Parse, "unknown task format '" + j.get<std::string>() + "'");
    return *f;
}

inline LengthBin bin_from(const nlohmann::json& j) {
    const auto s = j.get<std::string>();
    for (auto b : kAllLengthBins)
        if (length_bin_label(b) == s) return b;
    throw Error(ErrorCode::Parse, "unknown length bin '" + s + "'");
}

} // namespace detail

inline nlohmann::json config_to_json(const ReportConfig& c) {
    nlohmann::json layers = nlohmann::json::object();
    for (const auto& [m, ls] : c.layers) layers[m] = ls;
    return {{"iterations", c.iterations},
            {"delta", round6(c.delta)},
            {"kappa", round6(c.kappa)},
            {"format_filter", c.format_filter ? nlohmann::json(format_name(*c.format_filter)) : nlohmann::json(nullptr)},
            {"layers", layers},
            {"judgments", c.judgments}};
}

inline ReportConfig config_from_json(const nlohmann::json& j) {
    ReportConfig c;
    c.iterations = j.at("iterations").get<std::uint32_t>();
    c.delta = j.at("delta").get<double>();
    c.kappa = j.at("kappa").get<double>();
    if (!j.at("format_filter").is_null()) c.format_filter = detail::format_from(j.at("format_filter"));
    for (const auto& [m, ls] : j.at("layers").items()) c.layers[m] = ls.get<std::vector<std::uint32_t>>();
    c.judgments = j.at("judgments").get<bool>();
    return c;
}

inline nlohmann::json localization_summary_json(const LocalizationSummary& s) {
    nlohmann::json hist = nlohmann::json::array();
    for (const auto& [layer, count] : s.histogram)
        hist.push_back({{"layer", layer}, {"count", count}, {"mass", round6(s.mass(layer))}});
    return {{"model_id", s.model_id},
            {"property", property_name(s.property)},
            {"samples", s.samples},
            {"localized", s.localized},
            {"stable", s.stable()},
            {"no_occurrences", s.no_occurrences()},
            {"histogram", hist},
            {"modal_layer", s.modal_layer ? nlohmann::json(*s.modal_layer) : nlohmann::json(nullptr)},
            {"spike_window", detail::window_json(s.spike_window)}};
}

inline LocalizationSummary localization_summary_from(const nlohmann::json& j) {
    LocalizationSummary s;
    s.model_id = j.at("model_id").get<std::string>();
    s.property = detail::property_from(j.at("property"));
    s.samples = j.at("samples").get<std::size_t>();
    s.localized = j.at("localized").get<std::size_t>();
    for (const auto& h : j.at("histogram")) s.histogram[h.at("layer").get<std::uint32_t>()] = h.at("count").get<std::size_t>();
    if (!j.at("modal_layer").is_null()) s.modal_layer = j.at("modal_layer").get<std::uint32_t>();
    s.spike_window = detail::window_from(j.at("spike_window"));
    return s;
}

inline nlohmann::json sample_localization_json(const SampleLocalization& s) {
    const auto& r = s.result;
    nlohmann::json j = {{"model_id", s.model_id},
                        {"task_format", format_name(s.task_format)},
                        {"sample_id", s.sample_id},
                        {"iteration", s.iteration},
                        {"property", property_name(r.property)}};
    if (r.first_instability_layer) {
        j["first_instability_layer"] = *r.first_instability_layer;
        j["symbolic_token"] = r.symbolic_token;
        j["symbolic_attention"] = round6(r.symbolic_attention);
        j["max_token"] = r.max_token;
        j["max_attention"] = round6(r.max_attention);
    } else {
        j["first_instability_layer"] = nullptr;
    }
    return j;
}

inline nlohmann::json report_to_json(const AnalysisReport& r) {
    using nlohmann::json;
    json meta = {{"corpus_hash", r.metadata.corpus_hash},
                 {"tool_version", r.metadata.tool_version},
                 {"config", config_to_json(r.metadata.config)},
                 {"samples_read", r.metadata.samples_read},
                 {"samples_used", r.metadata.samples_used}};

    json rates = json::array();
    for (const auto& row : r.property_rates) {
        json j = detail::cell_json(row.cell);
        j["model_id"] = row.model_id;
        j["dataset"] = row.dataset;
        j["task_format"] = format_name(row.task_format);
        j["property"] = property_name(row.property);
        rates.push_back(std::move(j));
    }
    json bins = json::array();
    for (const auto& row : r.length_bins) {
        json j = detail::cell_json(row.cell);
        j["model_id"] = row.model_id;
        j["dataset"] = row.dataset;
        j["task_format"] = format_name(row.task_format);
        j["bin"] = length_bin_label(row.bin);
        j["property"] = property_name(row.property);
        bins.push_back(std::move(j));
    }
    json attn = json::array();
    for (const auto& row : r.layer_attention) {
        attn.push_back({{"model_id", row.model_id},
                        {"task_format", format_name(row.task_format)},
                        {"property", property_name(row.property)},
                        {"layer", row.layer},
                        {"mean", round6(row.mean)},
                        {"median", round6(row.median)},
                        {"n", row.n}});
    }
    json curves = json::array();
    for (const auto& c : r.sd_curves) {
        json pts = json::array();
        for (const auto& p : c.points)
            pts.push_back({{"layer", p.layer}, {"sd", round6(p.sd)}, {"median", round6(p.median)}, {"n", p.n}});
        curves.push_back({{"model_id", c.model_id},
                          {"property", property_name(c.property)},
                          {"points", pts},
                          {"spike_window", detail::window_json(c.spike_window)}});
    }
    json lsc = json::array();
    for (const auto& c : r.lsc_curves) {
        json vals = json::array();
        for (double v : c.values) vals.push_back(round6(v));
        lsc.push_back({{"model_id", c.model_id}, {"samples", c.samples}, {"values", vals}});
    }
    json corr = json::array();
    for (const auto& c : r.correlations) {
        corr.push_back({{"property", property_name(c.property)},
                        {"model_a", c.model_a},
                        {"model_b", c.model_b},
                        {"r", c.r ? json(round6(*c.r)) : json(nullptr)}});
    }
    json loc = json::array();
    for (const auto& s : r.localization) loc.push_back(localization_summary_json(s));
    json excl = json::array();
    for (const auto& e : r.exclusions) {
        excl.push_back({{"model_id", e.model_id}, {"sample_id", e.sample_id}, {"iteration", e.iteration}, {"reason", e.reason}});
    }
    return {{"metadata", meta},
            {"property_rate_table", rates},
            {"length_bin_table", bins},
            {"layer_attention_table", attn},
            {"sd_curves", curves},
            {"lsc_curves", lsc},
            {"correlations", corr},
            {"localization", loc},
            {"exclusions", excl}};
}

/// Byte-canonical serialization: sorted keys, two-space indent, trailing newline.
inline std::string canonical_json(const nlohmann::json& j) { return j.dump(2) + "\n"; }

inline std::string serialize_report(const AnalysisReport& r) { return canonical_json(report_to_json(r)); }

inline AnalysisReport report_from_json(const nlohmann::json& j) {
    AnalysisReport r;
    try {
        const auto& meta = j.at("metadata");
        r.metadata.corpus_hash = meta.at("corpus_hash").get<std::string>();
        r.metadata.tool_version = meta.at("tool_version").get<std::string>();
        r.metadata.config = config_from_json(meta.at("config"));
        r.metadata.samples_read = meta.at("samples_read").get<std::uint64_t>();
        r.metadata.samples_used = meta.at("samples_used").get<std::uint64_t>();
        for (const auto& row : j.at("property_rate_table")) {
            r.property_rates.push_back({row.at("model_id").get<std::string>(), row.at("dataset").get<std::string>(),
                                        detail::format_from(row.at("task_format")),
                                        detail::property_from(row.at("property")), detail::cell_from(row)});
        }
        for (const auto& row : j.at("length_bin_table")) {
            r.length_bins.push_back({row.at("model_id").get<std::string>(), row.at("dataset").get<std::string>(),
                                     detail::format_from(row.at("task_format")), detail::bin_from(row.at("bin")),
                                     detail::property_from(row.at("property")), detail::cell_from(row)});
        }
        for (const auto& row : j.at("layer_attention_table")) {
            r.layer_attention.push_back({row.at("model_id").get<std::string>(), detail::format_from(row.at("task_format")),
                                         detail::property_from(row.at("property")), row.at("layer").get<std::uint32_t>(),
                                         row.at("mean").get<double>(), row.at("median").get<double>(),
                                         row.at("n").get<std::size_t>()});
        }
        for (const auto& c : j.at("sd_curves")) {
            SdCurve curve{c.at("model_id").get<std::string>(), detail::property_from(c.at("property")), {},
                          detail::window_from(c.at("spike_window"))};
            for (const auto& p : c.at("points")) {
                curve.points.push_back({p.at("layer").get<std::uint32_t>(), p.at("sd").get<double>(),
                                        p.at("median").get<double>(), p.at("n").get<std::size_t>()});
            }
            r.sd_curves.push_back(std::move(curve));
        }
        for (const auto& c : j.at("lsc_curves")) {
            r.lsc_curves.push_back({c.at("model_id").get<std::string>(), c.at("samples").get<std::size_t>(),
                                    c.at("values").get<std::vector<double>>()});
        }
        for (const auto& c : j.at("correlations")) {
            CorrelationRow row{detail::property_from(c.at("property")), c.at("model_a").get<std::string>(),
                               c.at("model_b").get<std::string>(), std::nullopt};
            if (!c.at("r").is_null()) row.r = c.at("r").get<double>();
            r.correlations.push_back(std::move(row));
        }
        for (const auto& s : j.at("localization")) r.localization.push_back(localization_summary_from(s));
        for (const auto& e : j.at("exclusions")) {
            r.exclusions.push_back({e.at("model_id").get<std::string>(), e.at("sample_id").get<std::string>(),
                                    e.at("iteration").get<std::uint32_t>(), e.at("reason").get<std::string>()});
        }
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::Parse, std::string("report: ") + e.what());
    }
    return r;
}

// ---------------------------------------------------------------------------
// Emitters

struct PropertyTableRow {
    std::string model_id;
    std::string dataset;
    TaskFormat task_format;
    SymbolicProperty property;
    std::string cell;
    bool no_occurrences = false;
    std::size_t total = 0;
};

/// Rows ordered by (model, dataset, format, property code); cells carry two
/// decimals, or "0" with the no-occurrence flag.
inline std::vector<PropertyTableRow> emit_property_table(const AnalysisReport& r) {
    std::vector<PropertyTableRow> rows;
    for (const auto& row : r.property_rates) {
        rows.push_back({row.model_id, row.dataset, row.task_format, row.property, format_rate_cell(row.cell),
                        row.cell.no_occurrences(), row.cell.total});
    }
    std::stable_sort(rows.begin(), rows.end(), [](const PropertyTableRow& a, const PropertyTableRow& b) {
        return std::make_tuple(a.model_id, a.dataset, a.task_format, property_code(a.property)) <
               std::make_tuple(b.model_id, b.dataset, b.task_format, property_code(b.property));
    });
    return rows;
}

struct VarianceSeries {
    std::string model_id;
    SymbolicProperty property;
    std::vector<CurvePoint> points;
    std::optional<SpikeWindow> spike_window;

    /// File stem for curves/<model>_<property>.tsv; '/' in model ids becomes '_'.
    std::string file_stem() const {
        std::string m = model_id;
        for (char& c : m) {
            if (c == '/' || c == '\\' || c == ' ') c = '_';
        }
        return m + "_" + std::string(property_name(property));
    }

    /// Tab-separated layer / SD / median columns; the spike window goes in a
    /// leading comment line.
    std::string tsv() const {
        std::ostringstream os;
        os << "# model=" << model_id << " property=" << property_name(property) << " spike_window=";
        if (spike_window) os << spike_window->start_layer << '-' << spike_window->end_layer;
        else os << "none";
        os << '\n' << "layer\tsd\tmedian\n";
        char buf[96];
        for (const auto& p : points) {
            std::snprintf(buf, sizeof buf, "%u\t%.6g\t%.6g\n", p.layer, p.sd, p.median);
            os << buf;
        }
        return os.str();
    }
};

inline std::vector<VarianceSeries> emit_variance_curves(const AnalysisReport& r) {
    if (r.sd_curves.empty()) throw Error(ErrorCode::Corpus, "report has no SD curves (empty corpus)");
    std::vector<VarianceSeries> out;
    for (const auto& c : r.sd_curves) out.push_back({c.model_id, c.property, c.points, c.spike_window});
    return out;
}

inline std::string csv_escape(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += '"';
        out += c;
    }
    return out + "\"";
}

/// Property-rate and length-bin tables as one long-format CSV.
inline std::string render_csv(const AnalysisReport& r) {
    std::ostringstream os;
    os << "table,model_id,dataset,task_format,bin,property,hallucinated,total,cell,no_occurrences\n";
    for (const auto& row : r.property_rates) {
        os << "property_rate," << csv_escape(row.model_id) << ',' << csv_escape(row.dataset) << ','
           << format_name(row.task_format) << ",," << property_name(row.property) << ',' << row.cell.hallucinated
           << ',' << row.cell.total << ',' << format_rate_cell(row.cell) << ','
           << (row.cell.no_occurrences() ? 1 : 0) << '\n';
    }
    for (const auto& row : r.length_bins) {
        os << "length_bin," << csv_escape(row.model_id) << ',' << csv_escape(row.dataset) << ','
           << format_name(row.task_format) << ',' << length_bin_label(row.bin) << ',' << property_name(row.property)
           << ',' << row.cell.hallucinated << ',' << row.cell.total << ',' << format_rate_cell(row.cell) << ','
           << (row.cell.no_occurrences() ? 1 : 0) << '\n';
    }
    return os.str();
}

inline std::string render_markdown(const AnalysisReport& r) {
    std::ostringstream os;
    char buf[64];
    os << "# Symbolic localization report\n\n";
    os << "- corpus hash: `" << r.metadata.corpus_hash << "`\n";
    os << "- samples read / used: " << r.metadata.samples_read << " / " << r.metadata.samples_used << "\n";
    os << "- iterations: " << r.metadata.config.iterations << ", delta: " << r.metadata.config.delta
       << ", kappa: " << r.metadata.config.kappa << "\n\n";

    os << "## Hallucination rate by symbolic property\n\n";
    os << "| model | dataset | format | property | rate (%) | n |\n|---|---|---|---|---:|---:|\n";
    for (const auto& row : emit_property_table(r)) {
        os << "| " << row.model_id << " | " << row.dataset << " | " << format_name(row.task_format) << " | "
           << property_name(row.property) << " | " << row.cell << (row.no_occurrences ? " (no occurrences)" : "")
           << " | " << row.total;
        os << " |\n";
    }

    os << "\n## Symbolic attention at selected layers\n\n";
    os << "| model | format | property | layer | mean | median | n |\n|---|---|---|---:|---:|---:|---:|\n";
    for (const auto& row : r.layer_attention) {
        std::snprintf(buf, sizeof buf, "%.4f | %.4f", row.mean, row.median);
        os << "| " << row.model_id << " | " << format_name(row.task_format) << " | " << property_name(row.property)
           << " | " << row.layer << " | " << buf << " | " << row.n << " |\n";
    }

    os << "\n## Layer localization\n\n";
    os << "| model | property | samples | localized | modal layer | spike window |\n|---|---|---:|---:|---:|---|\n";
    for (const auto& s : r.localization) {
        os << "| " << s.model_id << " | " << property_name(s.property) << " | " << s.samples << " | " << s.localized
           << " | " << (s.modal_layer ? std::to_string(*s.modal_layer) : "-") << " | ";
        if (s.no_occurrences()) os << "no occurrences";
        else if (s.spike_window) os << "L" << s.spike_window->start_layer << "-L" << s.spike_window->end_layer;
        else os << "none";
        os << " |\n";
    }

    if (!r.correlations.empty()) {
        os << "\n## Cross-model SD-curve correlation\n\n| property | model A | model B | r |\n|---|---|---|---:|\n";
        for (const auto& c : r.correlations) {
            os << "| " << property_name(c.property) << " | " << c.model_a << " | " << c.model_b << " | ";
            if (c.r) {
                std::snprintf(buf, sizeof buf, "%.4f", *c.r);
                os << buf;
            } else {
                os << "undefined";
            }
            os << " |\n";
        }
    }
    if (!r.exclusions.empty()) {
        os << "\n## Exclusions\n\n";
        for (const auto& e : r.exclusions)
            os << "- " << e.model_id << " / " << e.sample_id << " (iteration " << e.iteration << "): " << e.reason << "\n";
    }
    return os.str();
}

} // namespace symloc
