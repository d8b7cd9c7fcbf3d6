// Copyright (c) 2026, The symloc authors
// SPDX-License-Identifier: Apache-2.0
//
// Core domain types: attention traces, symbolic annotations, evaluation
// records, layer profiles and localization results.
//
// Tensor indices (layer, head, row, column) are zero-based. Operations that
// take a "layer" argument use one-based layer numbers, matching how layers
// are reported (layer 1 is the first transformer block).

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "symloc/error.hpp"

namespace symloc {

enum class SymbolicProperty : std::uint8_t {
    Modifiers = 0,
    NamedEntities = 1,
    Numbers = 2,
    Negation = 3,
    Exceptions = 4,
};

inline constexpr std::array<SymbolicProperty, 5> kAllProperties = {
    SymbolicProperty::Modifiers, SymbolicProperty::NamedEntities, SymbolicProperty::Numbers,
    SymbolicProperty::Negation, SymbolicProperty::Exceptions};

inline constexpr int property_code(SymbolicProperty p) { return static_cast<int>(p); }

inline std::string_view property_name(SymbolicProperty p) {
    switch (p) {
    case SymbolicProperty::Modifiers: return "modifiers";
    case SymbolicProperty::NamedEntities: return "named_entities";
    case SymbolicProperty::Numbers: return "numbers";
    case SymbolicProperty::Negation: return "negation";
    case SymbolicProperty::Exceptions: return "exceptions";
    }
    return "unknown";
}

inline std::optional<SymbolicProperty> property_from_name(std::string_view name) {
    for (auto p : kAllProperties) {
        if (property_name(p) == name) return p;
    }
    return std::nullopt;
}

inline std::optional<SymbolicProperty> property_from_code(int code) {
    if (code < 0 || code > 4) return std::nullopt;
    return static_cast<SymbolicProperty>(code);
}

enum class TaskFormat : std::uint8_t { QA = 0, MCQ = 1, OOO = 2 };

inline std::string_view format_name(TaskFormat f) {
    switch (f) {
    case TaskFormat::QA: return "qa";
    case TaskFormat::MCQ: return "mcq";
    case TaskFormat::OOO: return "ooo";
    }
    return "unknown";
}

inline std::optional<TaskFormat> format_from_name(std::string_view name) {
    if (name == "qa" || name == "QA") return TaskFormat::QA;
    if (name == "mcq" || name == "MCQ") return TaskFormat::MCQ;
    if (name == "ooo" || name == "OOO") return TaskFormat::OOO;
    return std::nullopt;
}

struct Token {
    std::string text;
    std::uint32_t start_char = 0;
    std::uint32_t end_char = 0;

    bool operator==(const Token&) const = default;
};

/// One forward pass over one prompt. `attention` is a dense row-major
/// [layer][head][row][column] tensor, empty when the channel is absent;
/// `attribution` is [layer][token], empty when absent.
struct AttentionTrace {
    std::string sample_id;
    std::string model_id;
    TaskFormat task_format = TaskFormat::QA;
    std::uint32_t iteration = 1;
    std::uint32_t layers = 0;
    std::uint32_t heads = 0;
    std::uint32_t tokens_count = 0;
    std::vector<Token> tokens;
    std::vector<float> attention;
    std::optional<std::string> generated_answer;
    std::string gold_answer;
    std::vector<float> attribution;

    bool has_attention() const { return !attention.empty(); }
    bool has_attribution() const { return !attribution.empty(); }

    std::size_t expected_attention_size() const {
        return static_cast<std::size_t>(layers) * heads * tokens_count * tokens_count;
    }

    std::size_t index(std::size_t layer0, std::size_t head, std::size_t row,
                      std::size_t col) const {
        const std::size_t t = tokens_count;
        return ((layer0 * heads + head) * t + row) * t + col;
    }

    float at(std::size_t layer0, std::size_t head, std::size_t row, std::size_t col) const {
        return attention[index(layer0, head, row, col)];
    }

    /// One T-length row of the attention tensor.
    std::span<const float> row(std::size_t layer0, std::size_t head, std::size_t r) const {
        return {attention.data() + index(layer0, head, r, 0), tokens_count};
    }

    float attribution_at(std::size_t layer0, std::size_t token) const {
        return attribution[layer0 * tokens_count + token];
    }

    bool operator==(const AttentionTrace&) const = default;
};

enum class ViolationKind : std::uint8_t {
    Shape,
    FieldRange,
    NonFinite,
    OutOfRange,
    RowSum,
    CausalMask,
    TokenOffsets,
};

inline std::string_view violation_kind_name(ViolationKind k) {
    switch (k) {
    case ViolationKind::Shape: return "shape";
    case ViolationKind::FieldRange: return "field_range";
    case ViolationKind::NonFinite: return "non_finite";
    case ViolationKind::OutOfRange: return "out_of_range";
    case ViolationKind::RowSum: return "row_sum";
    case ViolationKind::CausalMask: return "causal_mask";
    case ViolationKind::TokenOffsets: return "token_offsets";
    }
    return "unknown";
}

struct Violation {
    ViolationKind kind;
    int layer = -1;
    int head = -1;
    int row = -1;
    int col = -1;
    std::string detail;

    bool operator==(const Violation&) const = default;

    std::string to_string() const {
        std::ostringstream os;
        os << violation_kind_name(kind);
        if (layer >= 0) {
            os << " at (" << layer << ',' << head << ',' << row;
            if (col >= 0) os << ',' << col;
            os << ')';
        }
        if (!detail.empty()) os << ": " << detail;
        return os.str();
    }
};

inline constexpr double kRowSumTolerance = 1e-3;
inline constexpr double kCausalTolerance = 1e-6;
inline constexpr double kRangeTolerance = 1e-6;

/// Checks every structural invariant of a trace. Pure; an empty result means
/// the trace is well formed. Attention violations name the offending
/// (layer, head, row[, column]) with zero-based indices.
inline std::vector<Violation> validate_trace(const AttentionTrace& trace) {
    std::vector<Violation> out;
    auto add = [&](ViolationKind k, std::string detail, int l = -1, int h = -1, int i = -1,
                   int j = -1) { out.push_back(Violation{k, l, h, i, j, std::move(detail)}); };

    if (trace.layers < 1 || trace.heads < 1 || trace.tokens_count < 1) {
        add(ViolationKind::Shape, "L, H and T must all be >= 1");
        return out;
    }
    if (trace.layers > 0xFFFF || trace.heads > 0xFFFF || trace.tokens_count > 0xFFFF)
        add(ViolationKind::FieldRange, "L, H and T must fit in 16 bits");
    if (trace.iteration < 1 || trace.iteration > 0xFF)
        add(ViolationKind::FieldRange, "iteration must be in [1, 255]");
    if (trace.tokens.size() != trace.tokens_count) {
        add(ViolationKind::Shape, "token list has " + std::to_string(trace.tokens.size()) +
                                      " entries, expected T=" +
                                      std::to_string(trace.tokens_count));
    }

    for (std::size_t k = 0; k < trace.tokens.size(); ++k) {
        const Token& tok = trace.tokens[k];
        if (tok.text.size() > 0xFFFF)
            add(ViolationKind::FieldRange, "token " + std::to_string(k) + " text too long");
        if (tok.end_char < tok.start_char) {
            add(ViolationKind::TokenOffsets,
                "token " + std::to_string(k) + " ends before it starts");
        }
        if (k > 0 && tok.start_char < trace.tokens[k - 1].end_char) {
            add(ViolationKind::TokenOffsets, "token " + std::to_string(k) +
                                                 " overlaps or precedes token " +
                                                 std::to_string(k - 1));
        }
    }

    if (trace.has_attribution() &&
        trace.attribution.size() != static_cast<std::size_t>(trace.layers) * trace.tokens_count) {
        add(ViolationKind::Shape, "attribution has " + std::to_string(trace.attribution.size()) +
                                      " entries, expected L*T");
    }
    for (float v : trace.attribution) {
        if (!std::isfinite(v)) {
            add(ViolationKind::NonFinite, "attribution contains a non-finite value");
            break;
        }
    }

    if (!trace.has_attention()) return out;
    if (trace.attention.size() != trace.expected_attention_size()) {
        add(ViolationKind::Shape, "attention has " + std::to_string(trace.attention.size()) +
                                      " entries, expected L*H*T*T=" +
                                      std::to_string(trace.expected_attention_size()));
        return out;
    }

    const std::size_t T = trace.tokens_count;
    for (std::size_t l = 0; l < trace.layers; ++l) {
        for (std::size_t h = 0; h < trace.heads; ++h) {
            for (std::size_t i = 0; i < T; ++i) {
                auto row = trace.row(l, h, i);
                double sum = 0.0;
                bool finite = true;
                for (std::size_t j = 0; j < T; ++j) {
                    const double v = row[j];
                    const int li = static_cast<int>(l), hi = static_cast<int>(h),
                              ii = static_cast<int>(i), ji = static_cast<int>(j);
                    if (!std::isfinite(v)) {
                        add(ViolationKind::NonFinite, "value is not finite", li, hi, ii, ji);
                        finite = false;
                        continue;
                    }
                    if (v < -kRangeTolerance || v > 1.0 + kRangeTolerance)
                        add(ViolationKind::OutOfRange, "value " + std::to_string(v), li, hi, ii, ji);
                    if (j > i && std::abs(v) > kCausalTolerance)
                        add(ViolationKind::CausalMask, "future position receives " + std::to_string(v),
                            li, hi, ii, ji);
                    sum += v;
                }
                if (finite && std::abs(sum - 1.0) > kRowSumTolerance) {
                    add(ViolationKind::RowSum, "row sums to " + std::to_string(sum),
                        static_cast<int>(l), static_cast<int>(h), static_cast<int>(i));
                }
            }
        }
    }
    return out;
}

struct Word {
    std::string text;
    std::uint32_t start_char = 0;
    std::uint32_t end_char = 0;
    std::optional<std::string> pos_tag;
    std::optional<std::string> ner_label;

    bool operator==(const Word&) const = default;
};

struct Span {
    SymbolicProperty property;
    std::uint32_t start_char = 0;
    std::uint32_t end_char = 0;

    bool operator==(const Span&) const = default;
    auto operator<=>(const Span& o) const {
        if (auto c = start_char <=> o.start_char; c != 0) return c;
        if (auto c = property_code(property) <=> property_code(o.property); c != 0) return c;
        return end_char <=> o.end_char;
    }
};

/// Character-span labels for one sample. `dataset` and `question` are optional
/// sidecar extras used for rate tables and length bins.
struct SymbolicAnnotation {
    std::string sample_id;
    std::vector<Word> words;
    std::vector<Span> spans;
    bool spans_present = true;
    std::optional<std::string> dataset;
    std::optional<std::string> question;

    std::set<SymbolicProperty> properties() const {
        std::set<SymbolicProperty> out;
        for (const auto& s : spans) out.insert(s.property);
        return out;
    }

    bool operator==(const SymbolicAnnotation&) const = default;
};

/// Span ranges must be non-empty and lie within [0, prompt_length).
inline std::vector<std::string> validate_annotation(const SymbolicAnnotation& ann,
                                                    std::uint32_t prompt_length) {
    std::vector<std::string> out;
    for (std::size_t k = 0; k < ann.spans.size(); ++k) {
        const Span& s = ann.spans[k];
        if (s.end_char <= s.start_char)
            out.push_back("span " + std::to_string(k) + " is empty");
        else if (s.end_char > prompt_length)
            out.push_back("span " + std::to_string(k) + " ends past the prompt (" +
                          std::to_string(s.end_char) + " > " + std::to_string(prompt_length) + ")");
    }
    return out;
}

/// Token indices whose character range shares at least one character with
/// any span of property `p`. Zero-length tokens never match.
inline std::vector<std::size_t> token_positions_for_property(const AttentionTrace& trace,
                                                             const SymbolicAnnotation& ann,
                                                             SymbolicProperty p) {
    if (ann.sample_id != trace.sample_id) {
        Error e(ErrorCode::Identity, "annotation '" + ann.sample_id +
                                         "' does not belong to trace '" + trace.sample_id + "'");
        e.sample_id = trace.sample_id;
        throw e;
    }
    std::vector<std::size_t> out;
    for (std::size_t k = 0; k < trace.tokens.size(); ++k) {
        const Token& tok = trace.tokens[k];
        for (const Span& s : ann.spans) {
            if (s.property == p && tok.start_char < s.end_char && s.start_char < tok.end_char) {
                out.push_back(k);
                break;
            }
        }
    }
    return out;
}

enum class Verdict : std::uint8_t { Correct, Hallucinated, Unjudgeable };

inline std::string_view verdict_name(Verdict v) {
    switch (v) {
    case Verdict::Correct: return "correct";
    case Verdict::Hallucinated: return "hallucinated";
    case Verdict::Unjudgeable: return "unjudgeable";
    }
    return "unknown";
}

inline std::optional<Verdict> verdict_from_name(std::string_view name) {
    if (name == "correct") return Verdict::Correct;
    if (name == "hallucinated") return Verdict::Hallucinated;
    if (name == "unjudgeable") return Verdict::Unjudgeable;
    return std::nullopt;
}

struct EvalRecord {
    std::string sample_id;
    std::string model_id;
    std::string dataset;
    TaskFormat task_format = TaskFormat::QA;
    std::set<SymbolicProperty> properties;
    std::size_t question_word_count = 0;
    std::optional<std::string> generated_answer;
    std::string gold_answer;
    Verdict verdict = Verdict::Unjudgeable;
};

/// Per-layer statistics of symbolic attention for one property.
struct LayerProfile {
    SymbolicProperty property;
    std::uint32_t layer = 0;
    std::vector<double> values;
    double median = 0.0;
    double sd = 0.0;
    std::size_t n = 0;
};

struct SpikeWindow {
    std::uint32_t start_layer = 0;
    std::uint32_t end_layer = 0;

    bool operator==(const SpikeWindow&) const = default;
};

struct LocalizationResult {
    SymbolicProperty property;
    std::optional<std::uint32_t> first_instability_layer;
    std::string symbolic_token;
    double symbolic_attention = 0.0;
    std::size_t symbolic_index = 0;
    std::string max_token;
    double max_attention = 0.0;
    std::size_t max_index = 0;
    std::optional<SpikeWindow> spike_window;
};

} // namespace symloc
