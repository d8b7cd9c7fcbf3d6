// Copyright (c) 2026, The symloc authors
// SPDX-License-Identifier: Apache-2.0
//
// Rule-based symbolic property detection over tagged word sequences.
// POS and NER tags are inputs (from any upstream tagger); keyword and
// numeral rules are applied here.

#pragma once

#include <algorithm>
#include <array>
#include <istream>
#include <optional>
#include <span>
#include <regex>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "symloc/error.hpp"
#include "symloc/text.hpp"
#include "symloc/trace_model.hpp"

namespace symloc {

struct KeywordLexicon {
    std::set<std::string> negation_words;
    std::set<std::string> exception_words;
    std::set<std::string> number_words;

    static KeywordLexicon defaults() {
        KeywordLexicon lex;
        lex.negation_words = {"not",     "never",   "none",    "cannot", "no",      "nor",
                              "neither", "nobody",  "nothing", "nowhere", "without", "n't"};
        lex.exception_words = {"except", "but", "excluding", "however", "although", "instead"};
        lex.number_words = {"zero",      "one",      "two",      "three",   "four",     "five",
                            "six",       "seven",    "eight",    "nine",    "ten",      "eleven",
                            "twelve",    "thirteen", "fourteen", "fifteen", "sixteen",  "seventeen",
                            "eighteen",  "nineteen", "twenty",   "thirty",  "forty",    "fifty",
                            "sixty",     "seventy",  "eighty",   "ninety",  "hundred",  "thousand",
                            "million",   "billion",  "trillion"};
        return lex;
    }

    /// Entries that are not lowercase or that contain whitespace.
    std::vector<std::string> problems() const {
        std::vector<std::string> out;
        auto check = [&](const std::set<std::string>& words, const char* list) {
            for (const auto& w : words) {
                if (w.empty() || text::to_lower(w) != w ||
                    std::any_of(w.begin(), w.end(), [](char c) { return text::is_space(c); }))
                    out.push_back(std::string(list) + ": invalid entry '" + w + "'");
            }
        };
        check(negation_words, "negation");
        check(exception_words, "exceptions");
        check(number_words, "number_words");
        return out;
    }
};

/// Loads a lexicon file: a JSON object with string arrays `negation`,
/// `exceptions` and `number_words`. Entries extend the defaults, so the core
/// keyword sets are always present.
inline KeywordLexicon load_lexicon(std::istream& in) {
    nlohmann::json obj;
    try {
        obj = nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        throw Error(ErrorCode::Parse, std::string("lexicon: malformed JSON: ") + e.what());
    }
    if (!obj.is_object()) throw Error(ErrorCode::Parse, "lexicon: expected a JSON object");
    KeywordLexicon lex = KeywordLexicon::defaults();
    auto merge = [&](const char* key, std::set<std::string>& into) {
        auto it = obj.find(key);
        if (it == obj.end()) return;
        if (!it->is_array()) throw Error(ErrorCode::Parse, std::string("lexicon: '") + key + "' must be an array");
        for (const auto& v : *it) {
            if (!v.is_string()) throw Error(ErrorCode::Parse, std::string("lexicon: '") + key + "' entries must be strings");
            into.insert(v.get<std::string>());
        }
    };
    merge("negation", lex.negation_words);
    merge("exceptions", lex.exception_words);
    merge("number_words", lex.number_words);
    if (auto p = lex.problems(); !p.empty()) throw Error(ErrorCode::Config, "lexicon: " + p.front());
    return lex;
}

namespace detail {

/// The part of a word left after peeling surrounding quotes, brackets and
/// sentence punctuation, with its offsets. Offsets are only narrowed when the
/// word text length matches its character range.
struct WordCore {
    std::string text;
    std::uint32_t start_char;
    std::uint32_t end_char;
};

inline WordCore word_core(const Word& w) {
    std::string_view s = w.text;
    std::size_t lead = 0, trail = 0;
    auto leading = [](char c) { return c == '"' || c == '\'' || c == '(' || c == '[' || c == '{' || c == '`'; };
    auto trailing = [](char c) {
        return c == '.' || c == ',' || c == ';' || c == ':' || c == '!' || c == '?' || c == '"' ||
               c == '\'' || c == ')' || c == ']' || c == '}' || c == '`';
    };
    while (lead < s.size() && leading(s[lead])) ++lead;
    while (trail + lead < s.size() && trailing(s[s.size() - 1 - trail])) ++trail;
    std::string core(s.substr(lead, s.size() - lead - trail));
    if (core.empty()) return {"", w.start_char, w.end_char};
    if (w.end_char >= w.start_char && w.end_char - w.start_char == s.size()) {
        return {core, w.start_char + static_cast<std::uint32_t>(lead),
                w.end_char - static_cast<std::uint32_t>(trail)};
    }
    return {core, w.start_char, w.end_char};
}

inline bool ends_with(std::string_view s, std::string_view suffix) {
    return s.size() >= suffix.size() && s.substr(s.size() - suffix.size()) == suffix;
}

inline std::vector<Span> keyword_spans(std::span<const Word> words, const std::set<std::string>& lexicon,
                                       SymbolicProperty property) {
    std::vector<Span> out;
    for (const Word& w : words) {
        const WordCore core = word_core(w);
        if (core.text.empty()) continue;
        if (lexicon.count(text::to_lower(core.text)))
            out.push_back(Span{property, core.start_char, core.end_char});
    }
    return out;
}

inline bool is_numeric_literal(std::string_view s) {
    static const std::regex pattern(R"(^[+-]?(?:(?:\d{1,3}(?:,\d{3})+|\d+)(?:\.\d+)?|\.\d+)$)");
    return std::regex_match(s.begin(), s.end(), pattern);
}

} // namespace detail

/// Words in the negation lexicon, plus any word carrying a contracted "n't"
/// (ASCII or typographic apostrophe); the span covers the whole word.
inline std::vector<Span> detect_negation(std::span<const Word> words, const KeywordLexicon& lex) {
    std::vector<Span> out;
    for (const Word& w : words) {
        const auto core = detail::word_core(w);
        if (core.text.empty()) continue;
        const std::string lower = text::to_lower(core.text);
        if (lex.negation_words.count(lower) || detail::ends_with(lower, "n't") ||
            detail::ends_with(lower, "n\xE2\x80\x99t"))
            out.push_back(Span{SymbolicProperty::Negation, core.start_char, core.end_char});
    }
    return out;
}

inline std::vector<Span> detect_exceptions(std::span<const Word> words, const KeywordLexicon& lex) {
    return detail::keyword_spans(words, lex.exception_words, SymbolicProperty::Exceptions);
}

/// Numeric literals (optional sign, digit groups, one decimal point) and
/// number words. Hyphen-joined compounds ("twenty-one") form a single span
/// when every part is itself numeric.
inline std::vector<Span> detect_numbers(std::span<const Word> words, const KeywordLexicon& lex) {
    std::vector<Span> out;
    auto numeric = [&](std::string_view part) {
        return !part.empty() &&
               (detail::is_numeric_literal(part) || lex.number_words.count(text::to_lower(part)) > 0);
    };
    for (const Word& w : words) {
        const auto core = detail::word_core(w);
        if (core.text.empty()) continue;
        bool flagged = numeric(core.text);
        if (!flagged && core.text.find('-') != std::string::npos && core.text.front() != '-') {
            auto parts = text::split(core.text, '-');
            flagged = std::all_of(parts.begin(), parts.end(), numeric);
        }
        if (flagged) out.push_back(Span{SymbolicProperty::Numbers, core.start_char, core.end_char});
    }
    return out;
}

/// ADJ, ADV and VERB tags become modifier spans. Untagged words never match.
inline std::vector<Span> map_pos_to_modifiers(std::span<const Word> words) {
    std::vector<Span> out;
    for (const Word& w : words) {
        if (!w.pos_tag) continue;
        const std::string& t = *w.pos_tag;
        if (t == "ADJ" || t == "ADV" || t == "VERB")
            out.push_back(Span{SymbolicProperty::Modifiers, w.start_char, w.end_char});
    }
    return out;
}

/// Contiguous runs of words sharing one of PERSON/ORG/GPE/LOC merge into a
/// single span; a label change starts a new span.
inline std::vector<Span> map_ner_to_entities(std::span<const Word> words) {
    auto entity = [](const Word& w) -> std::optional<std::string> {
        if (!w.ner_label) return std::nullopt;
        const std::string& l = *w.ner_label;
        if (l == "PERSON" || l == "ORG" || l == "GPE" || l == "LOC") return l;
        return std::nullopt;
    };
    std::vector<Span> out;
    std::optional<std::string> current;
    for (const Word& w : words) {
        auto label = entity(w);
        if (label && current && *label == *current) {
            out.back().end_char = std::max(out.back().end_char, w.end_char);
        } else if (label) {
            out.push_back(Span{SymbolicProperty::NamedEntities, w.start_char, w.end_char});
        }
        current = label;
    }
    return out;
}

/// Union of all five detectors, sorted by (start_char, property code).
inline SymbolicAnnotation annotate_sample(std::string sample_id, std::vector<Word> words,
                                          const KeywordLexicon& lex) {
    SymbolicAnnotation ann;
    ann.sample_id = std::move(sample_id);
    ann.words = std::move(words);
    for (auto&& part : {map_pos_to_modifiers(ann.words), map_ner_to_entities(ann.words),
                        detect_numbers(ann.words, lex), detect_negation(ann.words, lex),
                        detect_exceptions(ann.words, lex)}) {
        ann.spans.insert(ann.spans.end(), part.begin(), part.end());
    }
    std::sort(ann.spans.begin(), ann.spans.end());
    ann.spans.erase(std::unique(ann.spans.begin(), ann.spans.end()), ann.spans.end());
    ann.spans_present = true;
    return ann;
}

/// Per-property span counts for one sample; the annotation audit record.
inline std::array<std::size_t, 5> span_counts(const SymbolicAnnotation& ann) {
    std::array<std::size_t, 5> counts{};
    for (const auto& s : ann.spans) ++counts[static_cast<std::size_t>(property_code(s.property))];
    return counts;
}

} // namespace symloc
