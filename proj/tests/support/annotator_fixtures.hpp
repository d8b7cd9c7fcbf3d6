// Copyright (c) 2026, The symloc authors
// SPDX-License-Identifier: Apache-2.0
//
// Tagged example questions and the hand-labeled sentence corpus, shared by
// the annotator unit tests and the acceptance runner.

#pragma once

#include <algorithm>
#include <map>
#include <set>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "symloc/annotator.hpp"

namespace fixtures {

using symloc::Span;
using symloc::SymbolicAnnotation;
using symloc::Word;
using P = symloc::SymbolicProperty;

struct Tagged {
    std::string sentence;
    std::vector<Word> words;
};

/// "text/POS[/NER]" items joined by single spaces.
inline Tagged tagged(const std::vector<std::string>& items) {
    Tagged out;
    for (const auto& item : items) {
        std::vector<std::string> parts;
        std::size_t from = 0;
        for (std::size_t k = 0; k <= item.size(); ++k) {
            if (k == item.size() || (item[k] == '/' && k > from)) {
                parts.push_back(item.substr(from, k - from));
                from = k + 1;
            }
        }
        if (!out.sentence.empty()) out.sentence += ' ';
        const auto start = static_cast<std::uint32_t>(out.sentence.size());
        out.sentence += parts[0];
        Word w{parts[0], start, static_cast<std::uint32_t>(out.sentence.size()), std::nullopt, std::nullopt};
        if (parts.size() > 1) w.pos_tag = parts[1];
        if (parts.size() > 2) w.ner_label = parts[2];
        out.words.push_back(w);
    }
    return out;
}

using Expect = std::vector<std::pair<P, std::string>>;

/// Spans for the first occurrence of each labeled surface string.
inline std::vector<Span> expected_spans(const std::string& sentence, const Expect& labels) {
    std::vector<Span> out;
    for (const auto& [p, text] : labels) {
        const auto at = sentence.find(text);
        if (at == std::string::npos) throw std::invalid_argument("label '" + text + "' not in sentence");
        out.push_back({p, static_cast<std::uint32_t>(at), static_cast<std::uint32_t>(at + text.size())});
    }
    std::sort(out.begin(), out.end());
    return out;
}

inline std::set<std::string> surfaces(const std::string& sentence, const SymbolicAnnotation& a, P p) {
    std::set<std::string> out;
    for (const auto& s : a.spans)
        if (s.property == p) out.insert(sentence.substr(s.start_char, s.end_char - s.start_char));
    return out;
}

inline SymbolicAnnotation annotate(const Tagged& t) {
    return symloc::annotate_sample("x", t.words, symloc::KeywordLexicon::defaults());
}

/// One example question per category, tagged the way an off-the-shelf tagger
/// emits them, with the surface strings expected for every property.
struct Example {
    std::string name;
    std::vector<std::string> items;
    std::map<P, std::set<std::string>> expected;
};

inline std::vector<Example> category_examples() {
    return {
        {"modifiers",
         {"Which/PRON", "is/AUX", "the/DET", "least/ADV", "controversial/ADJ", "reform/NOUN", "introduced/VERB", "in/ADP",
          "the/DET", "past/ADJ", "decade/NOUN", "?/PUNCT"},
         {{P::Modifiers, {"least", "controversial", "introduced", "past"}}}},
        {"named_entities",
         {"What/PRON", "position/NOUN", "does/AUX", "Dr./PROPN", "Elena/PROPN/PERSON", "Foster/PROPN/PERSON", "hold/VERB",
          "at/ADP", "NovaGen/PROPN/ORG", "Institute/PROPN/ORG", "?/PUNCT"},
         {{P::NamedEntities, {"Elena Foster", "NovaGen Institute"}}, {P::Modifiers, {"hold"}}}},
        // "year" is the highlighted token in the localization table, but it is
        // not numeric; the numeral rule yields no span here.
        {"numbers",
         {"In/ADP", "what/DET", "year/NOUN", "did/AUX", "the/DET", "Andean/PROPN/LAW", "Treaty/PROPN/LAW", "come/VERB",
          "into/ADP", "force/NOUN", "?/PUNCT"},
         {{P::Modifiers, {"come"}}}},
        {"negation",
         {"Which/DET", "of/ADP", "these/DET", "countries/NOUN", "is/AUX", "not/PART", "a/DET", "member/NOUN", "of/ADP",
          "the/DET", "Arctic/PROPN/ORG", "Council/PROPN/ORG", "?/PUNCT"},
         {{P::Negation, {"not"}}, {P::NamedEntities, {"Arctic Council"}}}},
        {"exceptions",
         {"Which/DET", "mammal/NOUN", "lays/VERB", "eggs/NOUN", "instead/ADV", "of/ADP", "giving/VERB", "birth/NOUN",
          "to/ADP", "live/ADJ", "offspring/NOUN", "?/PUNCT"},
         {{P::Exceptions, {"instead"}}, {P::Modifiers, {"lays", "instead", "giving", "live"}}}},
    };
}

/// Empty string when the annotator output matches `ex` for every property,
/// otherwise a description of the first mismatch.
inline std::string check_example(const Example& ex) {
    const auto t = tagged(ex.items);
    const auto a = annotate(t);
    for (auto p : symloc::kAllProperties) {
        auto it = ex.expected.find(p);
        const std::set<std::string> want = it == ex.expected.end() ? std::set<std::string>{} : it->second;
        const auto got = surfaces(t.sentence, a, p);
        if (got != want) {
            std::string g;
            for (const auto& s : got) g += (g.empty() ? "" : ", ") + s;
            return ex.name + ": " + std::string(symloc::property_name(p)) + " gave {" + g + "}";
        }
    }
    return {};
}

struct Labeled {
    std::vector<std::string> items;
    Expect labels;
};

/// Every span of every property, per sentence.
inline std::vector<Labeled> hand_labeled_corpus() {
    return {
        {{"Do/AUX", "we/PRON", "only/ADV", "use/VERB", "10/NUM", "%/NOUN", "of/ADP", "our/PRON", "brains/NOUN", "?/PUNCT"},
         {{P::Modifiers, "only"}, {P::Modifiers, "use"}, {P::Numbers, "10"}}},
        {{"No/INTJ", ",/PUNCT", "we/PRON", "use/VERB", "virtually/ADV", "all/DET", "of/ADP", "our/PRON", "brain/NOUN",
          "./PUNCT"},
         {{P::Negation, "No"}, {P::Modifiers, "use"}, {P::Modifiers, "virtually"}}},
        {{"Who/PRON", "never/ADV", "won/VERB", "the/DET", "Nobel/PROPN/WORK_OF_ART", "Prize/PROPN/WORK_OF_ART", "?/PUNCT"},
         {{P::Negation, "never"}, {P::Modifiers, "never"}, {P::Modifiers, "won"}}},
        {{"Why/SCONJ", "can't/AUX", "penguins/NOUN", "fly/VERB", "?/PUNCT"},
         {{P::Negation, "can't"}, {P::Modifiers, "fly"}}},
        {{"Every/DET", "planet/NOUN", "except/SCONJ", "Earth/PROPN/LOC", "lacks/VERB", "liquid/ADJ", "oceans/NOUN",
          "./PUNCT"},
         {{P::Exceptions, "except"}, {P::NamedEntities, "Earth"}, {P::Modifiers, "lacks"}, {P::Modifiers, "liquid"}}},
        {{"She/PRON", "visited/VERB", "Paris/PROPN/GPE", "but/CCONJ", "skipped/VERB", "Berlin/PROPN/GPE", "./PUNCT"},
         {{P::Modifiers, "visited"},
          {P::NamedEntities, "Paris"},
          {P::Exceptions, "but"},
          {P::Modifiers, "skipped"},
          {P::NamedEntities, "Berlin"}}},
        {{"The/DET", "tower/NOUN", "is/AUX", "324/NUM", "metres/NOUN", "tall/ADJ", "./PUNCT"},
         {{P::Numbers, "324"}, {P::Modifiers, "tall"}}},
        {{"Neither/CCONJ", "Alice/PROPN/PERSON", "nor/CCONJ", "Bob/PROPN/PERSON", "attended/VERB", "./PUNCT"},
         {{P::Negation, "Neither"},
          {P::NamedEntities, "Alice"},
          {P::Negation, "nor"},
          {P::NamedEntities, "Bob"},
          {P::Modifiers, "attended"}}},
        {{"Twenty-one/NUM", "students/NOUN", "passed/VERB", ",/PUNCT", "however/ADV", "two/NUM", "failed/VERB", "./PUNCT"},
         {{P::Numbers, "Twenty-one"},
          {P::Modifiers, "passed"},
          {P::Exceptions, "however"},
          {P::Modifiers, "however"},
          {P::Numbers, "two"},
          {P::Modifiers, "failed"}}},
        {{"The/DET", "United/PROPN/GPE", "States/PROPN/GPE", "borders/VERB", "Canada/PROPN/GPE", "./PUNCT"},
         {{P::NamedEntities, "United States"}, {P::Modifiers, "borders"}, {P::NamedEntities, "Canada"}}},
        {{"Nobody/PRON", "knows/VERB", "the/DET", "exact/ADJ", "population/NOUN", "of/ADP", "1,200,000/NUM",
          "people/NOUN", "./PUNCT"},
         {{P::Negation, "Nobody"}, {P::Modifiers, "knows"}, {P::Modifiers, "exact"}, {P::Numbers, "1,200,000"}}},
        {{"Apple/PROPN/ORG", "Paris/PROPN/GPE", "opened/VERB", "in/ADP", "2019/NUM/DATE", "./PUNCT"},
         {{P::NamedEntities, "Apple"}, {P::NamedEntities, "Paris"}, {P::Modifiers, "opened"}, {P::Numbers, "2019"}}},
        {{"Which/DET", "mammal/NOUN", "lays/VERB", "eggs/NOUN", "instead/ADV", "of/ADP", "giving/VERB", "birth/NOUN",
          "to/ADP", "live/ADJ", "offspring/NOUN", "?/PUNCT"},
         {{P::Modifiers, "lays"},
          {P::Exceptions, "instead"},
          {P::Modifiers, "instead"},
          {P::Modifiers, "giving"},
          {P::Modifiers, "live"}}},
        {{"Although/SCONJ", "cheap/ADJ", ",/PUNCT", "the/DET", "ticket/NOUN", "cost/VERB", "3.50/NUM", "dollars/NOUN",
          "./PUNCT"},
         {{P::Exceptions, "Although"}, {P::Modifiers, "cheap"}, {P::Modifiers, "cost"}, {P::Numbers, "3.50"}}},
        {{"There/PRON", "is/VERB", "nothing/PRON", "left/VERB", "except/SCONJ", "crumbs/NOUN", "./PUNCT"},
         {{P::Modifiers, "is"}, {P::Negation, "nothing"}, {P::Modifiers, "left"}, {P::Exceptions, "except"}}},
        {{"Temperatures/NOUN", "fell/VERB", "to/ADP", "-40/NUM", "degrees/NOUN", "in/ADP", "Siberia/PROPN/LOC", "./PUNCT"},
         {{P::Modifiers, "fell"}, {P::Numbers, "-40"}, {P::NamedEntities, "Siberia"}}},
        {{"All/DET", "birds/NOUN", ",/PUNCT", "excluding/VERB", "ostriches/NOUN", ",/PUNCT", "can/AUX", "fly/VERB",
          "./PUNCT"},
         {{P::Exceptions, "excluding"}, {P::Modifiers, "excluding"}, {P::Modifiers, "fly"}}},
        {{"He/PRON", "did/AUX", "not/PART", "say/VERB", "hundred,/NUM", "he/PRON", "said/VERB", "ninety-nine/NUM",
          "./PUNCT"},
         {{P::Negation, "not"}, {P::Modifiers, "say"}, {P::Numbers, "hundred"}, {P::Modifiers, "said"},
          {P::Numbers, "ninety-nine"}}},
        {{"The/DET", "river/NOUN", "runs/VERB", "nowhere/ADV", "near/ADP", "Mount/PROPN/LOC", "Everest/PROPN/LOC",
          "./PUNCT"},
         {{P::Modifiers, "runs"}, {P::Negation, "nowhere"}, {P::Modifiers, "nowhere"}, {P::NamedEntities, "Mount Everest"}}},
        {{"Version/NOUN", "2.0/NUM", "wasn't/AUX", "released/VERB", "by/ADP", "Microsoft/PROPN/ORG", "Research/PROPN/ORG",
          "./PUNCT"},
         {{P::Numbers, "2.0"},
          {P::Negation, "wasn't"},
          {P::Modifiers, "released"},
          {P::NamedEntities, "Microsoft Research"}}},
    };
}

} // namespace fixtures
