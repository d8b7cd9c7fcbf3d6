// Copyright (c) 2026, The symloc authors
// SPDX-License-Identifier: Apache-2.0
//
// Seeded generator of valid trace corpora with matching sidecars, for demos,
// benchmarks and end-to-end tests. Output depends only on the options.

#pragma once

#include <cstdint>
#include <cstdio>
#include <iterator>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "symloc/annotator.hpp"
#include "symloc/task_transform.hpp"
#include "symloc/trace_model.hpp"

namespace symloc {

struct SyntheticOptions {
    std::size_t items = 100;
    std::vector<std::pair<std::string, std::uint32_t>> models = {{"google/gemma-2-2b", 26}};
    std::uint32_t heads = 2;
    std::uint32_t min_words = 5;
    std::uint32_t max_words = 10;
    std::uint32_t iterations = 1;
    std::uint64_t seed = 7;
    bool attribution = false;
    /// Leave spans out of the sidecar so the analyzer annotates.
    bool omit_spans = true;
};

struct SyntheticCorpus {
    std::vector<AttentionTrace> traces;
    std::vector<SymbolicAnnotation> annotations;
};

namespace detail {

struct VocabEntry {
    const char* text;
    const char* pos;
    const char* ner;
};

inline constexpr VocabEntry kSynthVocab[] = {
    {"which", "DET", nullptr},     {"country", "NOUN", nullptr},  {"never", "ADV", nullptr},
    {"quickly", "ADV", nullptr},   {"large", "ADJ", nullptr},     {"founded", "VERB", nullptr},
    {"Elena", "PROPN", "PERSON"},  {"Foster", "PROPN", "PERSON"}, {"NovaGen", "PROPN", "ORG"},
    {"Paris", "PROPN", "GPE"},     {"except", "ADP", nullptr},    {"instead", "ADV", nullptr},
    {"not", "PART", nullptr},      {"42", "NUM", nullptr},        {"twenty-one", "NUM", nullptr},
    {"the", "DET", nullptr},       {"of", "ADP", nullptr},        {"river", "NOUN", nullptr},
    {"is", "AUX", nullptr},        {"city", "NOUN", nullptr},     {"who", "PRON", nullptr},
    {"1,200", "NUM", nullptr},     {"didn't", "AUX", nullptr},    {"Alps", "PROPN", "LOC"},
};

inline double unit(SeededDraw& d) { return static_cast<double>(d.next() >> 11) * 0x1.0p-53; }

} // namespace detail

inline SyntheticCorpus make_synthetic_corpus(const SyntheticOptions& opt) {
    SyntheticCorpus out;
    constexpr std::size_t vocab = std::size(detail::kSynthVocab);
    for (std::size_t k = 0; k < opt.items; ++k) {
        char idbuf[32];
        std::snprintf(idbuf, sizeof idbuf, "item-%05zu", k);
        const std::string id = idbuf;
        SeededDraw draw(id, opt.seed);

        const std::size_t nwords = opt.min_words + draw.below(opt.max_words - opt.min_words + 1);
        SymbolicAnnotation ann;
        ann.sample_id = id;
        ann.dataset = k % 2 == 0 ? "HaluEval" : "TruthfulQA";
        std::string question;
        std::vector<Token> tokens;
        for (std::size_t w = 0; w < nwords; ++w) {
            const auto& v = detail::kSynthVocab[draw.below(vocab)];
            if (!question.empty()) question += ' ';
            const auto start = static_cast<std::uint32_t>(question.size());
            question += v.text;
            const auto end = static_cast<std::uint32_t>(question.size());
            Word word{v.text, start, end, std::string(v.pos), std::nullopt};
            if (v.ner) word.ner_label = std::string(v.ner);
            ann.words.push_back(std::move(word));
            tokens.push_back({v.text, start, end});
        }
        question += '?';
        tokens.push_back({"?", static_cast<std::uint32_t>(question.size() - 1),
                          static_cast<std::uint32_t>(question.size())});
        ann.question = question;
        ann.spans_present = !opt.omit_spans;
        if (!opt.omit_spans) {
            auto full = annotate_sample(id, ann.words, KeywordLexicon::defaults());
            ann.spans = std::move(full.spans);
        }
        out.annotations.push_back(ann);

        const auto format = static_cast<TaskFormat>(k % 3);
        const std::string gold = format == TaskFormat::MCQ ? std::string(1, static_cast<char>('A' + k % 3))
                                                           : "answer " + std::to_string(k);
        for (const auto& [model, layers] : opt.models) {
            for (std::uint32_t it = 1; it <= opt.iterations; ++it) {
                SeededDraw td(id + "|" + model + "|" + std::to_string(it), opt.seed);
                AttentionTrace t;
                t.sample_id = id;
                t.model_id = model;
                t.task_format = format;
                t.iteration = it;
                t.layers = layers;
                t.heads = opt.heads;
                t.tokens_count = static_cast<std::uint32_t>(tokens.size());
                t.tokens = tokens;
                t.gold_answer = gold;
                const bool right = detail::unit(td) < 0.4;
                if (format == TaskFormat::MCQ)
                    t.generated_answer = std::string(1, right ? gold[0] : static_cast<char>('A' + (k + 1) % 3)) + ") option";
                else
                    t.generated_answer = right ? "The answer is " + gold + "." : "I believe it is something else.";

                const std::size_t T = t.tokens_count;
                t.attention.resize(t.expected_attention_size());
                std::vector<double> row(T);
                for (std::size_t l = 0; l < layers; ++l) {
                    for (std::size_t h = 0; h < opt.heads; ++h) {
                        for (std::size_t i = 0; i < T; ++i) {
                            double total = 0.0;
                            for (std::size_t j = 0; j <= i; ++j) {
                                const double u = detail::unit(td);
                                row[j] = u * u + 1e-3;
                                total += row[j];
                            }
                            for (std::size_t j = 0; j < T; ++j) {
                                t.attention[t.index(l, h, i, j)] =
                                    j <= i ? static_cast<float>(row[j] / total) : 0.0f;
                            }
                        }
                    }
                }
                if (opt.attribution) {
                    t.attribution.resize(static_cast<std::size_t>(layers) * T);
                    for (auto& a : t.attribution) a = static_cast<float>(detail::unit(td));
                }
                out.traces.push_back(std::move(t));
            }
        }
    }
    return out;
}

} // namespace symloc
