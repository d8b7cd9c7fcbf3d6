// Copyright (c) 2026, The symloc authors
// SPDX-License-Identifier: Apache-2.0
//
// End-to-end analysis: annotate-if-needed, judge, per-sample map over a
// worker pool, ordered reduce into an AnalysisReport.

#pragma once

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cstdint>
#include <exception>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "json.hpp"
#include "symloc/annotator.hpp"
#include "symloc/error.hpp"
#include "symloc/localize.hpp"
#include "symloc/metrics.hpp"
#include "symloc/report.hpp"
#include "symloc/text.hpp"
#include "symloc/trace_io.hpp"
#include "symloc/trace_model.hpp"

namespace symloc {

namespace fs = std::filesystem;

struct PipelineConfig {
    std::vector<fs::path> traces;
    fs::path annotations;
    std::optional<fs::path> judgments;
    std::optional<fs::path> lexicon;
    std::uint32_t iterations = 4;
    double delta = kDefaultDelta;
    double kappa = kDefaultKappa;
    unsigned workers = 1;
    std::optional<TaskFormat> format_filter;
    std::map<std::string, std::vector<std::uint32_t>> layers;
    bool reannotate = false;
    std::uint64_t max_sample_bytes = ReaderOptions{}.max_sample_bytes;
    bool require_layers = true;
};

// ---------------------------------------------------------------------------
// Inputs

inline std::ifstream open_input(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::Io, "cannot open '" + path.string() + "'");
    return in;
}

inline void hash_file(text::Fnv1a64& h, const fs::path& path) {
    auto in = open_input(path);
    std::vector<char> buf(1 << 16);
    while (in) {
        in.read(buf.data(), static_cast<std::streamsize>(buf.size()));
        h.update(std::string_view(buf.data(), static_cast<std::size_t>(in.gcount())));
    }
}

/// Hash over the raw bytes of every input file, in the order given.
inline std::string corpus_hash(const PipelineConfig& cfg) {
    text::Fnv1a64 h;
    for (const auto& p : cfg.traces) {
        hash_file(h, p);
        h.update_u64(0);
    }
    hash_file(h, cfg.annotations);
    h.update_u64(1);
    if (cfg.judgments) hash_file(h, *cfg.judgments);
    return text::hex64(h.digest());
}

/// Verdicts keyed by (model_id, sample_id); an empty model_id applies to all models.
using JudgmentMap = std::map<std::pair<std::string, std::string>, Verdict>;

inline JudgmentMap read_judgments(std::istream& in) {
    JudgmentMap out;
    std::string line;
    std::uint64_t n = 0;
    while (std::getline(in, line)) {
        ++n;
        if (text::trim(line).empty()) continue;
        auto fail = [&](const std::string& msg) {
            Error e(ErrorCode::Parse, "judgments line " + std::to_string(n) + ": " + msg);
            e.line = n;
            throw e;
        };
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::parse_error&) {
            fail("malformed JSON");
        }
        if (!j.is_object() || !j.contains("sample_id") || !j["sample_id"].is_string() || !j.contains("verdict") ||
            !j["verdict"].is_string())
            fail("expected {\"sample_id\": string, \"verdict\": string}");
        auto v = verdict_from_name(j["verdict"].get<std::string>());
        if (!v) fail("unknown verdict '" + j["verdict"].get<std::string>() + "'");
        std::string model;
        if (auto m = j.find("model_id"); m != j.end() && m->is_string()) model = m->get<std::string>();
        out[{model, j["sample_id"].get<std::string>()}] = *v;
    }
    return out;
}

inline std::optional<Verdict> lookup_judgment(const JudgmentMap& j, const std::string& model, const std::string& id) {
    if (auto it = j.find({model, id}); it != j.end()) return it->second;
    if (auto it = j.find({std::string{}, id}); it != j.end()) return it->second;
    return std::nullopt;
}

/// Loads the sidecar and fills in spans for entries that lack them (or all
/// entries when `reannotate` is set).
inline AnnotationSet load_annotations(const fs::path& path, const KeywordLexicon& lex, bool reannotate) {
    auto in = open_input(path);
    AnnotationSet set = read_annotations(in);
    for (auto& [id, ann] : set.by_id) {
        if (ann.spans_present && !reannotate) continue;
        auto fresh = annotate_sample(ann.sample_id, ann.words, lex);
        fresh.dataset = ann.dataset;
        fresh.question = ann.question;
        ann = std::move(fresh);
    }
    return set;
}

inline KeywordLexicon load_lexicon_file(const std::optional<fs::path>& path) {
    if (!path) return KeywordLexicon::defaults();
    auto in = open_input(*path);
    return load_lexicon(in);
}

/// Question length in words: the raw question when the sidecar carries it,
/// otherwise the sidecar words that contain at least one alphanumeric char.
inline std::size_t question_length(const SymbolicAnnotation& ann) {
    if (ann.question) return text::word_count(*ann.question);
    return static_cast<std::size_t>(std::count_if(ann.words.begin(), ann.words.end(), [](const Word& w) {
        return std::any_of(w.text.begin(), w.text.end(), [](char c) { return text::is_alnum(c); });
    }));
}

// ---------------------------------------------------------------------------
// Selected layers

/// Default layer pairs per model family, matched on the lowercased model name
/// after any "org/" prefix.
inline std::optional<std::vector<std::uint32_t>> default_selected_layers(std::string_view model_id) {
    std::string name = text::to_lower(model_id);
    if (auto slash = name.rfind('/'); slash != std::string::npos) name = name.substr(slash + 1);
    static const std::map<std::string, std::vector<std::uint32_t>> table = {
        {"gemma-2-2b", {10, 20}},    {"gemma-2-9b", {20, 31}},    {"gemma-2-27b", {23, 40}},
        {"llama-2-7b-hf", {15, 28}}, {"llama-2-7b", {15, 28}},    {"llama-2-7b-chat-hf", {15, 28}},
        {"llama-3.1-8b", {15, 28}},  {"llama-3.1-8b-instruct", {15, 28}},
    };
    if (auto it = table.find(name); it != table.end()) return it->second;
    return std::nullopt;
}

/// Parses "model=a,b" into a map entry.
inline std::pair<std::string, std::vector<std::uint32_t>> parse_layers_flag(std::string_view flag) {
    const auto eq = flag.rfind('=');
    if (eq == std::string_view::npos || eq == 0 || eq + 1 == flag.size())
        throw Error(ErrorCode::Config, "--layers expects model=a,b (got '" + std::string(flag) + "')");
    std::vector<std::uint32_t> layers;
    for (auto part : text::split(flag.substr(eq + 1), ',')) {
        part = text::trim(part);
        std::uint32_t v = 0;
        auto [p, ec] = std::from_chars(part.data(), part.data() + part.size(), v);
        if (ec != std::errc{} || p != part.data() + part.size() || v == 0)
            throw Error(ErrorCode::Config, "--layers: '" + std::string(part) + "' is not a positive layer index");
        layers.push_back(v);
    }
    return {std::string(flag.substr(0, eq)), layers};
}

// ---------------------------------------------------------------------------
// Worker pool

/// Runs fn(i) for i in [0, n) on up to `workers` threads. Each index writes
/// only its own slot; the exception of the lowest failing index is rethrown.
inline void parallel_for(std::size_t n, unsigned workers, const std::function<void(std::size_t)>& fn) {
    if (n == 0) return;
    const unsigned threads = std::max(1u, std::min<unsigned>(workers, static_cast<unsigned>(n)));
    std::vector<std::exception_ptr> errors(n);
    std::atomic<std::size_t> next{0};
    auto run = [&] {
        for (std::size_t i = next.fetch_add(1); i < n; i = next.fetch_add(1)) {
            try {
                fn(i);
            } catch (...) {
                errors[i] = std::current_exception();
            }
        }
    };
    if (threads == 1) {
        run();
    } else {
        std::vector<std::thread> pool;
        pool.reserve(threads);
        for (unsigned t = 0; t < threads; ++t) pool.emplace_back(run);
        for (auto& t : pool) t.join();
    }
    for (auto& e : errors) {
        if (e) std::rethrow_exception(e);
    }
}

// ---------------------------------------------------------------------------
// Map phase

struct SampleOutput {
    bool used = false;
    std::optional<Exclusion> exclusion;
    SampleAttention attention;
    std::vector<SampleLocalization> localizations;
    EvalRecord record;
    std::uint32_t iteration = 1;
    std::optional<std::vector<double>> lsc;
};

inline SampleOutput process_trace(const AttentionTrace& t, const AnnotationSet& anns, const JudgmentMap& judgments,
                                  const PipelineConfig& cfg) {
    SampleOutput out;
    out.iteration = t.iteration;
    if (t.iteration > cfg.iterations) {
        out.exclusion = Exclusion{t.model_id, t.sample_id, t.iteration,
                                  "iteration " + std::to_string(t.iteration) + " exceeds R=" +
                                      std::to_string(cfg.iterations)};
        return out;
    }
    auto it = anns.by_id.find(t.sample_id);
    if (it == anns.by_id.end()) {
        Error e(ErrorCode::Corpus, "no annotation for sample '" + t.sample_id + "'");
        e.sample_id = t.sample_id;
        throw e;
    }
    if (!t.has_attention()) {
        out.exclusion = Exclusion{t.model_id, t.sample_id, t.iteration, "no attention channel"};
        return out;
    }
    const auto& ann = it->second;
    out.used = true;
    out.attention = compute_sample_attention(t, ann);
    out.localizations = localize_sample(t, ann, cfg.delta);

    auto& r = out.record;
    r.sample_id = t.sample_id;
    r.model_id = t.model_id;
    r.dataset = ann.dataset.value_or("unknown");
    r.task_format = t.task_format;
    r.properties = ann.properties();
    r.question_word_count = question_length(ann);
    r.generated_answer = t.generated_answer;
    r.gold_answer = t.gold_answer;
    auto judged = lookup_judgment(judgments, t.model_id, t.sample_id);
    r.verdict = judged ? *judged : judge_answer(t.task_format, t.generated_answer, t.gold_answer);

    if (t.has_attribution()) out.lsc = lsc_layer_profile(t);
    return out;
}

// ---------------------------------------------------------------------------
// Reduce phase

struct PipelineOutput {
    AnalysisReport report;
    std::vector<SampleLocalization> localizations;
};

namespace detail {

struct Accumulator {
    std::vector<SampleAttention> partials;
    std::vector<SampleLocalization> localizations;
    std::map<std::tuple<std::string, TaskFormat, std::string>, std::pair<std::uint32_t, EvalRecord>> records;
    std::map<std::string, std::vector<std::pair<std::tuple<std::string, std::uint32_t>, std::vector<double>>>> lsc;
    std::vector<Exclusion> exclusions;
    std::uint64_t read = 0;
    std::uint64_t used = 0;

    void add(SampleOutput&& s) {
        if (s.exclusion) exclusions.push_back(std::move(*s.exclusion));
        if (!s.used) return;
        ++used;
        const auto key = std::make_tuple(s.record.model_id, s.record.task_format, s.record.sample_id);
        auto it = records.find(key);
        if (it == records.end() || s.iteration < it->second.first) records[key] = {s.iteration, s.record};
        if (s.lsc)
            lsc[s.record.model_id].push_back({{s.record.sample_id, s.iteration}, std::move(*s.lsc)});
        localizations.insert(localizations.end(), s.localizations.begin(), s.localizations.end());
        partials.push_back(std::move(s.attention));
    }
};

inline std::vector<std::uint32_t> resolve_layers(const PipelineConfig& cfg, const std::string& model,
                                                 std::uint32_t model_layers) {
    std::vector<std::uint32_t> layers;
    if (auto it = cfg.layers.find(model); it != cfg.layers.end()) {
        layers = it->second;
    } else if (auto d = default_selected_layers(model)) {
        layers = *d;
    } else if (cfg.require_layers) {
        throw Error(ErrorCode::Config, "no default selected layers for model '" + model +
                                           "'; pass --layers " + model + "=a,b");
    } else {
        return {};
    }
    for (auto l : layers) {
        if (l < 1 || l > model_layers)
            throw Error(ErrorCode::Config, "selected layer " + std::to_string(l) + " outside [1, " +
                                               std::to_string(model_layers) + "] for model '" + model + "'");
    }
    std::sort(layers.begin(), layers.end());
    layers.erase(std::unique(layers.begin(), layers.end()), layers.end());
    return layers;
}

inline AnalysisReport reduce(Accumulator& acc, const PipelineConfig& cfg) {
    AnalysisReport rep;
    rep.metadata.samples_read = acc.read;
    rep.metadata.samples_used = acc.used;
    rep.metadata.config.iterations = cfg.iterations;
    rep.metadata.config.delta = cfg.delta;
    rep.metadata.config.kappa = cfg.kappa;
    rep.metadata.config.format_filter = cfg.format_filter;
    rep.metadata.config.judgments = cfg.judgments.has_value();

    sort_partials(acc.partials);
    const auto layer_counts = model_layer_counts(acc.partials);
    const auto profiles = reduce_layer_profiles(acc.partials);

    // Selected-layer attention, per (model, format, property).
    std::map<std::string, std::vector<std::uint32_t>> selected;
    for (const auto& [model, L] : layer_counts) {
        auto layers = resolve_layers(cfg, model, L);
        if (!layers.empty()) selected[model] = layers;
    }
    rep.metadata.config.layers = selected;
    std::map<std::tuple<std::string, TaskFormat, SymbolicProperty, std::uint32_t>, std::vector<double>> cells;
    for (const auto& s : acc.partials) {
        auto sel = selected.find(s.model_id);
        if (sel == selected.end()) continue;
        for (auto p : kAllProperties) {
            const auto& a = s.per_property[static_cast<std::size_t>(property_code(p))];
            if (!a) continue;
            for (auto l : sel->second) cells[{s.model_id, s.task_format, p, l}].push_back((*a)[l - 1]);
        }
    }
    for (const auto& [key, values] : cells) {
        const auto& [model, format, prop, layer] = key;
        rep.layer_attention.push_back(
            {model, format, prop, layer, aggregate_mean(values), aggregate_median(values), values.size()});
    }

    // Rates and length bins over one judged record per (model, format, sample).
    std::vector<EvalRecord> records;
    for (auto& [key, rec] : acc.records) records.push_back(rec.second);
    std::set<std::tuple<std::string, std::string, TaskFormat>> groups;
    for (const auto& r : records) groups.insert({r.model_id, r.dataset, r.task_format});
    for (const auto& [model, dataset, format] : groups) {
        RecordFilter f{model, dataset, format};
        for (auto p : kAllProperties)
            rep.property_rates.push_back({model, dataset, format, p, hallucination_counts(records, p, f)});
        for (auto bin : kAllLengthBins) {
            std::vector<EvalRecord> in_bin;
            for (const auto& r : records) {
                if (f.accepts(r) && bin_by_length(r.question_word_count) == bin) in_bin.push_back(r);
            }
            for (auto p : kAllProperties)
                rep.length_bins.push_back({model, dataset, format, bin, p, hallucination_counts(in_bin, p)});
        }
    }

    // SD curves and cross-model correlation.
    for (const auto& [key, layers] : profiles) {
        SdCurve c{key.first, key.second, {}, std::nullopt};
        for (const auto& lp : layers) c.points.push_back({lp.layer, lp.sd, lp.median, lp.n});
        c.spike_window = variance_spike_window(sd_curve(layers), cfg.kappa);
        rep.sd_curves.push_back(std::move(c));
    }
    for (auto p : kAllProperties) {
        std::vector<const SdCurve*> curves;
        for (const auto& c : rep.sd_curves) {
            if (c.property == p && c.points.size() >= 3) curves.push_back(&c);
        }
        for (std::size_t a = 0; a < curves.size(); ++a) {
            for (std::size_t b = a + 1; b < curves.size(); ++b) {
                rep.correlations.push_back({p, curves[a]->model_id, curves[b]->model_id,
                                            cross_model_correlation(sd_curve(profiles.at({curves[a]->model_id, p})),
                                                                    sd_curve(profiles.at({curves[b]->model_id, p})))});
            }
        }
    }

    // LSC: per-layer mean over samples.
    for (auto& [model, rows] : acc.lsc) {
        std::sort(rows.begin(), rows.end(), [](const auto& x, const auto& y) { return x.first < y.first; });
        LscCurve c{model, rows.size(), {}};
        const std::size_t L = rows.front().second.size();
        for (std::size_t l = 0; l < L; ++l) {
            std::vector<double> column;
            for (const auto& r : rows) {
                if (r.second.size() != L)
                    throw Error(ErrorCode::Corpus, "model '" + model + "' has attribution curves of differing depth");
                column.push_back(r.second[l]);
            }
            c.values.push_back(aggregate_mean(column));
        }
        rep.lsc_curves.push_back(std::move(c));
    }

    std::set<std::string> models;
    for (const auto& [m, L] : layer_counts) models.insert(m);
    rep.localization = summarize_localization(acc.localizations, profiles, models, cfg.kappa);

    std::sort(acc.exclusions.begin(), acc.exclusions.end(),
              [](const Exclusion& a, const Exclusion& b) { return a.key() < b.key(); });
    rep.exclusions = acc.exclusions;
    return rep;
}

} // namespace detail

inline PipelineOutput run_analysis(const PipelineConfig& cfg) {
    if (cfg.traces.empty()) throw Error(ErrorCode::Config, "no trace files given");
    if (cfg.iterations < 1) throw Error(ErrorCode::Config, "iterations must be >= 1");
    detail::check_delta(cfg.delta);
    if (!(cfg.kappa > 1.0)) throw Error(ErrorCode::Config, "kappa must be > 1");

    const auto lex = load_lexicon_file(cfg.lexicon);
    const AnnotationSet anns = load_annotations(cfg.annotations, lex, cfg.reannotate);
    JudgmentMap judgments;
    if (cfg.judgments) {
        auto in = open_input(*cfg.judgments);
        judgments = read_judgments(in);
    }

    detail::Accumulator acc;
    const unsigned workers = std::max(1u, cfg.workers);
    const std::size_t batch_size = static_cast<std::size_t>(workers) * 4;
    for (const auto& path : cfg.traces) {
        auto in = open_input(path);
        TraceReader reader(in, ReaderOptions{cfg.max_sample_bytes, true});
        bool done = false;
        while (!done) {
            std::vector<AttentionTrace> batch;
            while (batch.size() < batch_size) {
                auto t = reader.next();
                if (!t) {
                    done = true;
                    break;
                }
                ++acc.read;
                if (cfg.format_filter && t->task_format != *cfg.format_filter) continue;
                batch.push_back(std::move(*t));
            }
            std::vector<SampleOutput> outs(batch.size());
            parallel_for(batch.size(), workers,
                         [&](std::size_t i) { outs[i] = process_trace(batch[i], anns, judgments, cfg); });
            for (auto& o : outs) acc.add(std::move(o));
        }
    }
    if (acc.used == 0) throw Error(ErrorCode::Corpus, "no usable samples in corpus");

    PipelineOutput out;
    out.report = detail::reduce(acc, cfg);
    out.report.metadata.corpus_hash = corpus_hash(cfg);
    std::sort(acc.localizations.begin(), acc.localizations.end(),
              [](const SampleLocalization& a, const SampleLocalization& b) { return a.key() < b.key(); });
    out.localizations = std::move(acc.localizations);
    return out;
}

inline AnalysisReport run_pipeline(const PipelineConfig& cfg) { return run_analysis(cfg).report; }

// ---------------------------------------------------------------------------
// Verification

/// JSON pointer of the first difference between two documents, or nullopt.
inline std::optional<std::string> first_difference(const nlohmann::json& a, const nlohmann::json& b,
                                                   const std::string& path = "") {
    if (a.type() != b.type()) return path.empty() ? "/" : path;
    if (a.is_object()) {
        std::set<std::string> keys;
        for (const auto& [k, v] : a.items()) keys.insert(k);
        for (const auto& [k, v] : b.items()) keys.insert(k);
        for (const auto& k : keys) {
            if (!a.contains(k) || !b.contains(k)) return path + "/" + k;
            if (auto d = first_difference(a.at(k), b.at(k), path + "/" + k)) return d;
        }
        return std::nullopt;
    }
    if (a.is_array()) {
        for (std::size_t i = 0; i < std::min(a.size(), b.size()); ++i) {
            if (auto d = first_difference(a[i], b[i], path + "/" + std::to_string(i))) return d;
        }
        if (a.size() != b.size()) return path + "/" + std::to_string(std::min(a.size(), b.size()));
        return std::nullopt;
    }
    if (a != b) return path.empty() ? "/" : path;
    return std::nullopt;
}

/// Re-derives the report from the inputs using the configuration recorded in
/// `stored` and compares every cell. Throws VerifyMismatch on the first
/// difference.
inline void verify_report(const nlohmann::json& stored, PipelineConfig cfg) {
    const auto meta = report_from_json(stored).metadata;
    cfg.iterations = meta.config.iterations;
    cfg.delta = meta.config.delta;
    cfg.kappa = meta.config.kappa;
    cfg.format_filter = meta.config.format_filter;
    cfg.layers = meta.config.layers;
    cfg.require_layers = false;
    if (meta.config.judgments && !cfg.judgments)
        throw Error(ErrorCode::Config, "report was built with judgments; pass --judgments to verify");
    const auto fresh = report_to_json(run_pipeline(cfg));
    const auto stored_canonical = nlohmann::json::parse(canonical_json(stored));
    if (auto d = first_difference(stored_canonical, fresh)) {
        Error e(ErrorCode::VerifyMismatch, "report differs from re-derived values at " + *d);
        throw e;
    }
}

} // namespace symloc
