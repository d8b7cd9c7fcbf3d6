// Copyright (c) 2026, The symloc authors
// SPDX-License-Identifier: Apache-2.0
//
// Layer localization of symbolic instability: per-sample first-instability
// layers and early-layer spike windows on SD curves.

#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <tuple>
#include <vector>

#include "symloc/error.hpp"
#include "symloc/metrics.hpp"
#include "symloc/trace_model.hpp"

namespace symloc {

inline constexpr double kDefaultDelta = 0.2;
inline constexpr double kDefaultKappa = 1.5;

struct TokenAttention {
    std::string token;
    double attention = 0.0;
    std::size_t index = 0;
};

namespace detail {

inline std::size_t argmax_lowest(std::span<const double> r) {
    std::size_t best = 0;
    for (std::size_t j = 1; j < r.size(); ++j) {
        if (r[j] > r[best]) best = j;
    }
    return best;
}

inline void check_delta(double delta) {
    if (!(delta > 0.0 && delta < 1.0)) throw Error(ErrorCode::Config, "delta must lie in (0, 1)");
}

} // namespace detail

/// Token with the largest received attention at `layer`; ties go to the
/// lowest index.
inline TokenAttention max_attended_token(const AttentionTrace& trace, std::uint32_t layer) {
    const auto r = received_attention(trace, layer);
    const std::size_t j = detail::argmax_lowest(r);
    return {trace.tokens[j].text, r[j], j};
}

/// Smallest layer l >= 2 where (a) some non-symbolic token receives more
/// attention than the best symbolic token, and (b) the best symbolic token's
/// received attention fell by at least `delta` relative to layer l - 1.
/// Absent when no layer satisfies both.
inline LocalizationResult first_instability_layer(const AttentionTrace& trace,
                                                  std::span<const std::size_t> positions,
                                                  SymbolicProperty property, double delta = kDefaultDelta) {
    detail::check_delta(delta);
    if (positions.empty()) {
        Error e(ErrorCode::EmptySymbolSet, "no symbolic tokens in '" + trace.sample_id + "'");
        e.sample_id = trace.sample_id;
        throw e;
    }
    const std::set<std::size_t> symbolic(positions.begin(), positions.end());
    LocalizationResult out;
    out.property = property;

    double prev_best = 0.0;
    for (std::uint32_t l = 1; l <= trace.layers; ++l) {
        const auto r = received_attention(trace, l);
        std::size_t sym = *symbolic.begin();
        for (std::size_t j : symbolic) {
            if (r[j] > r[sym]) sym = j;
        }
        double other_best = -1.0;
        for (std::size_t j = 0; j < r.size(); ++j) {
            if (!symbolic.count(j)) other_best = std::max(other_best, r[j]);
        }
        const double s = r[sym];
        if (l >= 2 && other_best > s && s <= (1.0 - delta) * prev_best) {
            const std::size_t m = detail::argmax_lowest(r);
            out.first_instability_layer = l;
            out.symbolic_token = trace.tokens[sym].text;
            out.symbolic_attention = s;
            out.symbolic_index = sym;
            out.max_token = trace.tokens[m].text;
            out.max_attention = r[m];
            out.max_index = m;
            return out;
        }
        prev_best = s;
    }
    return out;
}

inline LocalizationResult first_instability_layer(const AttentionTrace& trace,
                                                  std::span<const std::size_t> positions,
                                                  double delta = kDefaultDelta) {
    return first_instability_layer(trace, positions, SymbolicProperty::Modifiers, delta);
}

/// Earliest maximal run of layers with SD >= kappa * median(curve) (and
/// strictly above the median) whose start lies in the first half of the
/// depth. Curves shorter than four layers never produce a window.
inline std::optional<SpikeWindow> variance_spike_window(std::span<const double> sd_curve,
                                                        double kappa = kDefaultKappa) {
    if (!(kappa > 1.0)) throw Error(ErrorCode::Config, "kappa must be > 1");
    if (sd_curve.size() < 4) return std::nullopt;
    const double baseline = aggregate_median(sd_curve);
    const std::size_t L = sd_curve.size();
    auto spiking = [&](std::size_t k) { return sd_curve[k] >= kappa * baseline && sd_curve[k] > baseline; };
    for (std::size_t k = 0; k < L; ++k) {
        if (!spiking(k)) continue;
        const std::size_t start = k + 1;
        if (2 * start > L) return std::nullopt;
        std::size_t end = k;
        while (end + 1 < L && spiking(end + 1)) ++end;
        return SpikeWindow{static_cast<std::uint32_t>(start), static_cast<std::uint32_t>(end + 1)};
    }
    return std::nullopt;
}

// ---------------------------------------------------------------------------
// Corpus localization

struct SampleLocalization {
    std::string model_id;
    TaskFormat task_format = TaskFormat::QA;
    std::string sample_id;
    std::uint32_t iteration = 1;
    LocalizationResult result;

    auto key() const { return std::tie(model_id, task_format, sample_id, iteration, result.property); }
};

/// One result per property present in the sample.
inline std::vector<SampleLocalization> localize_sample(const AttentionTrace& trace, const SymbolicAnnotation& ann,
                                                       double delta = kDefaultDelta) {
    std::vector<SampleLocalization> out;
    for (auto p : kAllProperties) {
        const auto pos = token_positions_for_property(trace, ann, p);
        if (pos.empty()) continue;
        out.push_back({trace.model_id, trace.task_format, trace.sample_id, trace.iteration,
                       first_instability_layer(trace, pos, p, delta)});
    }
    return out;
}

struct LocalizationSummary {
    std::string model_id;
    SymbolicProperty property;
    std::size_t samples = 0;
    std::size_t localized = 0;
    std::map<std::uint32_t, std::size_t> histogram;
    std::optional<std::uint32_t> modal_layer;
    std::optional<SpikeWindow> spike_window;

    bool no_occurrences() const { return samples == 0; }
    std::size_t stable() const { return samples - localized; }
    double mass(std::uint32_t layer) const {
        auto it = histogram.find(layer);
        return it == histogram.end() || localized == 0
                   ? 0.0
                   : static_cast<double>(it->second) / static_cast<double>(localized);
    }
};

/// Merges per-sample results into per-(model, property) summaries. Every
/// model in `models` gets all five properties; absent ones are marked by
/// zero samples. The spike window comes from the property's SD curve.
inline std::vector<LocalizationSummary> summarize_localization(std::vector<SampleLocalization> samples,
                                                               const ProfileMap& profiles,
                                                               const std::set<std::string>& models,
                                                               double kappa = kDefaultKappa) {
    std::stable_sort(samples.begin(), samples.end(),
                     [](const SampleLocalization& a, const SampleLocalization& b) { return a.key() < b.key(); });
    std::map<ProfileKey, LocalizationSummary> acc;
    for (const auto& m : models) {
        for (auto p : kAllProperties) acc[{m, p}] = LocalizationSummary{m, p, 0, 0, {}, std::nullopt, std::nullopt};
    }
    for (const auto& s : samples) {
        auto& sum = acc[{s.model_id, s.result.property}];
        sum.model_id = s.model_id;
        sum.property = s.result.property;
        ++sum.samples;
        if (s.result.first_instability_layer) {
            ++sum.localized;
            ++sum.histogram[*s.result.first_instability_layer];
        }
    }
    std::vector<LocalizationSummary> out;
    for (auto& [key, sum] : acc) {
        std::size_t best = 0;
        for (const auto& [layer, count] : sum.histogram) {
            if (count > best) {
                best = count;
                sum.modal_layer = layer;
            }
        }
        if (auto it = profiles.find(key); it != profiles.end()) {
            const auto curve = sd_curve(it->second);
            sum.spike_window = variance_spike_window(curve, kappa);
        }
        out.push_back(std::move(sum));
    }
    return out;
}

struct CorpusLocalization {
    std::vector<SampleLocalization> samples;
    std::vector<LocalizationSummary> summaries;
};

/// In-memory corpus localization (the CLI streams the same map/reduce).
inline CorpusLocalization localize_corpus(std::span<const AttentionTrace> corpus,
                                          const std::map<std::string, SymbolicAnnotation>& annotations,
                                          double delta = kDefaultDelta, double kappa = kDefaultKappa,
                                          std::uint32_t iterations = 4) {
    if (corpus.empty()) throw Error(ErrorCode::Corpus, "empty corpus");
    detail::check_delta(delta);
    CorpusLocalization out;
    std::set<std::string> models;
    for (const auto& t : corpus) {
        if (t.iteration > iterations) continue;
        auto it = annotations.find(t.sample_id);
        if (it == annotations.end()) {
            Error e(ErrorCode::Corpus, "no annotation for sample '" + t.sample_id + "'");
            e.sample_id = t.sample_id;
            throw e;
        }
        models.insert(t.model_id);
        auto part = localize_sample(t, it->second, delta);
        out.samples.insert(out.samples.end(), part.begin(), part.end());
    }
    const auto profiles = build_layer_profiles(corpus, annotations, iterations);
    out.summaries = summarize_localization(out.samples, profiles, models, kappa);
    std::stable_sort(out.samples.begin(), out.samples.end(),
                     [](const SampleLocalization& a, const SampleLocalization& b) { return a.key() < b.key(); });
    return out;
}

} // namespace symloc
