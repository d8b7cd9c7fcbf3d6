// Copyright (c) 2026, The symloc authors
// SPDX-License-Identifier: Apache-2.0
//
// Quantitative aggregation: answer judging, hallucination rates, length
// bins, layer-wise symbolic attention with its median/SD, LSC layer curves
// and cross-model curve correlation.
//
// Reductions are order independent: values are sorted before summation and
// sums use a fixed bottom-up pairwise tree, so any traversal or worker count
// yields bit-identical results.

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <tuple>
#include <vector>

#include "symloc/error.hpp"
#include "symloc/text.hpp"
#include "symloc/trace_model.hpp"

namespace symloc {

// ---------------------------------------------------------------------------
// Judging

namespace detail {

/// First A/B/C that stands alone (not part of a longer alphanumeric run).
inline std::optional<char> first_option_letter(std::string_view s) {
    for (std::size_t k = 0; k < s.size(); ++k) {
        const char c = s[k];
        if (c != 'A' && c != 'B' && c != 'C') continue;
        const bool left_ok = k == 0 || !text::is_alnum(s[k - 1]);
        const bool right_ok = k + 1 == s.size() || !text::is_alnum(s[k + 1]);
        if (left_ok && right_ok) return c;
    }
    return std::nullopt;
}

} // namespace detail

/// String-based verdict. QA: normalized gold is a substring of the normalized
/// answer. MCQ: the first standalone option letter equals the gold label
/// (when gold is not a bare letter the QA rule applies). OOO: the normalized
/// odd option occurs in the answer. An empty answer is unjudgeable.
inline Verdict judge_answer(TaskFormat format, const std::optional<std::string>& generated,
                            std::string_view gold) {
    if (!generated) return Verdict::Unjudgeable;
    const std::string gen = text::normalize_answer(*generated);
    if (gen.empty()) return Verdict::Unjudgeable;

    if (format == TaskFormat::MCQ) {
        const std::string_view label = text::trim(gold);
        if (label.size() == 1 && (label[0] == 'A' || label[0] == 'B' || label[0] == 'C')) {
            auto letter = detail::first_option_letter(*generated);
            return letter && *letter == label[0] ? Verdict::Correct : Verdict::Hallucinated;
        }
    }
    const std::string g = text::normalize_answer(gold);
    if (!g.empty() && gen.find(g) != std::string::npos) return Verdict::Correct;
    return Verdict::Hallucinated;
}

// ---------------------------------------------------------------------------
// Hallucination rates

struct RecordFilter {
    std::optional<std::string> model_id;
    std::optional<std::string> dataset;
    std::optional<TaskFormat> task_format;

    bool accepts(const EvalRecord& r) const {
        return (!model_id || r.model_id == *model_id) && (!dataset || r.dataset == *dataset) &&
               (!task_format || r.task_format == *task_format);
    }
};

/// Hallucinated / judgeable counts for one property. An empty cell (no
/// judgeable record carries the property) reports percentage 0 and is
/// flagged by `no_occurrences()`.
struct RateCell {
    std::size_t hallucinated = 0;
    std::size_t total = 0;

    bool no_occurrences() const { return total == 0; }
    double percentage() const {
        return total == 0 ? 0.0 : 100.0 * static_cast<double>(hallucinated) / static_cast<double>(total);
    }
};

inline RateCell hallucination_counts(std::span<const EvalRecord> records, SymbolicProperty property,
                                     const RecordFilter& filter = {}) {
    RateCell cell;
    for (const auto& r : records) {
        if (!filter.accepts(r) || !r.properties.count(property) || r.verdict == Verdict::Unjudgeable)
            continue;
        ++cell.total;
        if (r.verdict == Verdict::Hallucinated) ++cell.hallucinated;
    }
    return cell;
}

inline double hallucination_rate(std::span<const EvalRecord> records, SymbolicProperty property,
                                 const RecordFilter& filter = {}) {
    return hallucination_counts(records, property, filter).percentage();
}

/// Two-decimal rendering; empty cells render as "0".
inline std::string format_rate_cell(const RateCell& cell) {
    if (cell.no_occurrences()) return "0";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", cell.percentage());
    return buf;
}

// ---------------------------------------------------------------------------
// Length bins

enum class LengthBin : std::uint8_t { B0_9, B10_19, B20_29, B30_39, B40_49, B50Plus };

inline constexpr std::array<LengthBin, 6> kAllLengthBins = {LengthBin::B0_9,   LengthBin::B10_19,
                                                            LengthBin::B20_29, LengthBin::B30_39,
                                                            LengthBin::B40_49, LengthBin::B50Plus};

inline LengthBin bin_by_length(std::size_t word_count) {
    return static_cast<LengthBin>(std::min<std::size_t>(word_count / 10, 5));
}

inline std::string_view length_bin_label(LengthBin b) {
    switch (b) {
    case LengthBin::B0_9: return "0-9";
    case LengthBin::B10_19: return "10-19";
    case LengthBin::B20_29: return "20-29";
    case LengthBin::B30_39: return "30-39";
    case LengthBin::B40_49: return "40-49";
    case LengthBin::B50Plus: return "50+";
    }
    return "?";
}

// ---------------------------------------------------------------------------
// Symbolic attention

namespace detail {

inline void require_attention(const AttentionTrace& trace) {
    if (!trace.has_attention()) {
        Error e(ErrorCode::MissingChannel, "trace '" + trace.sample_id + "' carries no attention tensor");
        e.sample_id = trace.sample_id;
        throw e;
    }
}

inline void require_layer(const AttentionTrace& trace, std::uint32_t layer) {
    if (layer < 1 || layer > trace.layers) {
        Error e(ErrorCode::Config, "layer " + std::to_string(layer) + " outside [1, " +
                                       std::to_string(trace.layers) + "] for '" + trace.sample_id + "'");
        e.sample_id = trace.sample_id;
        throw e;
    }
}

} // namespace detail

/// Column sums of the head-stacked attention at one layer: out[j] is the sum
/// over heads h and rows i of A_l^(h)[i, j].
inline std::vector<double> column_sums(const AttentionTrace& trace, std::uint32_t layer) {
    detail::require_attention(trace);
    detail::require_layer(trace, layer);
    const std::size_t T = trace.tokens_count;
    std::vector<double> out(T, 0.0);
    for (std::size_t h = 0; h < trace.heads; ++h) {
        for (std::size_t i = 0; i < T; ++i) {
            auto row = trace.row(layer - 1, h, i);
            // Causal rows: entries past i are (near) zero but still summed.
            for (std::size_t j = 0; j < T; ++j) out[j] += row[j];
        }
    }
    return out;
}

/// Received attention r_j = (1 / (H * T)) * sum_h sum_i A_l^(h)[i, j].
inline std::vector<double> received_attention(const AttentionTrace& trace, std::uint32_t layer) {
    auto out = column_sums(trace, layer);
    const double norm = static_cast<double>(trace.heads) * trace.tokens_count;
    for (double& v : out) v /= norm;
    return out;
}

/// a_l^(S) = (1 / (H * T * |positions|)) * sum_h sum_i sum_{j in positions} A_l^(h)[i, j].
/// The 1/T factor is applied even though only columns are restricted.
inline double symbolic_attention_profile(const AttentionTrace& trace, std::span<const std::size_t> positions,
                                         std::uint32_t layer) {
    if (positions.empty()) {
        Error e(ErrorCode::EmptySymbolSet, "no symbolic tokens in '" + trace.sample_id + "'");
        e.sample_id = trace.sample_id;
        throw e;
    }
    const auto cols = column_sums(trace, layer);
    double total = 0.0;
    for (std::size_t j : positions) {
        if (j >= cols.size()) throw Error(ErrorCode::Config, "token position out of range");
        total += cols[j];
    }
    return total / (static_cast<double>(trace.heads) * trace.tokens_count * static_cast<double>(positions.size()));
}

// ---------------------------------------------------------------------------
// Estimators

/// Bottom-up pairwise sum: adjacent pairs are added level by level, an odd
/// trailing element is carried up unchanged. On a sorted input the sum of
/// X-union-X is exactly twice the sum of X.
inline double pairwise_sum(std::vector<double> level) {
    if (level.empty()) return 0.0;
    while (level.size() > 1) {
        std::size_t w = 0;
        for (std::size_t k = 0; k + 1 < level.size(); k += 2) level[w++] = level[k] + level[k + 1];
        if (level.size() % 2 == 1) level[w++] = level.back();
        level.resize(w);
    }
    return level.front();
}

inline std::vector<double> sorted_copy(std::span<const double> values) {
    std::vector<double> s(values.begin(), values.end());
    std::sort(s.begin(), s.end());
    return s;
}

inline void require_values(std::span<const double> values, const char* what) {
    if (values.empty()) throw Error(ErrorCode::Aggregation, std::string(what) + " of an empty multiset");
}

inline double aggregate_median(std::span<const double> values) {
    require_values(values, "median");
    const auto s = sorted_copy(values);
    const std::size_t n = s.size();
    return n % 2 == 1 ? s[n / 2] : (s[n / 2 - 1] + s[n / 2]) / 2.0;
}

inline double aggregate_mean(std::span<const double> values) {
    require_values(values, "mean");
    return pairwise_sum(sorted_copy(values)) / static_cast<double>(values.size());
}

/// Population standard deviation (divisor N), two-pass over the sorted
/// multiset with pairwise sums. Exactly 0 iff all values are equal.
inline double aggregate_sd(std::span<const double> values) {
    require_values(values, "standard deviation");
    auto s = sorted_copy(values);
    if (s.front() == s.back()) return 0.0;
    const double n = static_cast<double>(s.size());
    const double mean = pairwise_sum(s) / n;
    for (double& v : s) v = (v - mean) * (v - mean);
    return std::sqrt(pairwise_sum(std::move(s)) / n);
}

inline LayerProfile make_layer_profile(SymbolicProperty property, std::uint32_t layer, std::vector<double> values) {
    LayerProfile p{property, layer, std::move(values), 0.0, 0.0, 0};
    p.n = p.values.size();
    p.median = aggregate_median(p.values);
    p.sd = aggregate_sd(p.values);
    return p;
}

/// Re-derives median and SD from `values` and compares with the stored fields.
inline bool profile_consistent(const LayerProfile& p, double tol = 1e-12) {
    if (p.n != p.values.size() || p.values.empty() || p.sd < 0) return false;
    return std::abs(aggregate_median(p.values) - p.median) <= tol &&
           std::abs(aggregate_sd(p.values) - p.sd) <= tol;
}

// ---------------------------------------------------------------------------
// Layer profiles over a corpus

/// Map-phase output for one (sample, iteration): a_l^(S) for every layer and
/// every property present in the sample.
struct SampleAttention {
    std::string model_id;
    TaskFormat task_format = TaskFormat::QA;
    std::string sample_id;
    std::uint32_t iteration = 1;
    std::uint32_t layers = 0;
    std::array<std::optional<std::vector<double>>, 5> per_property;

    auto key() const { return std::tie(model_id, task_format, sample_id, iteration); }
};

inline SampleAttention compute_sample_attention(const AttentionTrace& trace, const SymbolicAnnotation& ann) {
    detail::require_attention(trace);
    SampleAttention out;
    out.model_id = trace.model_id;
    out.task_format = trace.task_format;
    out.sample_id = trace.sample_id;
    out.iteration = trace.iteration;
    out.layers = trace.layers;
    std::array<std::vector<std::size_t>, 5> positions;
    bool any = false;
    for (auto p : kAllProperties) {
        positions[static_cast<std::size_t>(property_code(p))] = token_positions_for_property(trace, ann, p);
        any = any || !positions[static_cast<std::size_t>(property_code(p))].empty();
    }
    if (!any) return out;
    const double norm_base = static_cast<double>(trace.heads) * trace.tokens_count;
    for (std::uint32_t l = 1; l <= trace.layers; ++l) {
        const auto cols = column_sums(trace, l);
        for (auto p : kAllProperties) {
            const auto& pos = positions[static_cast<std::size_t>(property_code(p))];
            if (pos.empty()) continue;
            auto& slot = out.per_property[static_cast<std::size_t>(property_code(p))];
            if (!slot) slot.emplace();
            double total = 0.0;
            for (std::size_t j : pos) total += cols[j];
            slot->push_back(total / (norm_base * static_cast<double>(pos.size())));
        }
    }
    return out;
}

inline void sort_partials(std::vector<SampleAttention>& partials) {
    std::stable_sort(partials.begin(), partials.end(),
                     [](const SampleAttention& a, const SampleAttention& b) { return a.key() < b.key(); });
}

/// Layer count per model; throws when traces of one model disagree.
inline std::map<std::string, std::uint32_t> model_layer_counts(std::span<const SampleAttention> partials) {
    std::map<std::string, std::uint32_t> out;
    for (const auto& s : partials) {
        auto [it, inserted] = out.emplace(s.model_id, s.layers);
        if (!inserted && it->second != s.layers) {
            Error e(ErrorCode::Corpus, "model '" + s.model_id + "' has traces with " + std::to_string(it->second) +
                                           " and " + std::to_string(s.layers) + " layers (sample '" +
                                           s.sample_id + "')");
            e.sample_id = s.sample_id;
            throw e;
        }
    }
    return out;
}

using ProfileKey = std::pair<std::string, SymbolicProperty>;
using ProfileMap = std::map<ProfileKey, std::vector<LayerProfile>>;

/// Reduce phase: one LayerProfile per (model, property, layer), built from the
/// partials in key order. Properties with no occurrences are absent.
inline ProfileMap reduce_layer_profiles(std::vector<SampleAttention> partials) {
    sort_partials(partials);
    const auto layer_counts = model_layer_counts(partials);
    std::map<ProfileKey, std::vector<std::vector<double>>> values;
    for (const auto& s : partials) {
        for (auto p : kAllProperties) {
            const auto& a = s.per_property[static_cast<std::size_t>(property_code(p))];
            if (!a) continue;
            auto& layers = values[{s.model_id, p}];
            layers.resize(layer_counts.at(s.model_id));
            for (std::size_t l = 0; l < a->size(); ++l) layers[l].push_back((*a)[l]);
        }
    }
    ProfileMap out;
    for (auto& [key, layers] : values) {
        auto& profiles = out[key];
        for (std::size_t l = 0; l < layers.size(); ++l)
            profiles.push_back(make_layer_profile(key.second, static_cast<std::uint32_t>(l + 1), std::move(layers[l])));
    }
    return out;
}

/// Traces with iteration > `iterations` are skipped. Every trace needs an
/// annotation and an attention channel.
inline ProfileMap build_layer_profiles(std::span<const AttentionTrace> corpus,
                                       const std::map<std::string, SymbolicAnnotation>& annotations,
                                       std::uint32_t iterations = 4) {
    std::vector<SampleAttention> partials;
    for (const auto& t : corpus) {
        if (t.iteration > iterations) continue;
        auto it = annotations.find(t.sample_id);
        if (it == annotations.end()) {
            Error e(ErrorCode::Corpus, "no annotation for sample '" + t.sample_id + "'");
            e.sample_id = t.sample_id;
            throw e;
        }
        partials.push_back(compute_sample_attention(t, it->second));
    }
    return reduce_layer_profiles(std::move(partials));
}

inline std::vector<double> sd_curve(const std::vector<LayerProfile>& profiles) {
    std::vector<double> out;
    out.reserve(profiles.size());
    for (const auto& p : profiles) out.push_back(p.sd);
    return out;
}

// ---------------------------------------------------------------------------
// LSC attribution curves

/// Mean attribution over input tokens, per layer.
inline std::vector<double> lsc_layer_profile(const AttentionTrace& trace) {
    if (!trace.has_attribution()) {
        Error e(ErrorCode::MissingChannel, "trace '" + trace.sample_id + "' carries no attribution matrix");
        e.sample_id = trace.sample_id;
        throw e;
    }
    std::vector<double> out(trace.layers);
    for (std::size_t l = 0; l < trace.layers; ++l) {
        std::vector<double> row(trace.tokens_count);
        for (std::size_t i = 0; i < trace.tokens_count; ++i) row[i] = trace.attribution_at(l, i);
        out[l] = aggregate_mean(row);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Cross-model correlation

inline constexpr std::size_t kDepthGridPoints = 100;

/// Linear interpolation of a per-layer curve onto `points` evenly spaced
/// normalized depths in [0, 1]; layer l sits at depth (l - 1) / (L - 1).
inline std::vector<double> resample_to_depth(std::span<const double> curve, std::size_t points = kDepthGridPoints) {
    if (curve.size() < 2) throw Error(ErrorCode::InsufficientData, "curve needs at least two layers to resample");
    std::vector<double> out(points);
    const double span = static_cast<double>(curve.size() - 1);
    for (std::size_t k = 0; k < points; ++k) {
        const double depth = static_cast<double>(k) / static_cast<double>(points - 1);
        const double x = depth * span;
        std::size_t lo = static_cast<std::size_t>(std::floor(x));
        if (lo >= curve.size() - 1) lo = curve.size() - 2;
        const double frac = x - static_cast<double>(lo);
        out[k] = curve[lo] + frac * (curve[lo + 1] - curve[lo]);
    }
    return out;
}

/// Pearson r of two curves after resampling onto a common depth grid. Returns
/// nullopt when either resampled curve has zero variance.
inline std::optional<double> cross_model_correlation(std::span<const double> a, std::span<const double> b) {
    if (a.size() < 3 || b.size() < 3)
        throw Error(ErrorCode::InsufficientData, "correlation needs curves of at least 3 layers");
    const auto x = resample_to_depth(a);
    const auto y = resample_to_depth(b);
    auto flat = [](const std::vector<double>& v) {
        auto [lo, hi] = std::minmax_element(v.begin(), v.end());
        return *lo == *hi;
    };
    if (flat(x) || flat(y)) return std::nullopt;
    const double n = static_cast<double>(x.size());
    double mx = 0.0, my = 0.0;
    for (std::size_t k = 0; k < x.size(); ++k) {
        mx += x[k];
        my += y[k];
    }
    mx /= n;
    my /= n;
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (std::size_t k = 0; k < x.size(); ++k) {
        const double dx = x[k] - mx, dy = y[k] - my;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if (sxx == 0.0 || syy == 0.0) return std::nullopt;
    return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

} // namespace symloc
