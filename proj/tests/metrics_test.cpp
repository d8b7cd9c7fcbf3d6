// Copyright (c) 2026, The symloc authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <random>

#include "support/oracles.hpp"
#include "symloc/metrics.hpp"

using namespace symloc;

namespace {

EvalRecord record(std::string id, std::set<SymbolicProperty> props, Verdict v) {
    EvalRecord r;
    r.sample_id = std::move(id);
    r.model_id = "m";
    r.dataset = "HaluEval";
    r.properties = std::move(props);
    r.verdict = v;
    return r;
}

std::vector<EvalRecord> counted(std::size_t hallucinated, std::size_t total, SymbolicProperty p) {
    std::vector<EvalRecord> out;
    for (std::size_t k = 0; k < total; ++k)
        out.push_back(record("r" + std::to_string(k), {p}, k < hallucinated ? Verdict::Hallucinated : Verdict::Correct));
    return out;
}

std::vector<double> uniform_values(std::mt19937_64& rng, std::size_t n) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::vector<double> v(n);
    for (auto& x : v) x = u(rng);
    return v;
}

} // namespace

// ---------------------------------------------------------------------------
// Judging

TEST(Judge, QaSubstringRule) {
    EXPECT_EQ(judge_answer(TaskFormat::QA, std::string("Yes, Humans only utilize about 10% of their brains at any given time"),
                           "No, we use virtually all of our brain"),
              Verdict::Hallucinated);
    EXPECT_EQ(judge_answer(TaskFormat::QA, std::string("It is Raleigh."), "raleigh"), Verdict::Correct);
    EXPECT_EQ(judge_answer(TaskFormat::QA, std::string("  the  answer  "), "the answer"), Verdict::Correct);
    EXPECT_EQ(judge_answer(TaskFormat::QA, std::nullopt, "x"), Verdict::Unjudgeable);
    EXPECT_EQ(judge_answer(TaskFormat::QA, std::string(" ... "), "x"), Verdict::Unjudgeable);
}

TEST(Judge, McqLetterRule) {
    EXPECT_EQ(judge_answer(TaskFormat::MCQ, std::string("B) Raleigh"), "B"), Verdict::Correct);
    EXPECT_EQ(judge_answer(TaskFormat::MCQ, std::string("Answer: C"), "B"), Verdict::Hallucinated);
    // Letters inside words do not count.
    EXPECT_EQ(judge_answer(TaskFormat::MCQ, std::string("Because B"), "B"), Verdict::Correct);
    EXPECT_EQ(judge_answer(TaskFormat::MCQ, std::string("no letter"), "A"), Verdict::Hallucinated);
}

TEST(Judge, OooContainment) {
    EXPECT_EQ(judge_answer(TaskFormat::OOO, std::string("The odd one is Columbus, since..."), "Columbus"),
              Verdict::Correct);
    EXPECT_EQ(judge_answer(TaskFormat::OOO, std::string("Salem"), "Columbus"), Verdict::Hallucinated);
}

// ---------------------------------------------------------------------------
// Rates

TEST(Rates, CellRendering) {
    const auto p = SymbolicProperty::Exceptions;
    auto r = counted(10, 11, p);
    const auto cell = hallucination_counts(r, p);
    EXPECT_NEAR(cell.percentage(), 90.9091, 1e-4);
    EXPECT_EQ(format_rate_cell(cell), "90.91");

    r = counted(0, 7, p);
    EXPECT_EQ(hallucination_rate(r, p), 0.0);
    EXPECT_EQ(format_rate_cell(hallucination_counts(r, p)), "0.00");
    EXPECT_FALSE(hallucination_counts(r, p).no_occurrences());

    r = counted(5, 5, p);
    EXPECT_EQ(format_rate_cell(hallucination_counts(r, p)), "100.00");

    const auto empty = hallucination_counts(r, SymbolicProperty::Numbers);
    EXPECT_TRUE(empty.no_occurrences());
    EXPECT_EQ(format_rate_cell(empty), "0");
}

TEST(Rates, UnjudgeableAndFilters) {
    const auto p = SymbolicProperty::Negation;
    std::vector<EvalRecord> r = {record("a", {p}, Verdict::Hallucinated), record("b", {p}, Verdict::Unjudgeable),
                                 record("c", {p}, Verdict::Correct), record("d", {}, Verdict::Hallucinated)};
    r[2].task_format = TaskFormat::MCQ;
    EXPECT_EQ(hallucination_counts(r, p).total, 2u);
    RecordFilter qa;
    qa.task_format = TaskFormat::QA;
    EXPECT_EQ(hallucination_rate(r, p, qa), 100.0);
    RecordFilter other;
    other.model_id = "nobody";
    EXPECT_TRUE(hallucination_counts(r, p, other).no_occurrences());
}

TEST(Rates, PermutationAndDuplicationInvariance) {
    std::mt19937_64 rng(5);
    std::uniform_int_distribution<int> v(0, 2), prop(0, 31);
    for (int trial = 0; trial < 30; ++trial) {
        std::vector<EvalRecord> r;
        for (int k = 0; k < 25; ++k) {
            std::set<SymbolicProperty> props;
            const int mask = prop(rng);
            for (auto p : kAllProperties)
                if (mask & (1 << property_code(p))) props.insert(p);
            r.push_back(record("r" + std::to_string(k), props, static_cast<Verdict>(v(rng))));
        }
        auto shuffled = r;
        std::shuffle(shuffled.begin(), shuffled.end(), rng);
        auto doubled = r;
        doubled.insert(doubled.end(), r.begin(), r.end());
        for (auto p : kAllProperties) {
            const double base = hallucination_rate(r, p);
            EXPECT_EQ(hallucination_rate(shuffled, p), base);
            EXPECT_EQ(hallucination_rate(doubled, p), base);
        }
    }
}

TEST(LengthBins, Boundaries) {
    EXPECT_EQ(bin_by_length(0), LengthBin::B0_9);
    EXPECT_EQ(bin_by_length(9), LengthBin::B0_9);
    EXPECT_EQ(bin_by_length(10), LengthBin::B10_19);
    EXPECT_EQ(bin_by_length(49), LengthBin::B40_49);
    EXPECT_EQ(bin_by_length(50), LengthBin::B50Plus);
    EXPECT_EQ(bin_by_length(100000), LengthBin::B50Plus);
    for (std::size_t n = 0; n < 70; ++n) {
        const auto b = bin_by_length(n);
        EXPECT_EQ(static_cast<std::size_t>(b), std::min<std::size_t>(n / 10, 5));
    }
    EXPECT_EQ(length_bin_label(LengthBin::B50Plus), "50+");
}

// ---------------------------------------------------------------------------
// Symbolic attention

TEST(SymbolicAttention, MatchesTripleLoopOracle) {
    std::mt19937_64 rng(17);
    std::uniform_int_distribution<int> dim(1, 4), tok(1, 8);
    for (int k = 0; k < 200; ++k) {
        const auto t = oracle::random_trace(rng, dim(rng), dim(rng), tok(rng));
        std::vector<std::size_t> pos;
        for (std::size_t j = 0; j < t.tokens_count; ++j)
            if (rng() % 2) pos.push_back(j);
        if (pos.empty()) pos.push_back(rng() % t.tokens_count);
        for (std::uint32_t l = 1; l <= t.layers; ++l)
            EXPECT_NEAR(symbolic_attention_profile(t, pos, l), oracle::symbolic_attention(t, pos, l), 1e-6);
    }
}

TEST(SymbolicAttention, UniformAndOneHot) {
    auto t = oracle::blank_trace(1, 2, 5);
    for (auto& v : t.attention) v = 0.2f;
    const std::vector<std::size_t> some = {1, 3};
    EXPECT_NEAR(symbolic_attention_profile(t, some, 1), 0.2, 1e-7);

    std::fill(t.attention.begin(), t.attention.end(), 0.0f);
    for (std::size_t h = 0; h < 2; ++h)
        for (std::size_t i = 0; i < 5; ++i) t.attention[t.index(0, h, i, 2)] = 1.0f;
    const std::vector<std::size_t> one = {2};
    EXPECT_DOUBLE_EQ(symbolic_attention_profile(t, one, 1), 1.0);
}

TEST(SymbolicAttention, LinearInTheTensor) {
    std::mt19937_64 rng(23);
    const auto t = oracle::random_trace(rng, 2, 3, 6);
    const std::vector<std::size_t> pos = {0, 4};
    for (float alpha : {0.5f, 0.25f, 2.0f}) {
        auto scaled = t;
        for (auto& v : scaled.attention) v *= alpha;
        EXPECT_NEAR(symbolic_attention_profile(scaled, pos, 2), alpha * symbolic_attention_profile(t, pos, 2), 1e-12);
    }
}

TEST(SymbolicAttention, EnlargingThePositionSet) {
    std::mt19937_64 rng(29);
    for (int k = 0; k < 50; ++k) {
        const auto t = oracle::random_trace(rng, 2, 2, 7);
        std::vector<std::size_t> pos = {1, 5};
        const double a = symbolic_attention_profile(t, pos, 1);
        const std::size_t extra = static_cast<std::size_t>(k % 7 == 1 || k % 7 == 5 ? 0 : k % 7);
        const double column_mean = oracle::symbolic_attention(t, {extra}, 1);
        pos.push_back(extra);
        EXPECT_NEAR(symbolic_attention_profile(t, pos, 1), (2 * a + column_mean) / 3, 1e-12);
    }
}

TEST(SymbolicAttention, Errors) {
    const auto t = oracle::blank_trace(1, 1, 2);
    try {
        symbolic_attention_profile(t, {}, 1);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::EmptySymbolSet);
    }
    const std::vector<std::size_t> pos = {0};
    EXPECT_THROW(symbolic_attention_profile(t, pos, 2), Error);
    auto absent = t;
    absent.attention.clear();
    try {
        symbolic_attention_profile(absent, pos, 1);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::MissingChannel);
    }
}

// ---------------------------------------------------------------------------
// Estimators

TEST(Estimators, SmallCases) {
    const std::vector<double> one = {0.2}, two = {0.1, 0.3}, flat = {0.7, 0.7, 0.7}, bin = {0.0, 1.0};
    EXPECT_EQ(aggregate_median(one), 0.2);
    EXPECT_DOUBLE_EQ(aggregate_median(two), 0.2);
    EXPECT_EQ(aggregate_sd(flat), 0.0);
    EXPECT_EQ(aggregate_sd(bin), 0.5);
    try {
        aggregate_median(std::vector<double>{});
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::Aggregation);
    }
    EXPECT_THROW(aggregate_sd(std::vector<double>{}), Error);
}

TEST(Estimators, MedianMatchesSortOracleExactly) {
    std::mt19937_64 rng(31);
    for (std::size_t n : {101u, 1000u, 2u, 7u}) {
        const auto v = uniform_values(rng, n);
        EXPECT_EQ(aggregate_median(v), oracle::median(v));
    }
}

TEST(Estimators, SdMatchesTwoPassOracle) {
    std::mt19937_64 rng(37);
    for (int trial = 0; trial < 20; ++trial) {
        auto v = uniform_values(rng, 1000);
        if (trial % 2) for (auto& x : v) x = 1e3 + x * 1e-3; // large offset, small spread
        EXPECT_NEAR(aggregate_sd(v), oracle::two_pass_sd(v), 1e-12);
    }
}

TEST(Estimators, DuplicationInvarianceIsExact) {
    std::mt19937_64 rng(41);
    for (std::size_t n : {1u, 2u, 3u, 17u, 1000u}) {
        const auto v = uniform_values(rng, n);
        auto vv = v;
        vv.insert(vv.end(), v.begin(), v.end());
        std::shuffle(vv.begin(), vv.end(), rng);
        EXPECT_EQ(aggregate_sd(vv), aggregate_sd(v)) << n;
        EXPECT_EQ(aggregate_median(vv), aggregate_median(v)) << n;
    }
}

TEST(Estimators, OrderIndependent) {
    std::mt19937_64 rng(43);
    auto v = uniform_values(rng, 333);
    const double sd = aggregate_sd(v), mean = aggregate_mean(v);
    for (int k = 0; k < 5; ++k) {
        std::shuffle(v.begin(), v.end(), rng);
        EXPECT_EQ(aggregate_sd(v), sd);
        EXPECT_EQ(aggregate_mean(v), mean);
    }
}

// ---------------------------------------------------------------------------
// Corpus profiles

TEST(LayerProfiles, MatchFlatListOracle) {
    std::mt19937_64 rng(47);
    std::vector<AttentionTrace> corpus;
    std::map<std::string, SymbolicAnnotation> ann;
    for (int k = 0; k < 10; ++k) {
        const std::string id = "s" + std::to_string(k);
        auto t = oracle::random_trace(rng, 3, 2, 5, id);
        t.iteration = 1 + k % 2;
        corpus.push_back(t);
        SymbolicAnnotation a;
        a.sample_id = id;
        // token k % 5 is a negation, token 0 a modifier in even samples
        a.spans.push_back({SymbolicProperty::Negation, t.tokens[k % 5].start_char, t.tokens[k % 5].end_char});
        if (k % 2 == 0) a.spans.push_back({SymbolicProperty::Modifiers, 0, 1});
        ann[id] = a;
    }
    const auto profiles = build_layer_profiles(corpus, ann, 4);
    ASSERT_EQ(profiles.size(), 2u);
    for (const auto& [key, layers] : profiles) {
        ASSERT_EQ(layers.size(), 3u);
        for (std::uint32_t l = 1; l <= 3; ++l) {
            std::vector<double> flat;
            for (const auto& t : corpus) {
                const auto pos = token_positions_for_property(t, ann.at(t.sample_id), key.second);
                if (!pos.empty()) flat.push_back(oracle::symbolic_attention(t, pos, l));
            }
            const auto& p = layers[l - 1];
            EXPECT_EQ(p.layer, l);
            EXPECT_EQ(p.n, flat.size());
            EXPECT_NEAR(p.median, oracle::median(flat), 1e-15);
            EXPECT_NEAR(p.sd, oracle::two_pass_sd(flat), 1e-12);
            EXPECT_TRUE(profile_consistent(p));
        }
    }
    EXPECT_EQ(profiles.at({"test/model", SymbolicProperty::Negation})[0].n, 10u);
    EXPECT_EQ(profiles.at({"test/model", SymbolicProperty::Modifiers})[0].n, 5u);

    // Iteration cap, then traversal order and duplication.
    EXPECT_EQ(build_layer_profiles(corpus, ann, 1).at({"test/model", SymbolicProperty::Negation})[0].n, 5u);
    auto reversed = corpus;
    std::reverse(reversed.begin(), reversed.end());
    auto doubled = corpus;
    doubled.insert(doubled.end(), corpus.begin(), corpus.end());
    const auto a = build_layer_profiles(reversed, ann, 4);
    const auto b = build_layer_profiles(doubled, ann, 4);
    for (const auto& [key, layers] : profiles) {
        for (std::size_t l = 0; l < layers.size(); ++l) {
            EXPECT_EQ(a.at(key)[l].sd, layers[l].sd);
            EXPECT_EQ(a.at(key)[l].median, layers[l].median);
            EXPECT_EQ(b.at(key)[l].sd, layers[l].sd);
            EXPECT_EQ(b.at(key)[l].median, layers[l].median);
        }
    }
}

TEST(LayerProfiles, SingleSampleGivesItsOwnValues) {
    std::mt19937_64 rng(53);
    const auto t = oracle::random_trace(rng, 2, 1, 4, "one");
    SymbolicAnnotation a;
    a.sample_id = "one";
    a.spans = {{SymbolicProperty::Numbers, t.tokens[2].start_char, t.tokens[2].end_char}};
    const std::vector<AttentionTrace> corpus = {t};
    const auto profiles = build_layer_profiles(corpus, {{"one", a}});
    const auto& layers = profiles.at({"test/model", SymbolicProperty::Numbers});
    const std::vector<std::size_t> pos = {2};
    for (std::uint32_t l = 1; l <= 2; ++l) {
        EXPECT_EQ(layers[l - 1].values, std::vector<double>{symbolic_attention_profile(t, pos, l)});
        EXPECT_EQ(layers[l - 1].sd, 0.0);
    }
}

TEST(LayerProfiles, LayerCountMismatchIsACorpusError) {
    std::mt19937_64 rng(59);
    std::vector<AttentionTrace> corpus = {oracle::random_trace(rng, 2, 1, 3, "a"), oracle::random_trace(rng, 3, 1, 3, "b")};
    std::map<std::string, SymbolicAnnotation> ann;
    for (const auto& t : corpus) {
        SymbolicAnnotation x;
        x.sample_id = t.sample_id;
        x.spans = {{SymbolicProperty::Negation, 0, 2}};
        ann[t.sample_id] = x;
    }
    try {
        build_layer_profiles(corpus, ann);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::Corpus);
    }
    ann.erase("b");
    corpus[1].layers = 2;
    try {
        build_layer_profiles(corpus, ann);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::Corpus);
        EXPECT_EQ(e.sample_id, "b");
    }
}

// ---------------------------------------------------------------------------
// LSC curves

TEST(Lsc, RowMeans) {
    auto t = oracle::blank_trace(3, 1, 4);
    t.attribution.assign(12, 0.0f);
    EXPECT_EQ(lsc_layer_profile(t), (std::vector<double>{0, 0, 0}));
    for (std::size_t l = 0; l < 3; ++l)
        for (std::size_t i = 0; i < 4; ++i) t.attribution[l * 4 + i] = static_cast<float>(l + 1);
    EXPECT_EQ(lsc_layer_profile(t), (std::vector<double>{1, 2, 3}));

    std::mt19937_64 rng(61);
    std::uniform_real_distribution<float> u(-2, 2);
    for (auto& v : t.attribution) v = u(rng);
    const auto curve = lsc_layer_profile(t);
    for (std::size_t l = 0; l < 3; ++l) {
        long double s = 0;
        for (std::size_t i = 0; i < 4; ++i) s += t.attribution[l * 4 + i];
        EXPECT_NEAR(curve[l], static_cast<double>(s / 4), 1e-12);
    }

    t.attribution.clear();
    try {
        lsc_layer_profile(t);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::MissingChannel);
    }
}

// ---------------------------------------------------------------------------
// Correlation

TEST(Correlation, IdenticalAndFlipped) {
    std::mt19937_64 rng(67);
    const auto a = uniform_values(rng, 26);
    std::vector<double> flipped(a.size());
    for (std::size_t k = 0; k < a.size(); ++k) flipped[k] = 3.0 - a[k];
    EXPECT_NEAR(*cross_model_correlation(a, a), 1.0, 1e-12);
    EXPECT_NEAR(*cross_model_correlation(a, flipped), -1.0, 1e-12);
}

TEST(Correlation, DifferentDepthsMatchOracle) {
    std::mt19937_64 rng(71);
    for (int trial = 0; trial < 20; ++trial) {
        const auto a = uniform_values(rng, 26);
        const auto b = uniform_values(rng, 42);
        const auto r = cross_model_correlation(a, b);
        ASSERT_TRUE(r);
        EXPECT_NEAR(*r, oracle::interp_correlate(a, b), 1e-9);
        EXPECT_NEAR(*cross_model_correlation(b, a), *r, 1e-12);
    }
}

TEST(Correlation, FlatAndShortCurves) {
    const std::vector<double> flat(10, 0.3), ramp = {0.1, 0.2, 0.3, 0.4}, two = {1, 2};
    EXPECT_FALSE(cross_model_correlation(flat, ramp));
    try {
        cross_model_correlation(two, ramp);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::InsufficientData);
    }
}

TEST(Correlation, ResampleEndpoints) {
    const std::vector<double> c = {1.0, 3.0, 2.0};
    const auto r = resample_to_depth(c);
    ASSERT_EQ(r.size(), kDepthGridPoints);
    EXPECT_EQ(r.front(), 1.0);
    EXPECT_EQ(r.back(), 2.0);
    EXPECT_NEAR(r[33], 1.0 + 2.0 * (33.0 / 99.0 * 2.0), 1e-12);
}
