// Copyright (c) 2026, The symloc authors
// SPDX-License-Identifier: Apache-2.0
//
// symloc command-line front end.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "symloc/symloc.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace symloc;

namespace {

struct Globals {
    unsigned workers = std::max(1u, std::thread::hardware_concurrency());
    std::uint64_t seed = 0;
    std::string lexicon;
};

void write_file(const fs::path& path, std::string_view bytes) {
    if (path.has_parent_path()) {
        std::error_code ec;
        fs::create_directories(path.parent_path(), ec);
    }
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::Io, "cannot write '" + path.string() + "'");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error(ErrorCode::Io, "write failed for '" + path.string() + "'");
}

std::string read_file(const fs::path& path) {
    auto in = open_input(path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

json error_json(const Error& e) {
    json j = {{"error", error_code_name(e.code())}, {"code", exit_status(e.code())}, {"message", e.what()}};
    if (e.sample_id) j["sample_id"] = *e.sample_id;
    if (e.sample_index) j["sample_index"] = *e.sample_index;
    if (e.byte_offset) j["byte_offset"] = *e.byte_offset;
    if (e.line) j["line"] = *e.line;
    if (e.expected_bytes) j["expected_bytes"] = *e.expected_bytes;
    if (e.available_bytes) j["available_bytes"] = *e.available_bytes;
    return j;
}

std::optional<fs::path> opt_path(const std::string& s) {
    if (s.empty()) return std::nullopt;
    return fs::path(s);
}

TaskFormat parse_format(const std::string& s) {
    auto f = format_from_name(text::to_lower(s));
    if (!f) throw Error(ErrorCode::Config, "unknown task format '" + s + "' (expected qa, mcq or ooo)");
    return *f;
}

void write_rendered(const AnalysisReport& report, const fs::path& dir) {
    write_file(dir / "report.json", serialize_report(report));
    write_file(dir / "report.csv", render_csv(report));
    write_file(dir / "report.md", render_markdown(report));
    for (const auto& series : emit_variance_curves(report))
        write_file(dir / "curves" / (series.file_stem() + ".tsv"), series.tsv());
}

// ---------------------------------------------------------------------------

struct AnalysisFlags {
    std::vector<std::string> traces;
    std::string annotations;
    std::string judgments;
    std::uint32_t iterations = 4;
    double delta = kDefaultDelta;
    double kappa = kDefaultKappa;
    std::string format_filter;
    std::vector<std::string> layers;
    bool reannotate = false;
    std::string out;
    std::string out_dir;

    void add_inputs(CLI::App* cmd, bool required) {
        auto* t = cmd->add_option("--traces", traces, "Trace file(s) in SYMT format");
        auto* a = cmd->add_option("--annotations", annotations, "Annotation sidecar (JSONL)");
        if (required) {
            t->required();
            a->required();
        }
        cmd->add_option("--judgments", judgments, "External verdicts (JSONL: sample_id, model_id?, verdict)");
        cmd->add_option("--iterations", iterations, "Iterations R included per sample")->capture_default_str();
        cmd->add_option("--format-filter", format_filter, "Restrict to one task format (qa|mcq|ooo)");
        cmd->add_flag("--reannotate", reannotate, "Recompute spans for every sidecar entry");
    }

    PipelineConfig config(const Globals& g) const {
        PipelineConfig cfg;
        for (const auto& t : traces) cfg.traces.emplace_back(t);
        cfg.annotations = annotations;
        cfg.judgments = opt_path(judgments);
        cfg.lexicon = opt_path(g.lexicon);
        cfg.iterations = iterations;
        cfg.delta = delta;
        cfg.kappa = kappa;
        cfg.workers = g.workers;
        if (!format_filter.empty()) cfg.format_filter = parse_format(format_filter);
        for (const auto& l : layers) cfg.layers.insert(parse_layers_flag(l));
        cfg.reannotate = reannotate;
        return cfg;
    }
};

int cmd_analyze(const AnalysisFlags& f, const Globals& g) {
    const auto report = run_pipeline(f.config(g));
    write_file(f.out, serialize_report(report));
    if (!f.out_dir.empty()) write_rendered(report, f.out_dir);
    std::cout << json{{"report", f.out},
                      {"samples_read", report.metadata.samples_read},
                      {"samples_used", report.metadata.samples_used},
                      {"exclusions", report.exclusions.size()}}
                     .dump()
              << "\n";
    return 0;
}

int cmd_localize(const AnalysisFlags& f, const Globals& g) {
    auto cfg = f.config(g);
    cfg.require_layers = false;
    const auto result = run_analysis(cfg);
    json samples = json::array();
    for (const auto& s : result.localizations) samples.push_back(sample_localization_json(s));
    json summaries = json::array();
    for (const auto& s : result.report.localization) summaries.push_back(localization_summary_json(s));
    const json doc = {{"config",
                       {{"delta", round6(cfg.delta)}, {"kappa", round6(cfg.kappa)}, {"iterations", cfg.iterations}}},
                      {"corpus_hash", result.report.metadata.corpus_hash},
                      {"samples", samples},
                      {"summaries", summaries}};
    write_file(f.out, canonical_json(doc));
    std::cout << json{{"localization", f.out}, {"results", samples.size()}}.dump() << "\n";
    return 0;
}

int cmd_report(const std::string& report_path, const std::string& out_dir, bool verify, const AnalysisFlags& f,
               const Globals& g) {
    json stored;
    try {
        stored = json::parse(read_file(report_path));
    } catch (const json::parse_error& e) {
        throw Error(ErrorCode::Parse, "report: malformed JSON: " + std::string(e.what()));
    }
    const auto report = report_from_json(stored);
    if (verify) {
        if (f.traces.empty() || f.annotations.empty())
            throw Error(ErrorCode::Config, "--verify needs --traces and --annotations");
        verify_report(stored, f.config(g));
        std::cout << json{{"verified", true}, {"report", report_path}}.dump() << "\n";
    }
    if (!out_dir.empty()) {
        write_file(fs::path(out_dir) / "report.csv", render_csv(report));
        write_file(fs::path(out_dir) / "report.md", render_markdown(report));
        for (const auto& series : emit_variance_curves(report))
            write_file(fs::path(out_dir) / "curves" / (series.file_stem() + ".tsv"), series.tsv());
    }
    if (!verify && out_dir.empty()) std::cout << render_markdown(report);
    return 0;
}

int cmd_validate(const std::vector<std::string>& traces, const std::string& annotations) {
    std::size_t bad = 0, total = 0;
    std::map<std::string, std::uint32_t> prompt_lengths;
    for (const auto& path : traces) {
        auto in = open_input(path);
        TraceReader reader(in, ReaderOptions{ReaderOptions{}.max_sample_bytes, false});
        while (auto t = reader.next()) {
            ++total;
            std::uint32_t len = 0;
            for (const auto& tok : t->tokens) len = std::max(len, tok.end_char);
            prompt_lengths[t->sample_id] = std::max(prompt_lengths[t->sample_id], len);
            const auto v = validate_trace(*t);
            if (v.empty()) continue;
            ++bad;
            json list = json::array();
            for (const auto& x : v) list.push_back(x.to_string());
            std::cout << json{{"file", path},
                              {"sample_index", reader.samples_read() - 1},
                              {"sample_id", t->sample_id},
                              {"violations", list}}
                             .dump()
                      << "\n";
        }
    }
    std::size_t bad_ann = 0;
    if (!annotations.empty()) {
        auto in = open_input(annotations);
        const auto set = read_annotations(in);
        for (const auto& w : set.warnings) std::cerr << "warning: " << w << "\n";
        for (const auto& [id, ann] : set.by_id) {
            auto it = prompt_lengths.find(id);
            const auto problems =
                validate_annotation(ann, it == prompt_lengths.end() ? UINT32_MAX : it->second);
            if (problems.empty()) continue;
            ++bad_ann;
            std::cout << json{{"annotation", id}, {"violations", problems}}.dump() << "\n";
        }
    }
    std::cout << json{{"samples", total}, {"invalid_samples", bad}, {"invalid_annotations", bad_ann}}.dump() << "\n";
    if (bad || bad_ann)
        throw Error(ErrorCode::Validation, std::to_string(bad) + " invalid sample(s), " + std::to_string(bad_ann) +
                                               " invalid annotation(s)");
    return 0;
}

int cmd_annotate(const std::string& in_path, const std::string& out_path, bool force, const Globals& g) {
    const auto lex = load_lexicon_file(opt_path(g.lexicon));
    auto set = load_annotations(in_path, lex, force);
    for (const auto& w : set.warnings) std::cerr << "warning: " << w << "\n";
    std::vector<SymbolicAnnotation> anns;
    std::array<std::size_t, 5> totals{};
    json samples = json::array();
    for (auto& [id, ann] : set.by_id) {
        const auto counts = span_counts(ann);
        json c = json::object();
        for (auto p : kAllProperties) {
            const auto k = static_cast<std::size_t>(property_code(p));
            c[std::string(property_name(p))] = counts[k];
            totals[k] += counts[k];
        }
        samples.push_back({{"sample_id", id}, {"counts", c}});
        anns.push_back(ann);
    }
    std::ostringstream os;
    write_annotations(anns, os);
    write_file(out_path, os.str());
    json t = json::object();
    for (auto p : kAllProperties) t[std::string(property_name(p))] = totals[static_cast<std::size_t>(property_code(p))];
    std::cout << json{{"annotated", anns.size()}, {"totals", t}, {"samples", samples}}.dump() << "\n";
    return 0;
}

int cmd_transform(const std::string& format, const std::string& in_path, const std::string& out_path,
                  const std::string& annotations, const Globals& g) {
    const auto fmt = parse_format(format);
    if (fmt == TaskFormat::QA) throw Error(ErrorCode::Config, "transform targets mcq or ooo");
    auto in = open_input(in_path);
    const auto corpus = read_qa_corpus(in);
    std::ostringstream items, excl;
    std::size_t made = 0, dropped = 0;
    auto emit_exclusions = [&](const std::vector<TransformExclusion>& ex) {
        for (const auto& e : ex) excl << json{{"item_id", e.item_id}, {"reason", e.reason}}.dump() << "\n";
        dropped = ex.size();
    };
    if (fmt == TaskFormat::MCQ) {
        auto r = transform_corpus(corpus, [&](const QAItem& q) { return to_mcq(q, corpus, g.seed); });
        for (const auto& m : r.items) items << to_json(m).dump() << "\n";
        made = r.items.size();
        emit_exclusions(r.exclusions);
    } else {
        if (annotations.empty()) throw Error(ErrorCode::Config, "ooo transform needs --annotations");
        auto ain = open_input(annotations);
        const auto set = read_annotations(ain);
        auto r = transform_corpus(corpus, [&](const QAItem& q) { return to_ooo(q, corpus, set.by_id, g.seed); });
        for (const auto& o : r.items) items << to_json(o).dump() << "\n";
        made = r.items.size();
        emit_exclusions(r.exclusions);
    }
    write_file(out_path, items.str());
    write_file(out_path + ".exclusions.jsonl", excl.str());
    std::cout << json{{"items", made}, {"excluded", dropped}, {"out", out_path}}.dump() << "\n";
    return 0;
}

int cmd_synth(std::size_t items, const std::vector<std::string>& models, std::uint32_t heads,
              std::uint32_t iterations, bool attribution, bool with_spans, const std::string& out,
              const std::string& sidecar, const Globals& g) {
    SyntheticOptions opt;
    opt.items = items;
    opt.heads = heads;
    opt.iterations = iterations;
    opt.attribution = attribution;
    opt.omit_spans = !with_spans;
    opt.seed = g.seed;
    if (!models.empty()) {
        opt.models.clear();
        for (const auto& m : models) {
            const auto eq = m.rfind('=');
            std::uint32_t L = 0;
            if (eq == std::string::npos ||
                std::from_chars(m.data() + eq + 1, m.data() + m.size(), L).ec != std::errc{} || L == 0)
                throw Error(ErrorCode::Config, "--model expects name=layers (got '" + m + "')");
            opt.models.emplace_back(m.substr(0, eq), L);
        }
    }
    const auto corpus = make_synthetic_corpus(opt);
    std::ostringstream traces(std::ios::binary), anns;
    write_trace(corpus.traces, traces);
    write_annotations(corpus.annotations, anns);
    write_file(out, traces.str());
    write_file(sidecar, anns.str());
    std::cout << json{{"traces", corpus.traces.size()}, {"annotations", corpus.annotations.size()}}.dump() << "\n";
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"symloc: symbolic hallucination localization over attention traces"};
    app.require_subcommand(1);
    app.set_config("--config", "", "TOML/INI file mirroring the command-line flags");
    Globals g;
    app.add_option("--workers", g.workers, "Worker threads")->check(CLI::PositiveNumber);
    app.add_option("--seed", g.seed, "Seed for transforms and synthetic corpora")->capture_default_str();
    app.add_option("--lexicon", g.lexicon, "Keyword lexicon (JSON; extends the defaults)");

    AnalysisFlags analyze_flags, localize_flags, report_flags;

    auto* analyze = app.add_subcommand("analyze", "Compute the analysis report");
    analyze_flags.add_inputs(analyze, true);
    analyze->add_option("--delta", analyze_flags.delta, "Relative drop threshold")->capture_default_str();
    analyze->add_option("--kappa", analyze_flags.kappa, "Spike factor over the median baseline")->capture_default_str();
    analyze->add_option("--layers", analyze_flags.layers, "Selected layers, model=a,b (repeatable)");
    analyze->add_option("--out", analyze_flags.out, "report.json path")->required();
    analyze->add_option("--out-dir", analyze_flags.out_dir, "Also write report.{json,csv,md} and curves/");

    auto* localize = app.add_subcommand("localize", "Per-sample first-instability layers and summaries");
    localize_flags.add_inputs(localize, true);
    localize->add_option("--delta", localize_flags.delta, "Relative drop threshold")->capture_default_str();
    localize->add_option("--kappa", localize_flags.kappa, "Spike factor")->capture_default_str();
    localize->add_option("--out", localize_flags.out, "localization.json path")->required();

    std::string report_path, report_out_dir;
    bool verify = false;
    auto* report = app.add_subcommand("report", "Render or verify a report");
    report->add_option("--report", report_path, "report.json")->required();
    report->add_option("--out-dir", report_out_dir, "Write report.csv, report.md and curves/ here");
    report->add_flag("--verify", verify, "Re-derive every cell from the inputs and compare");
    report_flags.add_inputs(report, false);
    report->add_option("--layers", report_flags.layers, "Unused with --verify; layers come from the report");

    std::vector<std::string> validate_traces;
    std::string validate_annotations;
    auto* validate = app.add_subcommand("validate", "Check trace files (and optionally a sidecar)");
    validate->add_option("--traces", validate_traces, "Trace file(s)")->required();
    validate->add_option("--annotations", validate_annotations, "Annotation sidecar");

    std::string ann_in, ann_out;
    bool ann_force = false;
    auto* annotate = app.add_subcommand("annotate", "Fill symbolic spans into a sidecar");
    annotate->add_option("--in", ann_in, "Input sidecar (JSONL)")->required();
    annotate->add_option("--out", ann_out, "Output sidecar")->required();
    annotate->add_flag("--force", ann_force, "Re-annotate entries that already carry spans");

    std::string tr_format, tr_in, tr_out, tr_annotations;
    auto* transform = app.add_subcommand("transform", "Reformulate a QA corpus as MCQ or odd-one-out");
    transform->add_option("--format", tr_format, "mcq or ooo")->required();
    transform->add_option("--in", tr_in, "QA corpus (JSONL)")->required();
    transform->add_option("--out", tr_out, "Output items (JSONL)")->required();
    transform->add_option("--annotations", tr_annotations, "Sidecar keyed by item_id (ooo)");

    std::size_t sy_items = 100;
    std::vector<std::string> sy_models;
    std::uint32_t sy_heads = 2, sy_iterations = 1;
    bool sy_attr = false, sy_spans = false;
    std::string sy_out, sy_sidecar;
    auto* synth = app.add_subcommand("synth", "Write a seeded synthetic corpus");
    synth->add_option("--items", sy_items, "Items")->capture_default_str();
    synth->add_option("--model", sy_models, "name=layers (repeatable)");
    synth->add_option("--heads", sy_heads, "Heads")->capture_default_str();
    synth->add_option("--iterations", sy_iterations, "Iterations per item")->capture_default_str();
    synth->add_flag("--attribution", sy_attr, "Include the attribution channel");
    synth->add_flag("--with-spans", sy_spans, "Write spans into the sidecar");
    synth->add_option("--out", sy_out, "Trace file")->required();
    synth->add_option("--sidecar", sy_sidecar, "Sidecar file")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : exit_status(ErrorCode::Config);
    }

    try {
        if (*analyze) return cmd_analyze(analyze_flags, g);
        if (*localize) return cmd_localize(localize_flags, g);
        if (*report) return cmd_report(report_path, report_out_dir, verify, report_flags, g);
        if (*validate) return cmd_validate(validate_traces, validate_annotations);
        if (*annotate) return cmd_annotate(ann_in, ann_out, ann_force, g);
        if (*transform) return cmd_transform(tr_format, tr_in, tr_out, tr_annotations, g);
        if (*synth) return cmd_synth(sy_items, sy_models, sy_heads, sy_iterations, sy_attr, sy_spans, sy_out,
                                     sy_sidecar, g);
    } catch (const Error& e) {
        std::cerr << error_json(e).dump() << "\n";
        return exit_status(e.code());
    } catch (const std::exception& e) {
        std::cerr << json{{"error", "E_INTERNAL"}, {"code", 1}, {"message", e.what()}}.dump() << "\n";
        return 1;
    }
    return 0;
}
