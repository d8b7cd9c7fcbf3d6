// Copyright (c) 2026, The symloc authors
// SPDX-License-Identifier: Apache-2.0
//
// Reader/writer for the SYMT trace container and the JSON-lines annotation
// sidecar.
//
// Container layout (all integers little-endian):
//
//   header : "SYMT" | version u16 (=1) | sample_count u32
//   sample : sample_id (u32 len + UTF-8) | model_id (u32 len + UTF-8)
//            | task_format u8 | iteration u8 | L u16 | H u16 | T u16 | flags u8
//            | T x (u16 len + UTF-8 + u32 start_char + u32 end_char)
//            | attention L*H*T*T f32 [l][h][i][j]      (flags bit0)
//            | generated_answer (u32 len + UTF-8)       (flags bit1)
//            | gold_answer (u32 len + UTF-8)
//            | attribution L*T f32                      (flags bit2)

#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <cstring>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "symloc/error.hpp"
#include "symloc/text.hpp"
#include "symloc/trace_model.hpp"

namespace symloc {

inline constexpr std::array<char, 4> kTraceMagic = {'S', 'Y', 'M', 'T'};
inline constexpr std::uint16_t kTraceVersion = 1;
inline constexpr std::size_t kHeaderBytes = 10;

namespace flags {
inline constexpr std::uint8_t kAttention = 1u << 0;
inline constexpr std::uint8_t kGenerated = 1u << 1;
inline constexpr std::uint8_t kAttribution = 1u << 2;
} // namespace flags

struct TraceFileHeader {
    std::array<char, 4> magic = kTraceMagic;
    std::uint16_t version = kTraceVersion;
    std::uint32_t sample_count = 0;
};

namespace detail {

class ByteWriter {
public:
    explicit ByteWriter(std::ostream& out) : out_(out) {}

    void bytes(const void* data, std::size_t n) {
        if (n == 0) return;
        out_.write(static_cast<const char*>(data), static_cast<std::streamsize>(n));
        if (!out_) {
            Error e(ErrorCode::Io, "write failed after " + std::to_string(written_) + " bytes");
            e.byte_offset = written_;
            throw e;
        }
        written_ += n;
    }
    void u8(std::uint8_t v) { bytes(&v, 1); }
    void u16(std::uint16_t v) {
        const std::uint8_t b[2] = {static_cast<std::uint8_t>(v), static_cast<std::uint8_t>(v >> 8)};
        bytes(b, 2);
    }
    void u32(std::uint32_t v) {
        std::uint8_t b[4];
        for (int i = 0; i < 4; ++i) b[i] = static_cast<std::uint8_t>(v >> (8 * i));
        bytes(b, 4);
    }
    void f32(float v) {
        std::uint32_t bits;
        std::memcpy(&bits, &v, 4);
        u32(bits);
    }
    void string32(const std::string& s) {
        u32(static_cast<std::uint32_t>(s.size()));
        bytes(s.data(), s.size());
    }
    void string16(const std::string& s) {
        u16(static_cast<std::uint16_t>(s.size()));
        bytes(s.data(), s.size());
    }
    void f32_block(std::span<const float> values) {
        // Encode in chunks so large tensors do not need a second full copy.
        std::array<std::uint8_t, 4096> buf;
        std::size_t k = 0;
        while (k < values.size()) {
            const std::size_t n = std::min<std::size_t>(buf.size() / 4, values.size() - k);
            for (std::size_t m = 0; m < n; ++m) {
                std::uint32_t bits;
                std::memcpy(&bits, &values[k + m], 4);
                for (int i = 0; i < 4; ++i)
                    buf[m * 4 + static_cast<std::size_t>(i)] = static_cast<std::uint8_t>(bits >> (8 * i));
            }
            bytes(buf.data(), n * 4);
            k += n;
        }
    }

    std::uint64_t written() const { return written_; }

private:
    std::ostream& out_;
    std::uint64_t written_ = 0;
};

} // namespace detail

inline void throw_invalid(const AttentionTrace& trace, const std::vector<Violation>& v,
                          std::optional<std::uint64_t> index = std::nullopt,
                          std::optional<std::uint64_t> offset = std::nullopt) {
    std::string msg = "sample '" + trace.sample_id + "' has " + std::to_string(v.size()) +
                      " invariant violation(s)";
    const std::size_t shown = std::min<std::size_t>(v.size(), 5);
    for (std::size_t k = 0; k < shown; ++k) msg += (k == 0 ? ": " : "; ") + v[k].to_string();
    if (v.size() > shown) msg += "; ...";
    Error e(ErrorCode::Validation, msg);
    e.sample_id = trace.sample_id;
    e.sample_index = index;
    e.byte_offset = offset;
    throw e;
}

inline std::uint8_t trace_flags(const AttentionTrace& t) {
    std::uint8_t f = 0;
    if (t.has_attention()) f |= flags::kAttention;
    if (t.generated_answer) f |= flags::kGenerated;
    if (t.has_attribution()) f |= flags::kAttribution;
    return f;
}

/// Streaming writer. The sample count is fixed up front because it lives in
/// the header; finish() checks that exactly that many samples were written.
class TraceWriter {
public:
    TraceWriter(std::ostream& out, std::uint32_t sample_count) : w_(out), count_(sample_count) {
        w_.bytes(kTraceMagic.data(), 4);
        w_.u16(kTraceVersion);
        w_.u32(sample_count);
    }

    void write(const AttentionTrace& t) {
        if (written_samples_ >= count_)
            throw Error(ErrorCode::Format, "more samples written than declared in the header");
        if (auto v = validate_trace(t); !v.empty()) throw_invalid(t, v, written_samples_);
        w_.string32(t.sample_id);
        w_.string32(t.model_id);
        w_.u8(static_cast<std::uint8_t>(t.task_format));
        w_.u8(static_cast<std::uint8_t>(t.iteration));
        w_.u16(static_cast<std::uint16_t>(t.layers));
        w_.u16(static_cast<std::uint16_t>(t.heads));
        w_.u16(static_cast<std::uint16_t>(t.tokens_count));
        w_.u8(trace_flags(t));
        for (const Token& tok : t.tokens) {
            w_.string16(tok.text);
            w_.u32(tok.start_char);
            w_.u32(tok.end_char);
        }
        if (t.has_attention()) w_.f32_block(t.attention);
        if (t.generated_answer) w_.string32(*t.generated_answer);
        w_.string32(t.gold_answer);
        if (t.has_attribution()) w_.f32_block(t.attribution);
        ++written_samples_;
    }

    std::uint64_t finish() {
        if (written_samples_ != count_) {
            throw Error(ErrorCode::Format, "header declares " + std::to_string(count_) +
                                               " samples but " +
                                               std::to_string(written_samples_) + " were written");
        }
        return w_.written();
    }

    std::uint64_t bytes_written() const { return w_.written(); }

private:
    detail::ByteWriter w_;
    std::uint32_t count_;
    std::uint32_t written_samples_ = 0;
};

/// Writes a whole corpus and returns the number of bytes emitted.
inline std::uint64_t write_trace(std::span<const AttentionTrace> samples, std::ostream& out) {
    for (std::size_t k = 0; k < samples.size(); ++k) {
        if (auto v = validate_trace(samples[k]); !v.empty()) throw_invalid(samples[k], v, k);
    }
    TraceWriter writer(out, static_cast<std::uint32_t>(samples.size()));
    for (const auto& s : samples) writer.write(s);
    return writer.finish();
}

struct ReaderOptions {
    /// Reject any single sample whose payload would exceed this many bytes.
    std::uint64_t max_sample_bytes = 1ULL << 31;
    /// Run validate_trace on every yielded sample and throw on violations.
    bool validate = true;
};

/// Sequential, streaming reader: holds at most one sample in memory.
class TraceReader {
public:
    explicit TraceReader(std::istream& in, ReaderOptions opts = {}) : in_(in), opts_(opts) {
        std::array<char, 4> magic{};
        read_exact(magic.data(), 4, "magic");
        if (magic != kTraceMagic) {
            Error e(ErrorCode::Format, "bad magic: expected \"SYMT\"");
            e.byte_offset = 0;
            throw e;
        }
        header_.magic = magic;
        header_.version = u16("version");
        if (header_.version != kTraceVersion) {
            Error e(ErrorCode::UnsupportedVersion,
                    "unsupported trace version " + std::to_string(header_.version));
            e.byte_offset = 4;
            throw e;
        }
        header_.sample_count = u32("sample_count");
    }

    const TraceFileHeader& header() const { return header_; }
    std::uint64_t samples_read() const { return index_; }
    std::uint64_t byte_offset() const { return offset_; }

    std::optional<AttentionTrace> next() {
        if (index_ >= header_.sample_count) {
            if (!trailing_checked_) {
                trailing_checked_ = true;
                if (in_.peek() != std::char_traits<char>::eof()) {
                    Error e(ErrorCode::Format, "trailing bytes after the declared " +
                                                   std::to_string(header_.sample_count) +
                                                   " samples");
                    e.byte_offset = offset_;
                    throw e;
                }
            }
            return std::nullopt;
        }
        in_sample_ = true;
        sample_bytes_ = 0;
        const std::uint64_t start = offset_;
        AttentionTrace t;
        t.sample_id = string32("sample_id");
        t.model_id = string32("model_id");
        const std::uint8_t fmt = u8("task_format");
        if (fmt > 2) fail_format("unknown task_format " + std::to_string(fmt), t.sample_id);
        t.task_format = static_cast<TaskFormat>(fmt);
        t.iteration = u8("iteration");
        t.layers = u16("L");
        t.heads = u16("H");
        t.tokens_count = u16("T");
        const std::uint8_t f = u8("flags");
        if ((f & ~0x7u) != 0) fail_format("unknown flag bits set", t.sample_id);

        t.tokens.resize(t.tokens_count);
        for (auto& tok : t.tokens) {
            tok.text = string_n(u16("token length"), "token text");
            tok.start_char = u32("token start_char");
            tok.end_char = u32("token end_char");
        }
        if (f & flags::kAttention) t.attention = f32_block(t.expected_attention_size(), "attention");
        if (f & flags::kGenerated) t.generated_answer = string32("generated_answer");
        t.gold_answer = string32("gold_answer");
        if (f & flags::kAttribution)
            t.attribution = f32_block(static_cast<std::size_t>(t.layers) * t.tokens_count, "attribution");

        in_sample_ = false;
        if (opts_.validate) {
            if (auto v = validate_trace(t); !v.empty()) throw_invalid(t, v, index_, start);
        }
        ++index_;
        return t;
    }

private:
    [[noreturn]] void fail_format(const std::string& msg, const std::string& sample_id) {
        Error e(ErrorCode::Format, "sample " + std::to_string(index_) + ": " + msg);
        e.sample_id = sample_id;
        e.sample_index = index_;
        e.byte_offset = offset_;
        throw e;
    }

    void charge(std::uint64_t n, const char* what) {
        if (!in_sample_) return;
        sample_bytes_ += n;
        if (sample_bytes_ > opts_.max_sample_bytes) {
            Error e(ErrorCode::Format, "sample " + std::to_string(index_) + " field '" + what +
                                           "' exceeds the per-sample allocation cap of " +
                                           std::to_string(opts_.max_sample_bytes) + " bytes");
            e.sample_index = index_;
            e.byte_offset = offset_;
            throw e;
        }
    }

    void read_exact(char* dst, std::size_t n, const char* what) {
        in_.read(dst, static_cast<std::streamsize>(n));
        const auto got = static_cast<std::size_t>(in_.gcount());
        if (got != n) truncated(n, got, what);
        offset_ += n;
    }

    [[noreturn]] void truncated(std::uint64_t expected, std::uint64_t got, const char* what) {
        std::string where = in_sample_ ? "sample " + std::to_string(index_) : std::string("header");
        Error e(ErrorCode::Truncated, where + " truncated in field '" + what + "' at byte " +
                                          std::to_string(offset_) + ": expected " +
                                          std::to_string(expected) + " bytes, " +
                                          std::to_string(got) + " available (" +
                                          std::to_string(expected - got) + " missing)");
        if (in_sample_) e.sample_index = index_;
        e.byte_offset = offset_;
        e.expected_bytes = expected;
        e.available_bytes = got;
        throw e;
    }

    std::uint8_t u8(const char* what) {
        unsigned char b;
        read_exact(reinterpret_cast<char*>(&b), 1, what);
        return b;
    }
    std::uint16_t u16(const char* what) {
        unsigned char b[2];
        read_exact(reinterpret_cast<char*>(b), 2, what);
        return static_cast<std::uint16_t>(b[0] | (b[1] << 8));
    }
    std::uint32_t u32(const char* what) {
        unsigned char b[4];
        read_exact(reinterpret_cast<char*>(b), 4, what);
        std::uint32_t v = 0;
        for (int i = 3; i >= 0; --i) v = (v << 8) | b[i];
        return v;
    }

    // Reads n bytes in bounded chunks so that a corrupt length field fails
    // with a truncation error instead of a giant up-front allocation.
    std::string string_n(std::uint64_t n, const char* what) {
        charge(n, what);
        std::string s;
        constexpr std::size_t kChunk = 1u << 20;
        std::uint64_t done = 0;
        while (done < n) {
            const std::size_t step = static_cast<std::size_t>(std::min<std::uint64_t>(kChunk, n - done));
            s.resize(static_cast<std::size_t>(done) + step);
            in_.read(s.data() + done, static_cast<std::streamsize>(step));
            const auto got = static_cast<std::uint64_t>(in_.gcount());
            if (got != step) truncated(n, done + got, what);
            done += step;
            offset_ += step;
        }
        return s;
    }
    std::string string32(const char* what) { return string_n(u32(what), what); }

    std::vector<float> f32_block(std::size_t count, const char* what) {
        const std::string raw = string_n(static_cast<std::uint64_t>(count) * 4, what);
        std::vector<float> out(count);
        for (std::size_t k = 0; k < count; ++k) {
            const auto* b = reinterpret_cast<const unsigned char*>(raw.data() + 4 * k);
            const std::uint32_t bits = static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
                                       (static_cast<std::uint32_t>(b[2]) << 16) |
                                       (static_cast<std::uint32_t>(b[3]) << 24);
            std::memcpy(&out[k], &bits, 4);
        }
        return out;
    }

    std::istream& in_;
    ReaderOptions opts_;
    TraceFileHeader header_;
    std::uint64_t index_ = 0;
    std::uint64_t offset_ = 0;
    std::uint64_t sample_bytes_ = 0;
    bool in_sample_ = false;
    bool trailing_checked_ = false;
};

/// Reads every sample of a container into memory. Convenience for tests and
/// small corpora; the pipeline streams through TraceReader instead.
inline std::vector<AttentionTrace> read_trace(std::istream& in, ReaderOptions opts = {}) {
    TraceReader reader(in, opts);
    std::vector<AttentionTrace> out;
    while (auto t = reader.next()) out.push_back(std::move(*t));
    return out;
}

// ---------------------------------------------------------------------------
// Annotation sidecar

struct AnnotationSet {
    std::map<std::string, SymbolicAnnotation> by_id;
    std::vector<std::string> warnings;
};

namespace detail {

[[noreturn]] inline void sidecar_error(ErrorCode code, std::uint64_t line, const std::string& msg) {
    Error e(code, "annotation line " + std::to_string(line) + ": " + msg);
    e.line = line;
    throw e;
}

inline std::uint32_t get_offset(const nlohmann::json& obj, const char* key, std::uint64_t line) {
    auto it = obj.find(key);
    if (it == obj.end() || !it->is_number_integer() || it->get<std::int64_t>() < 0 ||
        it->get<std::int64_t>() > 0xFFFFFFFFLL)
        sidecar_error(ErrorCode::Parse, line, std::string("missing or invalid '") + key + "'");
    return static_cast<std::uint32_t>(it->get<std::int64_t>());
}

inline std::optional<std::string> get_opt_string(const nlohmann::json& obj, const char* key,
                                                 std::uint64_t line) {
    auto it = obj.find(key);
    if (it == obj.end() || it->is_null()) return std::nullopt;
    if (!it->is_string()) sidecar_error(ErrorCode::Parse, line, std::string("'") + key + "' must be a string");
    return it->get<std::string>();
}

} // namespace detail

inline SymbolicAnnotation annotation_from_json(const nlohmann::json& obj, std::uint64_t line = 0) {
    using detail::sidecar_error;
    if (!obj.is_object()) sidecar_error(ErrorCode::Parse, line, "expected a JSON object");
    SymbolicAnnotation ann;
    auto id = obj.find("sample_id");
    if (id == obj.end() || !id->is_string()) sidecar_error(ErrorCode::Parse, line, "missing 'sample_id'");
    ann.sample_id = id->get<std::string>();

    if (auto w = obj.find("words"); w != obj.end()) {
        if (!w->is_array()) sidecar_error(ErrorCode::Parse, line, "'words' must be an array");
        for (const auto& jw : *w) {
            if (!jw.is_object()) sidecar_error(ErrorCode::Parse, line, "word entries must be objects");
            Word word;
            auto text = jw.find("text");
            if (text == jw.end() || !text->is_string()) sidecar_error(ErrorCode::Parse, line, "word missing 'text'");
            word.text = text->get<std::string>();
            word.start_char = detail::get_offset(jw, "start_char", line);
            word.end_char = detail::get_offset(jw, "end_char", line);
            word.pos_tag = detail::get_opt_string(jw, "pos", line);
            word.ner_label = detail::get_opt_string(jw, "ner", line);
            ann.words.push_back(std::move(word));
        }
    }
    auto spans = obj.find("spans");
    ann.spans_present = spans != obj.end();
    if (ann.spans_present) {
        if (!spans->is_array()) sidecar_error(ErrorCode::Parse, line, "'spans' must be an array");
        for (const auto& js : *spans) {
            if (!js.is_object()) sidecar_error(ErrorCode::Parse, line, "span entries must be objects");
            auto prop = js.find("property");
            if (prop == js.end() || !prop->is_string()) sidecar_error(ErrorCode::Parse, line, "span missing 'property'");
            auto p = property_from_name(prop->get<std::string>());
            if (!p)
                sidecar_error(ErrorCode::UnknownProperty, line,
                              "unknown property '" + prop->get<std::string>() + "'");
            ann.spans.push_back(Span{*p, detail::get_offset(js, "start_char", line),
                                     detail::get_offset(js, "end_char", line)});
        }
    }
    ann.dataset = detail::get_opt_string(obj, "dataset", line);
    ann.question = detail::get_opt_string(obj, "question", line);
    return ann;
}

inline nlohmann::json annotation_to_json(const SymbolicAnnotation& ann) {
    nlohmann::json obj;
    obj["sample_id"] = ann.sample_id;
    auto words = nlohmann::json::array();
    for (const auto& w : ann.words) {
        nlohmann::json jw;
        jw["text"] = w.text;
        jw["start_char"] = w.start_char;
        jw["end_char"] = w.end_char;
        jw["pos"] = w.pos_tag ? nlohmann::json(*w.pos_tag) : nlohmann::json(nullptr);
        jw["ner"] = w.ner_label ? nlohmann::json(*w.ner_label) : nlohmann::json(nullptr);
        words.push_back(std::move(jw));
    }
    obj["words"] = std::move(words);
    if (ann.spans_present) {
        auto spans = nlohmann::json::array();
        for (const auto& s : ann.spans) {
            spans.push_back({{"property", property_name(s.property)},
                             {"start_char", s.start_char},
                             {"end_char", s.end_char}});
        }
        obj["spans"] = std::move(spans);
    }
    if (ann.dataset) obj["dataset"] = *ann.dataset;
    if (ann.question) obj["question"] = *ann.question;
    return obj;
}

/// Parses the JSON-lines sidecar. Blank lines are skipped; a repeated
/// sample_id replaces the earlier entry and records a warning.
inline AnnotationSet read_annotations(std::istream& in) {
    AnnotationSet out;
    std::string line;
    std::uint64_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (text::trim(line).empty()) continue;
        nlohmann::json obj;
        try {
            obj = nlohmann::json::parse(line);
        } catch (const nlohmann::json::parse_error& e) {
            detail::sidecar_error(ErrorCode::Parse, lineno, std::string("malformed JSON: ") + e.what());
        }
        SymbolicAnnotation ann = annotation_from_json(obj, lineno);
        if (out.by_id.count(ann.sample_id)) {
            out.warnings.push_back("line " + std::to_string(lineno) + ": duplicate sample_id '" +
                                   ann.sample_id + "', keeping the later entry");
        }
        std::string key = ann.sample_id;
        out.by_id.insert_or_assign(std::move(key), std::move(ann));
    }
    return out;
}

inline void write_annotations(const std::vector<SymbolicAnnotation>& anns, std::ostream& out) {
    for (const auto& a : anns) out << annotation_to_json(a).dump() << '\n';
    if (!out) throw Error(ErrorCode::Io, "failed writing annotation sidecar");
}

} // namespace symloc
