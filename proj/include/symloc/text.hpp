// Copyright (c) 2026, The symloc authors
// SPDX-License-Identifier: Apache-2.0
//
// Small ASCII-level string helpers shared by the annotator, the task
// transforms and the answer judge. Non-ASCII bytes pass through untouched.

#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace symloc::text {

inline bool is_space(char c) {
    return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
}

inline bool is_ascii_punct(char c) {
    auto u = static_cast<unsigned char>(c);
    return (u >= 33 && u <= 47) || (u >= 58 && u <= 64) || (u >= 91 && u <= 96) ||
           (u >= 123 && u <= 126);
}

inline bool is_alnum(char c) {
    return (c >= '0' && c <= '9') || (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z');
}

inline std::string to_lower(std::string_view s) {
    std::string out(s);
    for (char& c : out) {
        if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
    }
    return out;
}

inline std::string_view trim(std::string_view s) {
    while (!s.empty() && is_space(s.front())) s.remove_prefix(1);
    while (!s.empty() && is_space(s.back())) s.remove_suffix(1);
    return s;
}

inline std::string collapse_whitespace(std::string_view s) {
    std::string out;
    out.reserve(s.size());
    bool pending = false;
    for (char c : trim(s)) {
        if (is_space(c)) {
            pending = true;
            continue;
        }
        if (pending) out.push_back(' ');
        pending = false;
        out.push_back(c);
    }
    return out;
}

/// Lowercase, trim, collapse internal whitespace, strip terminal punctuation.
/// Used for option distinctness in the task transforms.
inline std::string normalize_option(std::string_view s) {
    std::string out = collapse_whitespace(to_lower(s));
    while (!out.empty() && is_ascii_punct(out.back())) out.pop_back();
    while (!out.empty() && is_space(out.back())) out.pop_back();
    return out;
}

/// Lowercase, drop punctuation, collapse whitespace. Used by the answer judge.
inline std::string normalize_answer(std::string_view s) {
    std::string stripped;
    stripped.reserve(s.size());
    for (char c : s) {
        if (!is_ascii_punct(c)) stripped.push_back(c);
    }
    return collapse_whitespace(to_lower(stripped));
}

inline std::vector<std::string_view> split_whitespace(std::string_view s) {
    std::vector<std::string_view> out;
    std::size_t i = 0;
    while (i < s.size()) {
        while (i < s.size() && is_space(s[i])) ++i;
        std::size_t start = i;
        while (i < s.size() && !is_space(s[i])) ++i;
        if (i > start) out.push_back(s.substr(start, i - start));
    }
    return out;
}

inline std::size_t word_count(std::string_view s) { return split_whitespace(s).size(); }

inline std::vector<std::string_view> split(std::string_view s, char sep) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    for (std::size_t i = 0; i <= s.size(); ++i) {
        if (i == s.size() || s[i] == sep) {
            out.push_back(s.substr(start, i - start));
            start = i + 1;
        }
    }
    return out;
}

/// FNV-1a, 64 bit. Stable across platforms; used for seeding and corpus hashes.
class Fnv1a64 {
public:
    void update(std::string_view bytes) {
        for (unsigned char c : bytes) {
            state_ ^= c;
            state_ *= 0x100000001b3ULL;
        }
    }
    void update_u64(std::uint64_t v) {
        for (int i = 0; i < 8; ++i) {
            state_ ^= (v >> (8 * i)) & 0xFFu;
            state_ *= 0x100000001b3ULL;
        }
    }
    std::uint64_t digest() const { return state_; }

private:
    std::uint64_t state_ = 0xcbf29ce484222325ULL;
};

inline std::string hex64(std::uint64_t v) {
    static constexpr char digits[] = "0123456789abcdef";
    std::string out(16, '0');
    for (int i = 15; i >= 0; --i) {
        out[static_cast<std::size_t>(i)] = digits[v & 0xF];
        v >>= 4;
    }
    return out;
}

} // namespace symloc::text
