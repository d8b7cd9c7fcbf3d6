// Copyright (c) 2026, The symloc authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace symloc {

// Codes are stable: they appear in machine-readable error reports and map
// one-to-one onto CLI exit statuses.
enum class ErrorCode : std::uint8_t {
    Io = 2,
    Format = 3,
    UnsupportedVersion = 4,
    Truncated = 5,
    Validation = 6,
    Parse = 7,
    UnknownProperty = 8,
    Identity = 9,
    EmptySymbolSet = 10,
    Aggregation = 11,
    InsufficientData = 12,
    MissingChannel = 13,
    Corpus = 14,
    Transform = 15,
    Type = 16,
    Config = 17,
    VerifyMismatch = 18,
};

inline std::string_view error_code_name(ErrorCode code) {
    switch (code) {
    case ErrorCode::Io: return "E_IO";
    case ErrorCode::Format: return "E_FORMAT";
    case ErrorCode::UnsupportedVersion: return "E_VERSION";
    case ErrorCode::Truncated: return "E_TRUNCATED";
    case ErrorCode::Validation: return "E_VALIDATION";
    case ErrorCode::Parse: return "E_PARSE";
    case ErrorCode::UnknownProperty: return "E_UNKNOWN_PROPERTY";
    case ErrorCode::Identity: return "E_IDENTITY";
    case ErrorCode::EmptySymbolSet: return "E_EMPTY_SYMBOL_SET";
    case ErrorCode::Aggregation: return "E_AGGREGATION";
    case ErrorCode::InsufficientData: return "E_INSUFFICIENT_DATA";
    case ErrorCode::MissingChannel: return "E_MISSING_CHANNEL";
    case ErrorCode::Corpus: return "E_CORPUS";
    case ErrorCode::Transform: return "E_TRANSFORM";
    case ErrorCode::Type: return "E_TYPE";
    case ErrorCode::Config: return "E_CONFIG";
    case ErrorCode::VerifyMismatch: return "E_VERIFY";
    }
    return "E_UNKNOWN";
}

inline int exit_status(ErrorCode code) { return static_cast<int>(code); }

/// Single exception type for the library. Context fields are filled where
/// the failing site knows them (sample identity, stream position, line).
class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& message)
        : std::runtime_error(message), code_(code) {}

    ErrorCode code() const noexcept { return code_; }

    std::optional<std::string> sample_id;
    std::optional<std::uint64_t> sample_index;
    std::optional<std::uint64_t> byte_offset;
    std::optional<std::uint64_t> line;
    std::optional<std::uint64_t> expected_bytes;
    std::optional<std::uint64_t> available_bytes;

private:
    ErrorCode code_;
};

} // namespace symloc
