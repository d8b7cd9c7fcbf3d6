// Copyright (c) 2026, The symloc authors
// SPDX-License-Identifier: Apache-2.0
//
// Temporary directories, file helpers and CLI invocation for tests.

#pragma once

#include <sys/wait.h>
#include <unistd.h>

#include <atomic>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "symloc/synthetic.hpp"
#include "symloc/trace_io.hpp"

namespace scratch {

namespace fs = std::filesystem;

class TempDir {
public:
    TempDir() {
        static std::atomic<int> counter{0};
        path_ = fs::temp_directory_path() /
                ("symloc-test-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
        fs::remove_all(path_);
        fs::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        fs::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const fs::path& path() const { return path_; }
    fs::path operator/(const std::string& name) const { return path_ / name; }

private:
    fs::path path_;
};

inline std::string read_file(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

inline void write_file(const fs::path& p, const std::string& bytes) {
    std::ofstream out(p, std::ios::binary);
    out << bytes;
}

struct CorpusFiles {
    fs::path traces;
    fs::path annotations;
};

inline CorpusFiles write_corpus(const TempDir& dir, const symloc::SyntheticCorpus& c) {
    CorpusFiles f{dir / "traces.symt", dir / "annotations.jsonl"};
    {
        std::ofstream out(f.traces, std::ios::binary);
        symloc::write_trace(c.traces, out);
    }
    std::ofstream out(f.annotations, std::ios::binary);
    symloc::write_annotations(c.annotations, out);
    return f;
}

struct RunResult {
    int status = -1;
    std::string out;
    std::string err;
};

/// Runs the CLI with `args` (already shell-quoted), capturing both streams.
inline RunResult run_cli(const TempDir& dir, const std::string& args) {
    const auto out = dir / "stdout.txt", err = dir / "stderr.txt";
    const std::string cmd =
        std::string("'") + SYMLOC_CLI_PATH + "' " + args + " >'" + out.string() + "' 2>'" + err.string() + "'";
    const int raw = std::system(cmd.c_str());
    RunResult r;
    r.status = WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
    r.out = read_file(out);
    r.err = read_file(err);
    return r;
}

inline std::string q(const fs::path& p) { return "'" + p.string() + "'"; }

} // namespace scratch
