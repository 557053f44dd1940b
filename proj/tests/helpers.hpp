#pragma once

#include <atomic>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <sys/wait.h>
#include <unistd.h>

namespace testutil {

// Fresh scratch directory per call; removed eagerly by the caller when it
// matters, otherwise left for the OS tmp reaper.
inline std::filesystem::path temp_dir(const std::string& tag) {
    static std::atomic<int> counter{0};
    const auto base = std::filesystem::temp_directory_path() /
                      ("bipen_" + tag + "_" + std::to_string(::getpid()) + "_" +
                       std::to_string(counter.fetch_add(1)));
    std::filesystem::create_directories(base);
    return base;
}

inline std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

inline void write_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    out << content;
}

struct CliResult {
    int exit_code = -1;
    std::string out;
    std::string err;
};

// Runs the installed binary through the shell, capturing streams to files.
// env_prefix lets callers prepend VAR=value assignments.
inline CliResult run_cli(const std::string& args, const std::string& env_prefix = "") {
    const auto dir = temp_dir("cli_io");
    const std::string out_path = (dir / "out.txt").string();
    const std::string err_path = (dir / "err.txt").string();
    const std::string cmd = (env_prefix.empty() ? "" : env_prefix + " ") +
                            std::string(BIPEN_CLI_PATH) + " " + args + " > " + out_path +
                            " 2> " + err_path;
    const int raw = std::system(cmd.c_str());
    CliResult r;
    r.exit_code = WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
    r.out = read_file(out_path);
    r.err = read_file(err_path);
    std::filesystem::remove_all(dir);
    return r;
}

}  // namespace testutil
