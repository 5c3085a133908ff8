#pragma once

// Runs the geolo executable in a shell and captures its streams and exit code.

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <string>

#include "support/synthetic.hpp"

namespace geolo::testing {

struct CliRun {
  int exit_code = -1;
  std::string out;
  std::string err;
};

inline std::string shell_quote(const std::string& s) {
  std::string q = "'";
  for (const char c : s) q += c == '\'' ? std::string("'\\''") : std::string(1, c);
  return q + "'";
}

/// `args` is appended verbatim; `stdin_file` is redirected when non-empty.
inline CliRun run_cli(const std::filesystem::path& cli, const std::string& args, const std::filesystem::path& scratch,
                      const std::filesystem::path& stdin_file = {}) {
  const auto out = scratch / "cli.stdout";
  const auto err = scratch / "cli.stderr";
  std::string cmd = shell_quote(cli.string()) + " " + args + " >" + shell_quote(out.string()) + " 2>" +
                    shell_quote(err.string());
  if (!stdin_file.empty()) cmd += " <" + shell_quote(stdin_file.string());
  const int status = std::system(cmd.c_str());
  CliRun run;
  run.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  run.out = read_file(out);
  run.err = read_file(err);
  return run;
}

}  // namespace geolo::testing
