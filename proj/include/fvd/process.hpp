#pragma once

#include <chrono>
#include <filesystem>
#include <map>
#include <string>

namespace fvd
{

struct ProcessResult
{
  int exit_code = 0;
  std::string output;  // stdout and stderr, interleaved
};

/// Runs `command` through /bin/sh with `cwd` as working directory. On timeout
/// the whole process group is killed and TimeoutError is thrown.
ProcessResult run_shell(const std::string & command, const std::filesystem::path & cwd,
                        std::chrono::milliseconds timeout);

/// Single-quotes `text` for /bin/sh.
std::string shell_quote(const std::string & text);

/// Replaces every "{name}" in `tmpl` with the shell-quoted value. Unknown
/// placeholders are left as is.
std::string substitute(const std::string & tmpl, const std::map<std::string, std::string> & values);

}  // namespace fvd
