#include "fvd/process.hpp"

#include <cerrno>
#include <csignal>
#include <cstdio>
#include <thread>

#include <fcntl.h>
#include <sys/wait.h>
#include <unistd.h>

#include <fmt/core.h>

#include "fvd/error.hpp"

namespace fvd
{

std::string shell_quote(const std::string & text)
{
  std::string out = "'";
  for (char c : text) {
    if (c == '\'') {
      out += "'\\''";
    } else {
      out += c;
    }
  }
  out += '\'';
  return out;
}

std::string substitute(const std::string & tmpl, const std::map<std::string, std::string> & values)
{
  std::string out = tmpl;
  for (const auto & [name, value] : values) {
    const std::string key = "{" + name + "}";
    const std::string quoted = shell_quote(value);
    for (std::size_t pos = out.find(key); pos != std::string::npos;
         pos = out.find(key, pos + quoted.size())) {
      out.replace(pos, key.size(), quoted);
    }
  }
  return out;
}

ProcessResult run_shell(const std::string & command, const std::filesystem::path & cwd,
                        std::chrono::milliseconds timeout)
{
  int pipe_fds[2];
  if (pipe(pipe_fds) != 0) {
    throw IoError("pipe() failed");
  }
  const pid_t pid = fork();
  if (pid < 0) {
    close(pipe_fds[0]);
    close(pipe_fds[1]);
    throw IoError("fork() failed");
  }
  if (pid == 0) {
    setpgid(0, 0);
    dup2(pipe_fds[1], STDOUT_FILENO);
    dup2(pipe_fds[1], STDERR_FILENO);
    close(pipe_fds[0]);
    close(pipe_fds[1]);
    if (!cwd.empty() && chdir(cwd.c_str()) != 0) {
      _exit(126);
    }
    execl("/bin/sh", "sh", "-c", command.c_str(), static_cast<char *>(nullptr));
    _exit(127);
  }
  setpgid(pid, pid);
  close(pipe_fds[1]);
  fcntl(pipe_fds[0], F_SETFL, fcntl(pipe_fds[0], F_GETFL) | O_NONBLOCK);

  ProcessResult result;
  const auto deadline = std::chrono::steady_clock::now() + timeout;
  int status = 0;
  bool exited = false;
  char buf[4096];
  auto drain = [&] {
    for (;;) {
      const ssize_t n = read(pipe_fds[0], buf, sizeof(buf));
      if (n > 0) {
        result.output.append(buf, static_cast<std::size_t>(n));
      } else {
        break;
      }
    }
  };
  while (!exited) {
    drain();
    const pid_t r = waitpid(pid, &status, WNOHANG);
    if (r == pid) {
      exited = true;
      break;
    }
    if (std::chrono::steady_clock::now() >= deadline) {
      kill(-pid, SIGKILL);
      waitpid(pid, &status, 0);
      drain();
      close(pipe_fds[0]);
      throw TimeoutError(fmt::format("command timed out after {} ms: {}", timeout.count(), command));
    }
    std::this_thread::sleep_for(std::chrono::milliseconds(5));
  }
  // Grandchildren may still hold the pipe; read what is already there.
  drain();
  close(pipe_fds[0]);
  if (WIFEXITED(status)) {
    result.exit_code = WEXITSTATUS(status);
  } else if (WIFSIGNALED(status)) {
    result.exit_code = 128 + WTERMSIG(status);
  }
  return result;
}

}  // namespace fvd
