#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace fvd
{

// Base of every error the library throws. Errors deriving from InputError are
// caused by bad inputs (files, parameters, configs); everything else is a
// runtime failure (external processes, I/O, optimization).
class Error : public std::runtime_error
{
public:
  using std::runtime_error::runtime_error;
};

class InputError : public Error
{
public:
  using Error::Error;
};

class RuntimeFailure : public Error
{
public:
  using Error::Error;
};

class InvalidGeometry : public InputError
{
public:
  using InputError::InputError;
};

class InvalidParameter : public InputError
{
public:
  using InputError::InputError;
};

class DomainError : public InputError
{
public:
  using InputError::InputError;
};

class ValidationError : public InputError
{
public:
  using InputError::InputError;
};

class InvalidEnsemble : public InputError
{
public:
  using InputError::InputError;
};

class ConfigError : public InputError
{
public:
  ConfigError(std::string key_path, const std::string & what)
  : InputError(key_path.empty() ? what : key_path + ": " + what), key_path_(std::move(key_path)) {}

  const std::string & key_path() const noexcept { return key_path_; }

private:
  std::string key_path_;
};

/// Raised while reading a text file; carries the 1-based line number.
class ParseError : public InputError
{
public:
  ParseError(const std::string & source, std::size_t line, const std::string & what)
  : InputError(source + ":" + std::to_string(line) + ": " + what), line_(line) {}

  std::size_t line() const noexcept { return line_; }

private:
  std::size_t line_;
};

class EmptyEvaluation : public InputError
{
public:
  using InputError::InputError;
};

class IoError : public RuntimeFailure
{
public:
  using RuntimeFailure::RuntimeFailure;
};

class GradientEvaluationError : public RuntimeFailure
{
public:
  using RuntimeFailure::RuntimeFailure;
};

class OptimizationFailure : public RuntimeFailure
{
public:
  OptimizationFailure(const std::string & what, std::string trace)
  : RuntimeFailure(what), trace_(std::move(trace)) {}

  const std::string & trace() const noexcept { return trace_; }

private:
  std::string trace_;
};

class RoundFailure : public RuntimeFailure
{
public:
  RoundFailure(const std::string & what, std::string output)
  : RuntimeFailure(what), output_(std::move(output)) {}

  const std::string & output() const noexcept { return output_; }

private:
  std::string output_;
};

class TimeoutError : public RuntimeFailure
{
public:
  using RuntimeFailure::RuntimeFailure;
};

class GenerationError : public RuntimeFailure
{
public:
  using RuntimeFailure::RuntimeFailure;
};

}  // namespace fvd
