#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace nerkd {

// Base class for every error raised by the toolkit.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed input text (CoNLL, JSONL, templates). Carries a 1-based line
// number when one is known, 0 otherwise.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t line = 0)
      : Error(line ? "line " + std::to_string(line) + ": " + what : what),
        line_(line) {}

  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

// Caller violated an operation precondition.
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

// LLM endpoint or cache failure.
class TransportError : public Error {
 public:
  TransportError(const std::string& what, int last_status = 0)
      : Error(what), last_status_(last_status) {}

  int last_status() const noexcept { return last_status_; }

 private:
  int last_status_;
};

class CacheMiss : public TransportError {
 public:
  explicit CacheMiss(const std::string& key)
      : TransportError("cache miss: " + key) {}
};

}  // namespace nerkd
