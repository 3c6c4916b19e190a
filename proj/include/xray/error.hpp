#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace xray {

enum class ErrorKind {
  Usage,       // bad arguments or unknown rule ids
  Parse,       // malformed trace, log or JSON input
  Validation,  // input is well-formed but violates a contract
  Io,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

// Parse error pinned to a line of a named input ("dev.log:12: raw length ...").
class ParseError : public Error {
 public:
  ParseError(const std::string& source, std::size_t line, const std::string& reason)
      : Error(ErrorKind::Parse, source + ":" + std::to_string(line) + ": " + reason),
        line_(line),
        reason_(reason) {}

  std::size_t line() const noexcept { return line_; }
  const std::string& reason() const noexcept { return reason_; }

 private:
  std::size_t line_;
  std::string reason_;
};

}  // namespace xray
