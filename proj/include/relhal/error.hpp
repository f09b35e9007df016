#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace relhal {

// Input that does not conform to one of the toolkit's file formats.
class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& what, std::size_t line, std::size_t offset = 0)
      : std::runtime_error("line " + std::to_string(line) + ", offset " + std::to_string(offset) +
                           ": " + what),
        line_(line),
        offset_(offset) {}

  std::size_t line() const noexcept { return line_; }
  std::size_t offset() const noexcept { return offset_; }

 private:
  std::size_t line_;
  std::size_t offset_;
};

// A value or configuration that violates a documented contract.
class ValidationError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// A remote service could not be reached or answered outside its wire contract.
class TransportError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace relhal
