#pragma once

#include <stdexcept>
#include <string>

namespace spidernet {

// Base for every failure the library reports. Subclasses name the category so
// the CLI can emit a single-line diagnostic without inspecting messages.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
  virtual const char* category() const noexcept { return "error"; }
};

class StructuralError : public Error {
 public:
  using Error::Error;
  const char* category() const noexcept override { return "structural error"; }
};

class InputError : public Error {
 public:
  using Error::Error;
  const char* category() const noexcept override { return "input error"; }
};

class ConfigError : public Error {
 public:
  using Error::Error;
  const char* category() const noexcept override { return "configuration error"; }
};

class NumericError : public Error {
 public:
  using Error::Error;
  const char* category() const noexcept override { return "numeric error"; }
};

class FormatError : public Error {
 public:
  using Error::Error;
  const char* category() const noexcept override { return "format error"; }
};

class RunError : public Error {
 public:
  using Error::Error;
  const char* category() const noexcept override { return "run error"; }
};

}  // namespace spidernet
