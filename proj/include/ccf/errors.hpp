#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace ccf {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A scalar argument is outside its documented domain.
class InvalidParameter : public Error {
 public:
  using Error::Error;
};

/// Tensor extents do not agree with what an operation requires.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// Malformed input file. `line()` is 1-based; 0 means "not line-oriented".
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t line = 0)
      : Error(line == 0 ? what : "line " + std::to_string(line) + ": " + what), line_(line) {}

  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

/// Training produced a non-finite or exploding loss.
class DivergenceError : public Error {
 public:
  DivergenceError(const std::string& what, std::size_t epoch, std::size_t step)
      : Error(what), epoch_(epoch), step_(step) {}

  std::size_t epoch() const noexcept { return epoch_; }
  std::size_t step() const noexcept { return step_; }

 private:
  std::size_t epoch_;
  std::size_t step_;
};

/// Invalid experiment configuration. `pointer()` locates the offending
/// value as a JSON pointer, e.g. "/train/epochs".
class ConfigError : public InvalidParameter {
 public:
  ConfigError(const std::string& pointer, const std::string& what)
      : InvalidParameter((pointer.empty() ? std::string("/") : pointer) + ": " + what), pointer_(pointer) {}

  const std::string& pointer() const noexcept { return pointer_; }

 private:
  std::string pointer_;
};

/// One or more classes required by a per-class computation have no samples.
class MissingClassError : public Error {
 public:
  explicit MissingClassError(std::vector<std::size_t> classes)
      : Error(describe(classes)), classes_(std::move(classes)) {}

  const std::vector<std::size_t>& classes() const noexcept { return classes_; }

 private:
  static std::string describe(const std::vector<std::size_t>& classes) {
    std::string s = "no samples for class";
    s += classes.size() == 1 ? " " : "es ";
    for (std::size_t i = 0; i < classes.size(); ++i) {
      if (i) s += ", ";
      s += std::to_string(classes[i]);
    }
    return s;
  }

  std::vector<std::size_t> classes_;
};

}  // namespace ccf
