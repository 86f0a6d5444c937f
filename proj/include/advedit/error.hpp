#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace advedit {

// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t position)
      : Error(what + " at position " + std::to_string(position)), position_(position) {}

  std::size_t position() const noexcept { return position_; }

 private:
  std::size_t position_;
};

class EditError : public Error {
 public:
  using Error::Error;
};

// Raised by apply_script; `position` is the 0-based index of the offending edit.
class ScriptError : public EditError {
 public:
  ScriptError(const std::string& what, std::size_t position)
      : EditError("edit #" + std::to_string(position + 1) + " of script: " + what),
        position_(position) {}

  std::size_t position() const noexcept { return position_; }

 private:
  std::size_t position_;
};

class KernelError : public Error {
 public:
  using Error::Error;
};

class ModelError : public Error {
 public:
  using Error::Error;
};

class AttackError : public Error {
 public:
  using Error::Error;
};

class DatasetError : public Error {
 public:
  using Error::Error;
};

}  // namespace advedit
