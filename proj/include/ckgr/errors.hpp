#pragma once

#include <stdexcept>
#include <string>

namespace ckgr {

// Exit-code classes used by the CLI: usage = 1, data = 2, numerical = 3.
enum class ErrorClass { usage = 1, data = 2, numerical = 3 };

class Error : public std::runtime_error {
 public:
  Error(ErrorClass cls, const std::string& what) : std::runtime_error(what), cls_(cls) {}
  ErrorClass error_class() const noexcept { return cls_; }

 private:
  ErrorClass cls_;
};

class UsageError : public Error {
 public:
  explicit UsageError(const std::string& what) : Error(ErrorClass::usage, what) {}
};

/// Malformed input text; the message carries the file and line number.
class ParseError : public Error {
 public:
  explicit ParseError(const std::string& what) : Error(ErrorClass::data, what) {}
};

/// Missing node, relation, embedding or file.
class LookupError : public Error {
 public:
  explicit LookupError(const std::string& what) : Error(ErrorClass::data, what) {}
};

class ShapeError : public Error {
 public:
  explicit ShapeError(const std::string& what) : Error(ErrorClass::data, what) {}
};

/// Input outside an operation's domain (zero-norm vector, step out of range, ...).
class DomainError : public Error {
 public:
  explicit DomainError(const std::string& what) : Error(ErrorClass::data, what) {}
};

class NumericalError : public Error {
 public:
  explicit NumericalError(const std::string& what) : Error(ErrorClass::numerical, what) {}
};

}  // namespace ckgr
