#ifndef KGE_ERROR_H_
#define KGE_ERROR_H_

#include <stdexcept>
#include <string>

namespace kge {

// Root of every exception thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Operand shapes do not agree.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// A documented precondition was violated by the caller.
class ContractError : public Error {
 public:
  using Error::Error;
};

// A scalar argument is outside its valid range.
class ParameterError : public Error {
 public:
  using Error::Error;
};

// Malformed input text.
class ParseError : public Error {
 public:
  ParseError(const std::string& source, std::size_t line, const std::string& what)
      : Error(source + ":" + std::to_string(line) + ": " + what), line_(line) {}

  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

// A name is missing from a fixed vocabulary.
class VocabularyError : public Error {
 public:
  using Error::Error;
};

// Filesystem failures and container format problems.
class IoError : public Error {
 public:
  using Error::Error;
};

// Non-finite values during training.
class NumericError : public Error {
 public:
  using Error::Error;
};

}  // namespace kge

#endif  // KGE_ERROR_H_
