#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace foodsg {

// Base for every error raised by the library. Rejections that are part of the
// normal data flow (an undecodable image, an accounting violation) are
// returned as values instead.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ParseError : public Error {
 public:
  ParseError(std::size_t line, const std::string& what)
      : Error("line " + std::to_string(line) + ": " + what), line_(line) {}

  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

// A value violates a type invariant; `subject` names the offending record.
class InvariantError : public Error {
 public:
  InvariantError(std::string subject, const std::string& what)
      : Error(subject.empty() ? what : subject + ": " + what), subject_(std::move(subject)) {}

  const std::string& subject() const { return subject_; }

 private:
  std::string subject_;
};

class IoError : public Error {
 public:
  using Error::Error;
};

class StageOrderError : public Error {
 public:
  using Error::Error;
};

class NotFoundError : public Error {
 public:
  using Error::Error;
};

}  // namespace foodsg
