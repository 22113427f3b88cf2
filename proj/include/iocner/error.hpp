#pragma once

#include <stdexcept>
#include <string>

namespace iocner {

// Base of every error the library throws. CLI exit codes are chosen by the
// concrete type.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

// Malformed input: bad line layout, BIO violation, invalid UTF-8.
class ParseError : public Error {
 public:
  using Error::Error;
};

// A label string, or a label scheme, that does not match the expected one.
class SchemeError : public Error {
 public:
  using Error::Error;
};

// Gold and predicted sequences that do not line up.
class AlignmentError : public Error {
 public:
  using Error::Error;
};

class EmptyCorpusError : public Error {
 public:
  using Error::Error;
};

class NumericError : public Error {
 public:
  using Error::Error;
};

class CheckpointError : public Error {
 public:
  using Error::Error;
};

}  // namespace iocner
