#pragma once

#include <stdexcept>
#include <string>

namespace hashtag {

// Precondition or argument violation (bad index, empty input, NaN, ...).
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A serialized artifact could not be parsed (bad magic, truncation, ...).
class FormatError : public Error {
 public:
  using Error::Error;
};

// A signature bundle does not describe the model it is checked against.
// Deliberately not a "compromised" verdict: a wrong bundle is an operator
// mistake, not evidence of tampering.
class StructuralMismatch : public Error {
 public:
  using Error::Error;
};

}  // namespace hashtag
