#ifndef CONTRACLIP_ERRORS_HPP
#define CONTRACLIP_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace contraclip {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Violated precondition on a size, range or flag.
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

class DimensionMismatch : public Error {
 public:
  using Error::Error;
};

class NonFinite : public Error {
 public:
  using Error::Error;
};

// Gradient norm fell below the stall tolerance: the field is flat here.
class Stalled : public Error {
 public:
  using Error::Error;
};

// Coincident poles, so gamma is undefined.
class DegenerateDipole : public Error {
 public:
  using Error::Error;
};

// Malformed or inconsistent document.
class FormatError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace contraclip

#endif  // CONTRACLIP_ERRORS_HPP
