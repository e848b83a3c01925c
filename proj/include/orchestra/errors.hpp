#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace orchestra {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Speaker and listener coincide in the horizontal plane.
class DegenerateGeometry : public Error {
 public:
  using Error::Error;
};

class InvalidLayout : public Error {
 public:
  using Error::Error;
};

/// Text parse failure. `position()` is a 1-based line number for config
/// files and a 0-based byte offset for protocol datagrams.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t position)
      : Error(what), position_(position) {}
  std::size_t position() const noexcept { return position_; }

 private:
  std::size_t position_;
};

class InsufficientDecay : public Error {
 public:
  using Error::Error;
};

class UnknownSource : public Error {
 public:
  using Error::Error;
};

class UnknownClip : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace orchestra
