#pragma once

#include <sstream>
#include <stdexcept>
#include <string>

namespace panofc {

// Base class for every error thrown by this library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Shape or size mismatch between tensors / grids.
class DimError : public Error {
 public:
  using Error::Error;
};

// A structurally valid call with an unsupported configuration
// (e.g. even convolution kernel, zero-sized resize target).
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Malformed or truncated serialized data.  Messages carry a byte offset.
class FormatError : public Error {
 public:
  using Error::Error;
};

// Bad command-line usage; the CLI maps this to exit code 2.
class UsageError : public Error {
 public:
  using Error::Error;
};

// Numerical failure during optimization (NaN/inf gradients, ...).
class TrainError : public Error {
 public:
  using Error::Error;
};

// Semantically invalid input data fed to an op (e.g. missing depth
// under a mask that requires it, empty fuse input).
class InputError : public Error {
 public:
  using Error::Error;
};

// A target label outside the valid class range.
class LabelError : public Error {
 public:
  using Error::Error;
};

// Scene specification that cannot be realized.
class GenError : public Error {
 public:
  using Error::Error;
};

// File that cannot be opened, read, or written.
class IoError : public Error {
 public:
  using Error::Error;
};

namespace detail {
inline void str_append(std::ostringstream&) {}

template <typename T, typename... Rest>
void str_append(std::ostringstream& os, const T& v, const Rest&... rest) {
  os << v;
  str_append(os, rest...);
}
}  // namespace detail

// Concatenates all arguments into a std::string via operator<<.
template <typename... Args>
std::string str(const Args&... args) {
  std::ostringstream os;
  detail::str_append(os, args...);
  return os.str();
}

}  // namespace panofc
