#pragma once

#include <stdexcept>
#include <string>

namespace sta {

// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Invalid user input: malformed configs, impossible shapes, bad flags.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Operand dimensions that do not agree with the layer they are used with.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// A serialized or hand-assembled structure whose internal bookkeeping is
// inconsistent (pointer/mask mismatch, truncated file, bad magic).
class FormatError : public Error {
 public:
  using Error::Error;
};

// No capacity-legal tiling exists for a layer on the given array.
class InfeasibleError : public Error {
 public:
  using Error::Error;
};

// Training produced a non-finite loss.
class DivergenceError : public Error {
 public:
  using Error::Error;
};

}  // namespace sta
