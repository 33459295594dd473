#pragma once

#include <stdexcept>
#include <string>

namespace layerfusion {

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Tensor shapes disagree with an operation's contract.
struct ShapeError : Error {
  using Error::Error;
};

struct InvalidArgument : Error {
  using Error::Error;
};

// Gradient requested through a node recorded outside the differentiable op set.
struct UnsupportedOp : Error {
  using Error::Error;
};

struct DeterminismError : Error {
  using Error::Error;
};

struct InvalidBox : Error {
  using Error::Error;
};

// Malformed checkpoint, dataset or config file.
struct FormatError : Error {
  using Error::Error;
};

struct IoError : Error {
  using Error::Error;
};

}  // namespace layerfusion
