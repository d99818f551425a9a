#pragma once

#include <stdexcept>
#include <string>

namespace prgflow {

// Parameters outside the valid domain of a warp (e.g. 1 + s <= 0).
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

// Numerically degenerate input: empty masks, rank-deficient systems,
// textureless images.
class DegenerateError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Mismatched image, tensor or list shapes.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Bad files, unreadable corpora, malformed configs. The CLI maps these to exit
// code 2.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace prgflow
