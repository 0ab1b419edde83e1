#pragma once

#include <stdexcept>
#include <string>

namespace m2e {

// Error taxonomy. The CLI maps each family onto a distinct exit code:
// InputError -> 2, DomainError -> 3, MissingStateError -> 4.

/// Bad or unreadable input: missing files, undecodable rasters, shape mismatches.
class InputError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Input is well-formed but semantically unusable (no pose coverage, invalid part index).
class DomainError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A required checkpoint or trained model state is absent.
class MissingStateError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Training diverged: a loss term went non-finite or past the abort threshold.
class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace m2e
