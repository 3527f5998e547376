// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace shr {

// Precondition violated: bad shape, out-of-range position, unknown name.
class DomainError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Input is well-formed but the operation is undefined on it (zero
// normalizer, zero direction vector).
class DegenerateInputError : public DomainError {
 public:
  using DomainError::DomainError;
};

// An object was used against a state it was not produced from.
class ContractViolation : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

class TrainingError : public std::runtime_error {
 public:
  TrainingError(const std::string& what, std::size_t batch_index)
      : std::runtime_error(what + " (batch " + std::to_string(batch_index) + ")"),
        batch_index_(batch_index) {}

  std::size_t batch_index() const noexcept { return batch_index_; }

 private:
  std::size_t batch_index_;
};

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace shr
