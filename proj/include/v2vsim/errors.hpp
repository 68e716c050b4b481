#pragma once

#include <stdexcept>
#include <string>

namespace v2v {

// Invalid configuration; the message names the violated invariant or key.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Caller broke an operation's precondition (wrong widths, action counts, ...).
class ContractError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// Non-finite loss or intermediate during optimization.
class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Checkpoint could not be read or does not match the expected architecture.
class LoadError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class FileError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace v2v
