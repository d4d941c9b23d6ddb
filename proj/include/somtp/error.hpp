#pragma once

#include <stdexcept>
#include <string>

namespace somtp {

/// Unreadable, truncated or version-mismatched file.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Inputs that are individually valid but do not fit together (checkpoint
/// built for a different horizon, dataset with another obstacle count, ...).
class MismatchError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace somtp
