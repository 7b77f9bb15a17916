#pragma once

#include <stdexcept>
#include <string>

namespace lobit {

// Malformed serialized data (bad magic, truncation, inconsistent lengths).
// Argument/contract violations use std::invalid_argument instead.
class FormatError : public std::runtime_error {
 public:
  explicit FormatError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace lobit
