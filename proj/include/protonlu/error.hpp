#pragma once

#include <stdexcept>
#include <string>

namespace protonlu {

// Single exception type for all contract violations: parse errors,
// validation errors, shape mismatches, I/O failures. The message carries
// the context (op name, shapes, line numbers).
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& message) : std::runtime_error(message) {}
};

}  // namespace protonlu
