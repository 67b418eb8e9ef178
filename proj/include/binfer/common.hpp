#pragma once

#include <stdexcept>
#include <string>

namespace binfer {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Raised when a graph evaluation hits a numeric domain violation
// (log of a non-positive value, division by zero, ...).
class EvalError : public Error {
 public:
  EvalError(const std::string& what, std::uint32_t node)
      : Error(what + " (node " + std::to_string(node) + ")"), node_(node) {}
  std::uint32_t node() const { return node_; }

 private:
  std::uint32_t node_;
};

class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace binfer
