#pragma once

#include <stdexcept>
#include <string>

namespace cuspfa {

/// Linear-algebra or sampling breakdowns (non-PD precision, divergent state).
class numerical_error : public std::runtime_error {
 public:
  explicit numerical_error(const std::string& what) : std::runtime_error(what) {}
};

class io_error : public std::runtime_error {
 public:
  explicit io_error(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace cuspfa
