#pragma once

#include <stdexcept>
#include <string>

namespace pvmix {

// malformed input files, inconsistent dimensions, domain violations in data
struct DataError : std::runtime_error {
  explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

// non-finite intermediates, decreasing objective, failed iterations
struct NumericalError : std::runtime_error {
  explicit NumericalError(const std::string& msg) : std::runtime_error(msg) {}
};

// no valid starting configuration could be drawn
struct InitError : std::runtime_error {
  explicit InitError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace pvmix
